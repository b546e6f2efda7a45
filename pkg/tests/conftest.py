from typing import List

import httpx
import pytest

from steerability.settings import EndpointSettings

MOCK_BASE_URL = "http://mock/v1"


class SleepRecorder:
    """Stands in for asyncio.sleep so retry tests run instantly."""

    def __init__(self):
        self.delays: List[float] = []

    async def __call__(self, delay: float) -> None:
        self.delays.append(delay)


@pytest.fixture
def sleep_recorder():
    return SleepRecorder()


@pytest.fixture
def make_client(sleep_recorder):
    """Build a client of the given class wired to an in-process ASGI app."""
    def factory(client_cls, app, **settings):
        values = {"base_url": MOCK_BASE_URL, "model": "mock-model", "max_retries": 3, "backoff_base": 1.0}
        values.update(settings)
        client = client_cls(EndpointSettings(**values), transport=httpx.ASGITransport(app=app), sleep=sleep_recorder)
        return client

    return factory
