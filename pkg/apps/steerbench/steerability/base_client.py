"""
Base client for OpenAI-compatible chat-completions endpoints.
"""

import asyncio
import logging
from dataclasses import dataclass
from typing import Any, Awaitable, Callable, Dict, Optional

import httpx
from azure.core.exceptions import ClientAuthenticationError
from azure.identity import DefaultAzureCredential
from opentelemetry import metrics, trace

from steerability.errors import CredentialError, TransportFailureError
from steerability.settings import EndpointSettings

# Configure logging
logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)
meter = metrics.get_meter(__name__)
request_counter = meter.create_counter("steerbench.chat.requests", description="Chat-completion requests sent")
retry_counter = meter.create_counter("steerbench.chat.retries", description="Chat-completion requests retried")
failure_counter = meter.create_counter("steerbench.chat.failures", description="Requests that exhausted their retries")

AUTH_STATUS_CODES = (401, 403)


@dataclass
class ChatResult:
    """Text of the first choice plus transport bookkeeping."""
    text: str
    retries: int
    body: Dict[str, Any]


class BaseClient:
    """
    Base class for clients that send single-turn chat requests with retries.

    Only transport failures are retried: connection errors, timeouts and HTTP 4XX/5XX
    responses, with exponential backoff. Authentication failures are raised immediately.
    """

    def __init__(
        self,
        settings: EndpointSettings,
        transport: Optional[httpx.AsyncBaseTransport] = None,
        sleep: Callable[[float], Awaitable[None]] = asyncio.sleep,
    ):
        """
        Initialize the client.

        Args:
            settings: Endpoint URL, model name, credentials and retry policy
            transport: Optional httpx transport (e.g. an ASGI transport for the mock endpoint)
            sleep: Coroutine used between retries
        """
        self.settings = settings
        self._http = httpx.AsyncClient(timeout=settings.timeout, transport=transport)
        self._sleep = sleep
        self._credential: Optional[DefaultAzureCredential] = None

    async def __aenter__(self) -> "BaseClient":
        return self

    async def __aexit__(self, *exc_info) -> None:
        await self.aclose()

    async def aclose(self) -> None:
        await self._http.aclose()

    def _headers(self) -> Dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.settings.api_key:
            headers["Authorization"] = f"Bearer {self.settings.api_key}"
        elif self.settings.use_azure_ad:
            try:
                if self._credential is None:
                    self._credential = DefaultAzureCredential()
                token = self._credential.get_token(self.settings.azure_ad_scope)
            except ClientAuthenticationError as e:
                raise CredentialError(f"Azure AD authentication failed: {e}") from e
            headers["Authorization"] = f"Bearer {token.token}"
        return headers

    def create_payload(self, content: str, temperature: float = 0.0, **sampling: Any) -> Dict[str, Any]:
        """
        Build a single-user-turn chat-completions payload.

        Args:
            content: The user message
            temperature: Sampling temperature
            **sampling: Extra sampling fields; None values are dropped

        Returns:
            The request payload
        """
        payload: Dict[str, Any] = {
            "model": self.settings.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": temperature,
        }
        payload.update({key: value for key, value in sampling.items() if value is not None})
        return payload

    async def post_chat(self, payload: Dict[str, Any]) -> ChatResult:
        """
        Send a payload, retrying transport failures with exponential backoff.

        Raises:
            CredentialError: The endpoint rejected the credentials
            TransportFailureError: Every attempt failed at the transport level
        """
        url = self.settings.completions_url
        last_error = ""
        last_status: Optional[int] = None
        with tracer.start_as_current_span("chat_completion") as span:
            span.set_attribute("steerbench.model", self.settings.model)
            for attempt in range(self.settings.max_retries + 1):
                if attempt:
                    delay = self.settings.backoff_base * 2 ** (attempt - 1)
                    logger.warning(f"Retrying {url} in {delay:.1f}s (attempt {attempt + 1}): {last_error}")
                    await self._sleep(delay)
                    retry_counter.add(1, {"model": self.settings.model})
                request_counter.add(1, {"model": self.settings.model})
                try:
                    response = await self._http.post(url, json=payload, headers=self._headers())
                except httpx.TransportError as e:
                    last_error, last_status = f"{type(e).__name__}: {e}", None
                    continue
                if response.status_code in AUTH_STATUS_CODES:
                    span.set_attribute("steerbench.status_code", response.status_code)
                    raise CredentialError(f"Endpoint {url} rejected the credentials ({response.status_code})")
                if response.status_code >= 400:
                    last_error, last_status = f"HTTP {response.status_code}", response.status_code
                    continue
                try:
                    body = response.json()
                    text = body["choices"][0]["message"].get("content") or ""
                except (ValueError, KeyError, IndexError, TypeError) as e:
                    last_error, last_status = f"Malformed response body: {e}", response.status_code
                    continue
                span.set_attribute("steerbench.retries", attempt)
                return ChatResult(text=text, retries=attempt, body=body)
            span.set_attribute("steerbench.retries", self.settings.max_retries)
        failure_counter.add(1, {"model": self.settings.model})
        logger.error(f"Giving up on {url} after {self.settings.max_retries} retries: {last_error}")
        raise TransportFailureError(
            f"{url} failed after {self.settings.max_retries} retries: {last_error}",
            retries=self.settings.max_retries,
            status_code=last_status,
        )
