"""
Mock OpenAI-compatible chat-completions endpoint for offline runs and tests.
"""

import logging
import uuid
from typing import Callable, Dict, Iterable, Optional

from fastapi import FastAPI, HTTPException, Request

# Configure logging
logger = logging.getLogger(__name__)

Rewriter = Callable[[str], str]
FailurePolicy = Callable[[str], Optional[int]]


def echo_rewriter(prompt: str) -> str:
    """Return the whole user message."""
    return prompt


class CopyPasteRewriter:
    """Return the source text the prompt ends with, unchanged."""

    def __init__(self, sources: Iterable[str]):
        # longest first so a source that ends with another source wins
        self.sources = sorted(set(sources), key=len, reverse=True)

    def __call__(self, prompt: str) -> str:
        for source in self.sources:
            if prompt.endswith(source):
                return source
        return prompt.rsplit("\n\n", 1)[-1]


class ScriptedRewriter:
    """Look up the response by source text; unknown sources are copied."""

    def __init__(self, responses: Dict[str, str], prefix: str = ""):
        self.responses = responses
        self.prefix = prefix
        self._copy = CopyPasteRewriter(responses)

    def __call__(self, prompt: str) -> str:
        source = self._copy(prompt)
        return self.prefix + self.responses.get(source, source)


class FlakyPolicy:
    """Fail the first `failures` requests per prompt with `status`, or always for matching prompts."""

    def __init__(self, failures: int = 0, status: int = 503, always_fail_containing: Optional[str] = None):
        self.failures = failures
        self.status = status
        self.always_fail_containing = always_fail_containing
        self.seen: Dict[str, int] = {}

    def __call__(self, prompt: str) -> Optional[int]:
        if self.always_fail_containing and self.always_fail_containing in prompt:
            return self.status
        count = self.seen.get(prompt, 0)
        self.seen[prompt] = count + 1
        return self.status if count < self.failures else None


def create_mock_app(
    rewriter: Rewriter = echo_rewriter,
    failure_policy: Optional[FailurePolicy] = None,
    required_api_key: Optional[str] = None,
) -> FastAPI:
    """
    Build the mock endpoint application.

    Args:
        rewriter: Maps the last user message to the completion text
        failure_policy: Returns an HTTP status to fail a request with, or None
        required_api_key: When set, requests without this bearer token get 401

    Returns:
        The FastAPI app serving POST /v1/chat/completions
    """
    app = FastAPI(title="steerbench mock endpoint")
    app.state.requests = []

    @app.post("/v1/chat/completions")
    async def chat_completions(request: Request) -> Dict:
        if required_api_key and request.headers.get("authorization") != f"Bearer {required_api_key}":
            raise HTTPException(status_code=401, detail="Invalid API key")
        body = await request.json()
        messages = body.get("messages") or []
        if not messages:
            raise HTTPException(status_code=400, detail="messages must not be empty")
        prompt = messages[-1].get("content", "")
        app.state.requests.append(body)
        if failure_policy:
            status = failure_policy(prompt)
            if status:
                logger.debug(f"Mock endpoint failing request with {status}")
                raise HTTPException(status_code=status, detail="Injected failure")
        text = rewriter(prompt)
        response = {
            "id": f"chatcmpl-{uuid.uuid4().hex[:12]}",
            "object": "chat.completion",
            "model": body.get("model", "mock"),
            "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
        }
        if body.get("min_p") is not None:
            response["sampling_params"] = {"min_p": body["min_p"]}
        return response

    return app
