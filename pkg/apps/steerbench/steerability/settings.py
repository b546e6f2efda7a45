"""
Environment-driven settings for the chat-completion endpoints used by the harness.
"""

import logging
import os
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field

# Configure logging
logger = logging.getLogger(__name__)

# .env.<environment> first; values already set win over later files
load_dotenv(f".env.{os.getenv('STEERBENCH_ENV', 'development')}")
load_dotenv()

DEFAULT_BASE_URL = "http://localhost:8000/v1"


def _env_flag(name: str) -> bool:
    return os.getenv(name, "").strip().lower() in {"1", "true", "yes", "on"}


class EndpointSettings(BaseModel):
    """Connection settings for one OpenAI-compatible chat-completions endpoint."""
    base_url: str = DEFAULT_BASE_URL
    model: str = "default"
    api_key: Optional[str] = Field(default=None, repr=False)
    use_azure_ad: bool = False
    azure_ad_scope: str = "https://cognitiveservices.azure.com/.default"
    max_retries: int = Field(default=5, ge=0)
    backoff_base: float = Field(default=1.0, ge=0.0)
    timeout: float = Field(default=300.0, gt=0.0)

    @property
    def completions_url(self) -> str:
        url = self.base_url.rstrip("/")
        if url.endswith("/chat/completions"):
            return url
        return f"{url}/chat/completions"

    @classmethod
    def from_env(cls, prefix: str = "STEERBENCH", **overrides) -> "EndpointSettings":
        """
        Build settings from environment variables, letting explicit overrides win.

        Args:
            prefix: Either "STEERBENCH" for the rewrite model or "STEERBENCH_JUDGE" for the judge.
            **overrides: Values that take precedence over the environment (None values are ignored).

        Returns:
            The resolved EndpointSettings
        """
        values = {
            "base_url": os.getenv(f"{prefix}_BASE_URL") or os.getenv("STEERBENCH_BASE_URL") or DEFAULT_BASE_URL,
            "model": os.getenv(f"{prefix}_MODEL") or os.getenv("STEERBENCH_MODEL") or "default",
            "api_key": os.getenv(f"{prefix}_API_KEY") or os.getenv("STEERBENCH_API_KEY"),
            "use_azure_ad": _env_flag("STEERBENCH_USE_AZURE_AD"),
            "max_retries": int(os.getenv("STEERBENCH_MAX_RETRIES", "5")),
            "backoff_base": float(os.getenv("STEERBENCH_BACKOFF_BASE", "1.0")),
            "timeout": float(os.getenv("STEERBENCH_TIMEOUT", "300")),
        }
        values.update({key: value for key, value in overrides.items() if value is not None})
        settings = cls(**values)
        logger.debug(f"Resolved endpoint settings for {prefix}: {settings.completions_url} ({settings.model})")
        return settings


def max_context_tokens() -> int:
    """Context length recorded with each run, overridable via STEERBENCH_MAX_CONTEXT_TOKENS."""
    return int(os.getenv("STEERBENCH_MAX_CONTEXT_TOKENS", "32000"))


def appinsights_connection_string() -> Optional[str]:
    return os.getenv("APPLICATIONINSIGHTS_CONNECTION_STRING") or None
