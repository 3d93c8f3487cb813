"""Minimal chat-completions client with image attachments.

Wire format: ``POST`` a JSON body ``{model, messages: [{role, content: [...]}]}``
where each content part is ``{"type": "text", "text": ...}`` or
``{"type": "image", "image_url": "data:image/png;base64,..."}``. The bearer
token is read from an environment variable whose name is configurable.
"""

from __future__ import annotations

import base64
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Sequence

import httpx

from .core import RasterImage

log = logging.getLogger(__name__)


class BackendUnavailable(RuntimeError):
    """Transport failure talking to a remote model."""


def image_data_url(img: RasterImage) -> str:
    return "data:image/png;base64," + base64.b64encode(img.to_png_bytes()).decode("ascii")


def build_messages(system: str | None, user_text: str, images: Sequence[RasterImage] = ()) -> list[dict]:
    messages = []
    if system:
        messages.append({"role": "system", "content": [{"type": "text", "text": system}]})
    content: list[dict] = [{"type": "image", "image_url": image_data_url(im)} for im in images]
    content.append({"type": "text", "text": user_text})
    messages.append({"role": "user", "content": content})
    return messages


def extract_reply_text(payload: dict) -> str:
    """Pull the assistant text out of the common response shapes."""
    if "choices" in payload:
        msg = payload["choices"][0].get("message", {})
        content = msg.get("content", "")
    elif "content" in payload:
        content = payload["content"]
    else:
        content = payload.get("text", "")
    if isinstance(content, list):
        content = "".join(part.get("text", "") for part in content if isinstance(part, dict))
    if not isinstance(content, str):
        raise ValueError(f"unrecognised reply payload: {payload!r}")
    return content


@dataclass
class ChatClient:
    endpoint: str
    model: str
    token_env: str = "STRUCTIMG_API_TOKEN"
    timeout: float = 60.0
    retries: int = 2
    backoff: float = 0.5
    transport: httpx.BaseTransport | None = field(default=None, repr=False)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, system: str | None, user_text: str, images: Sequence[RasterImage] = ()) -> str:
        body = {"model": self.model, "messages": build_messages(system, user_text, images)}
        last: Exception | None = None
        with httpx.Client(timeout=self.timeout, transport=self.transport) as client:
            for attempt in range(self.retries + 1):
                try:
                    resp = client.post(self.endpoint, json=body, headers=self._headers())
                    if resp.status_code >= 500:
                        raise httpx.HTTPStatusError(f"server error {resp.status_code}", request=resp.request, response=resp)
                    resp.raise_for_status()
                    return extract_reply_text(resp.json())
                except (httpx.TransportError, httpx.HTTPStatusError, ValueError) as e:
                    last = e
                    retryable = not isinstance(e, httpx.HTTPStatusError) or e.response.status_code >= 500
                    if not retryable or attempt == self.retries:
                        break
                    log.warning("request to %s failed (%s), retrying", self.endpoint, e)
                    time.sleep(self.backoff * (2**attempt))
        raise BackendUnavailable(f"{self.endpoint}: {last}") from last
