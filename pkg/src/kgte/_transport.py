"""HTTP plumbing shared by the embedding and generation clients.

The actual wire call is a pluggable ``transport`` callable
``(url, payload, headers, timeout) -> (status_code, body_text)`` so tests can
run fully offline.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Callable, Mapping

Transport = Callable[[str, dict, Mapping[str, str], float], tuple[int, str]]

# statuses worth retrying; everything else 4xx/5xx is a hard API error
TRANSIENT_STATUSES = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class RetryPolicy:
    max_retries: int = 2
    backoff_base: float = 0.25
    backoff_factor: float = 2.0

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    def delay(self, attempt: int) -> float:
        return self.backoff_base * self.backoff_factor**attempt


class TransportError(RuntimeError):
    """Transient transport failures persisted through every retry."""


class APIError(RuntimeError):
    """The endpoint answered with a non-success status or an unusable body."""

    def __init__(self, message: str, status: int | None = None, body_excerpt: str = ""):
        super().__init__(message)
        self.status = status
        self.body_excerpt = body_excerpt


def _requests_transport(url: str, payload: dict, headers: Mapping[str, str], timeout: float):
    import requests

    response = requests.post(url, json=payload, headers=dict(headers), timeout=timeout)
    return response.status_code, response.text


def post_json(
    url: str,
    payload: dict,
    *,
    headers: Mapping[str, str] | None = None,
    timeout: float = 60.0,
    policy: RetryPolicy | None = None,
    transport: Transport | None = None,
    sleeper: Callable[[float], None] = time.sleep,
) -> dict:
    """POST a JSON payload, retrying transient failures with exponential backoff.

    Transport exceptions and the statuses in ``TRANSIENT_STATUSES`` are
    retried up to ``policy.max_retries`` times; other non-2xx statuses raise
    ``APIError`` immediately.
    """
    policy = policy or RetryPolicy()
    transport = transport or _requests_transport
    headers = headers or {}
    last_failure: str = "no attempt made"
    for attempt in range(policy.max_retries + 1):
        try:
            status, body = transport(url, payload, headers, timeout)
        except Exception as exc:
            last_failure = f"transport failure: {exc}"
        else:
            if 200 <= status < 300:
                try:
                    return json.loads(body)
                except json.JSONDecodeError as exc:
                    raise APIError(
                        f"endpoint returned invalid JSON: {exc}", status=status,
                        body_excerpt=body[:300],
                    ) from exc
            if status not in TRANSIENT_STATUSES:
                raise APIError(
                    f"request to {url} failed with status {status}",
                    status=status,
                    body_excerpt=body[:300],
                )
            last_failure = f"status {status}"
        if attempt < policy.max_retries:
            sleeper(policy.delay(attempt))
    raise TransportError(
        f"request to {url} failed after {policy.max_retries + 1} attempts ({last_failure})"
    )
