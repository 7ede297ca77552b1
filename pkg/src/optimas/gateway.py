"""Model backend gateway.

One entry point (`complete`) hides three backend kinds: a remote HTTP API,
a locally served model speaking the same protocol, and a scripted mock
that replays canned responses from a fixture directory keyed by the
SHA-256 of the prompt text. The mock performs no network I/O at all,
which keeps tests hermetic and replays deterministic.
"""

from __future__ import annotations

import hashlib
import logging
import os
import threading
import time
from dataclasses import dataclass, replace

from .errors import AuthMissing, BackendRefused, TransportExhausted
from .prompt import PromptPackage

logger = logging.getLogger(__name__)

BACKEND_KINDS = ("remote-http", "local-server", "scripted-mock")
TRANSPORT_RETRIES = 3
BACKOFF_BASE_S = 1.0


@dataclass(frozen=True, slots=True)
class BackendConfig:
    backend_kind: str
    model_name: str
    temperature: float = 0.15
    max_output_tokens: int = 4096
    endpoint: str = ""
    auth_env_var: str = ""
    request_timeout_s: float = 120.0
    fixture_dir: str = ""
    in_flight_limit: int = 2

    def __post_init__(self):
        if self.backend_kind not in BACKEND_KINDS:
            raise ValueError(f"backend_kind must be one of {BACKEND_KINDS}, got {self.backend_kind!r}")
        if self.backend_kind != "scripted-mock" and not self.endpoint:
            raise ValueError(f"{self.backend_kind} backend requires an endpoint")
        if self.backend_kind == "scripted-mock" and not self.fixture_dir:
            raise ValueError("scripted-mock backend requires fixture_dir")


@dataclass(frozen=True, slots=True)
class ModelResponse:
    text: str
    model_name: str
    latency_s: float
    input_tokens: int = 0
    output_tokens: int = 0
    backend_kind: str = ""
    chunks_sent: int = 1


_semaphores: dict[tuple[str, str, int], threading.BoundedSemaphore] = {}
_semaphores_guard = threading.Lock()


def _backend_semaphore(cfg: BackendConfig) -> threading.BoundedSemaphore:
    """One shared in-flight cap per backend target."""
    key = (cfg.backend_kind, cfg.endpoint or cfg.fixture_dir, cfg.in_flight_limit)
    with _semaphores_guard:
        sem = _semaphores.get(key)
        if sem is None:
            sem = threading.BoundedSemaphore(max(1, cfg.in_flight_limit))
            _semaphores[key] = sem
        return sem


def prompt_sha256(prompt_text: str) -> str:
    return hashlib.sha256(prompt_text.encode("utf-8")).hexdigest()


def _mock_complete(pkg: PromptPackage, cfg: BackendConfig) -> ModelResponse:
    digest = prompt_sha256(pkg.prompt_text)
    started = time.perf_counter()
    candidates = [
        os.path.join(cfg.fixture_dir, digest + ".txt"),
        os.path.join(cfg.fixture_dir, digest),
        os.path.join(cfg.fixture_dir, "default.txt"),
    ]
    for path in candidates:
        if os.path.isfile(path):
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
            return ModelResponse(
                text=text,
                model_name=cfg.model_name,
                latency_s=time.perf_counter() - started,
                input_tokens=len(pkg.prompt_text.split()),
                output_tokens=len(text.split()),
                backend_kind=cfg.backend_kind,
            )
    raise BackendRefused(404, f"no fixture for prompt {digest[:12]} in {cfg.fixture_dir}")


def _extract_text(payload: dict) -> str:
    if isinstance(payload.get("text"), str):
        return payload["text"]
    choices = payload.get("choices")
    if isinstance(choices, list) and choices:
        first = choices[0]
        message = first.get("message")
        if isinstance(message, dict) and isinstance(message.get("content"), str):
            return message["content"]
        if isinstance(first.get("text"), str):
            return first["text"]
    raise BackendRefused(200, f"response JSON has no recognizable text field: {list(payload)[:8]}")


def _usage_tokens(payload: dict) -> tuple[int, int]:
    usage = payload.get("usage") or {}
    prompt_tokens = usage.get("prompt_tokens", usage.get("input_tokens", 0))
    completion_tokens = usage.get("completion_tokens", usage.get("output_tokens", 0))
    return int(prompt_tokens or 0), int(completion_tokens or 0)


def _http_complete(pkg: PromptPackage, cfg: BackendConfig, sleeper) -> ModelResponse:
    import requests

    headers = {"Content-Type": "application/json"}
    if cfg.auth_env_var:
        token = os.environ.get(cfg.auth_env_var)
        if not token:
            raise AuthMissing(cfg.auth_env_var)
        headers["Authorization"] = f"Bearer {token}"
    payload = {
        "model": cfg.model_name,
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_output_tokens,
        "messages": [
            {"role": "system", "content": "\n".join(pkg.guardrails)},
            {"role": "user", "content": pkg.prompt_text},
        ],
    }
    last_error = ""
    for attempt in range(TRANSPORT_RETRIES + 1):
        if attempt:
            delay = BACKOFF_BASE_S * (2 ** (attempt - 1))
            logger.warning("transport retry %d/%d after %.1fs: %s", attempt, TRANSPORT_RETRIES, delay, last_error)
            sleeper(delay)
        started = time.perf_counter()
        try:
            resp = requests.post(
                cfg.endpoint, json=payload, headers=headers, timeout=cfg.request_timeout_s
            )
        except (requests.ConnectionError, requests.Timeout) as exc:
            last_error = str(exc)
            continue
        if resp.status_code >= 400:
            raise BackendRefused(resp.status_code, resp.text[-500:])
        body = resp.json()
        input_tokens, output_tokens = _usage_tokens(body)
        return ModelResponse(
            text=_extract_text(body),
            model_name=cfg.model_name,
            latency_s=time.perf_counter() - started,
            input_tokens=input_tokens,
            output_tokens=output_tokens,
            backend_kind=cfg.backend_kind,
        )
    raise TransportExhausted(TRANSPORT_RETRIES + 1, last_error)


def complete(pkg: PromptPackage, cfg: BackendConfig, sleeper=time.sleep) -> ModelResponse:
    """Send one prompt and return the model's reply.

    Transport failures (connect errors, timeouts) are retried up to 3
    times with 1s/2s/4s backoff; HTTP refusals are surfaced immediately.
    A per-backend semaphore caps concurrent in-flight requests.
    """
    sem = _backend_semaphore(cfg)
    with sem:
        if cfg.backend_kind == "scripted-mock":
            return _mock_complete(pkg, cfg)
        return _http_complete(pkg, cfg, sleeper)


def complete_chunked(
    chunks: list[PromptPackage], cfg: BackendConfig, sleeper=time.sleep
) -> ModelResponse:
    """Send prompt chunks in order; only the final reply carries the answer.

    Each part is prefixed with "part i/n; reply only to the final part" so
    the model treats earlier parts as context. Token counts accumulate
    across parts; the returned text is the reply to the final part.
    """
    if not chunks:
        raise ValueError("no chunks to send")
    if len(chunks) == 1:
        return complete(chunks[0], cfg, sleeper)
    total = len(chunks)
    input_tokens = output_tokens = 0
    latency = 0.0
    final: ModelResponse | None = None
    for i, chunk in enumerate(chunks, start=1):
        prefixed = replace(
            chunk,
            prompt_text=f"part {i}/{total}; reply only to the final part\n{chunk.prompt_text}",
        )
        final = complete(prefixed, cfg, sleeper)
        input_tokens += final.input_tokens
        output_tokens += final.output_tokens
        latency += final.latency_s
    assert final is not None
    return replace(
        final,
        input_tokens=input_tokens,
        output_tokens=output_tokens,
        latency_s=latency,
        chunks_sent=total,
    )
