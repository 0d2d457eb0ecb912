"""Inference backends behind one interface: a remote chat-completion client
and a family of deterministic mock models.

The remote client speaks the ubiquitous chat-completion JSON shape (system
message plus user parts, images as base64 data URLs) so hosted services and
self-hosted open-weight servers plug in interchangeably; transient failures
are retried with exponential backoff, auth and other 4xx errors are not.

Mocks close the pipeline for tests: `oracle` returns the ground truth
verbatim, `noisy_oracle` corrupts fields with out-of-vocabulary junk,
`scrambler` swaps verbs/nouns within the registered vocabulary so metrics
see realistic near-misses, and `fixed_text` returns a constant. Mock output
is a pure function of (mock seed, request seed, sample); corruption draws do
not depend on the corruption probability, so raising a noise level only ever
corrupts a superset of slots.
"""

from __future__ import annotations

import base64
import hashlib
import mimetypes
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol

import httpx

from .labels import BehaviorLabel, PredictionGrid, emit_prediction
from .prompting import StructuredPrompt
from .records import FrameRef
from .scenario import RULE_TABLE


class InferenceError(Exception):
    pass


class Timeout(InferenceError):
    pass


class RateLimited(InferenceError):
    pass


class AuthFailure(InferenceError):
    pass


class BackendError(InferenceError):
    def __init__(self, status: int, body: str):
        super().__init__(f"backend returned {status}: {body[:200]}")
        self.status = status
        self.body = body


@dataclass(frozen=True)
class InferenceRequest:
    prompt: StructuredPrompt
    model_id: str
    temperature: float = 1.0
    seed: int | None = None
    max_output_tokens: int = 512
    metadata: dict = field(default_factory=dict)  # e.g. {"sample_id": ...}


@dataclass(frozen=True)
class InferenceResult:
    raw_text: str
    latency_ms: float
    usage: dict
    retries: int = 0


class Backend(Protocol):
    def infer(self, req: InferenceRequest) -> InferenceResult: ...


def infer_batch(
    backend: Backend, reqs: list[InferenceRequest], max_in_flight: int = 4
) -> list[InferenceResult | InferenceError]:
    """Run requests with at most ``max_in_flight`` concurrent calls. Results
    are positionally aligned with the inputs; a failed item carries its
    exception instead of aborting the batch."""
    if max_in_flight < 1:
        raise ValueError("max_in_flight must be >= 1")
    results: list[InferenceResult | InferenceError] = [None] * len(reqs)  # type: ignore

    def run(i: int) -> None:
        try:
            results[i] = backend.infer(reqs[i])
        except InferenceError as exc:
            results[i] = exc

    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        list(pool.map(run, range(len(reqs))))
    return results


# ------------------------------------------------------------------- mocks

MOCK_MODES = ("oracle", "noisy_oracle", "scrambler", "fixed_text")

_JUNK_VERBS = tuple(f"mock_verb_{i}" for i in range(8))
_JUNK_NOUNS = tuple(f"mock_noun_{i}" for i in range(8))


@dataclass(frozen=True)
class MockModelSpec:
    mode: str = "oracle"
    verb_noise: float = 0.0
    noun_noise: float = 0.0
    seed: int = 0
    fixed_text: str = ""

    def __post_init__(self):
        if self.mode not in MOCK_MODES:
            raise ValueError(f"unknown mock mode {self.mode!r}")
        for p in (self.verb_noise, self.noun_noise):
            if not 0.0 <= p <= 1.0:
                raise ValueError("noise probabilities must be in [0, 1]")


def _unit_hash(*parts: Any) -> float:
    """Deterministic uniform draw in [0, 1) keyed by the given parts."""
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def _pick(pool: tuple[str, ...], exclude: str, *key: Any) -> str:
    options = [tok for tok in pool if tok != exclude]
    if not options:
        return exclude
    return options[int(_unit_hash("pick", *key) * len(options))]


class MockModel:
    """Deterministic test double; resolves the ground truth for a request via
    ``gt_lookup(sample_id)`` and, for the scrambler, draws replacement nouns
    from ``noun_pool_lookup(sample_id)`` (typically the sample's scene-graph
    object names)."""

    def __init__(
        self,
        spec: MockModelSpec,
        gt_lookup: Callable[[str], PredictionGrid] | None = None,
        noun_pool_lookup: Callable[[str], tuple[str, ...]] | None = None,
    ):
        self.spec = spec
        self.gt_lookup = gt_lookup
        self.noun_pool_lookup = noun_pool_lookup
        self.verb_pool = tuple(RULE_TABLE)

    def _corrupt(self, grid: PredictionGrid, sample_id: str, req_seed: int | None) -> PredictionGrid:
        spec = self.spec
        in_vocab = spec.mode == "scrambler"
        noun_pool = _JUNK_NOUNS
        verb_pool = _JUNK_VERBS
        if in_vocab:
            verb_pool = self.verb_pool
            noun_pool = (
                self.noun_pool_lookup(sample_id)
                if self.noun_pool_lookup is not None
                else _JUNK_NOUNS
            )
        rows = []
        for row in grid.rows:
            labels = []
            for t, label in enumerate(row):
                verb, noun = label.verb, label.noun
                key = (spec.seed, req_seed, sample_id, label.h_id, t)
                if _unit_hash("verb", *key) < spec.verb_noise:
                    verb = _pick(verb_pool, verb, "verb", *key)
                if _unit_hash("noun", *key) < spec.noun_noise:
                    noun = _pick(noun_pool, noun, "noun", *key)
                labels.append(BehaviorLabel(label.h_id, verb, noun))
            rows.append(tuple(labels))
        return PredictionGrid(rows=tuple(rows), horizon=grid.horizon)

    def infer(self, req: InferenceRequest) -> InferenceResult:
        start = time.perf_counter()
        spec = self.spec
        if spec.mode == "fixed_text":
            text = spec.fixed_text
        else:
            sample_id = req.metadata.get("sample_id")
            if sample_id is None or self.gt_lookup is None:
                raise BackendError(400, "mock backend needs metadata['sample_id'] and a gt_lookup")
            grid = self.gt_lookup(sample_id)
            if spec.mode != "oracle":
                grid = self._corrupt(grid, sample_id, req.seed)
            text = emit_prediction(grid)
        latency = (time.perf_counter() - start) * 1000
        prompt_len = len(req.prompt.rendered_text())
        return InferenceResult(
            raw_text=text,
            latency_ms=latency,
            usage={"prompt_chars": prompt_len, "completion_chars": len(text)},
        )


# ------------------------------------------------------------------ remote


def file_image_loader(resize_px: int | None = None) -> Callable[[FrameRef], str]:
    """Image parts as base64 data URLs read from each frame's path. Frames
    pass through unmodified unless ``resize_px`` bounds the long side."""

    def load(frame: FrameRef) -> str:
        if frame.path is None:
            raise BackendError(400, f"frame {frame.scenario_id}/{frame.step} has no file")
        data = Path(frame.path).read_bytes()
        mime = mimetypes.guess_type(frame.path)[0] or "image/png"
        if resize_px is not None:
            from io import BytesIO

            from PIL import Image

            img = Image.open(BytesIO(data))
            img.thumbnail((resize_px, resize_px))
            buf = BytesIO()
            img.save(buf, format="PNG")
            data = buf.getvalue()
            mime = "image/png"
        return f"data:{mime};base64,{base64.b64encode(data).decode()}"

    return load


_RETRYABLE_STATUSES = {429, 500, 502, 503, 504}


class RemoteChatBackend:
    """Client for a chat-completion endpoint (docs/backend_protocol.md has
    the bit-exact request/response schema)."""

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        timeout_s: float = 60.0,
        max_retries: int = 3,
        backoff_base_s: float = 0.5,
        image_loader: Callable[[FrameRef], str] | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.max_retries = max_retries
        self.backoff_base_s = backoff_base_s
        self.image_loader = image_loader
        self._sleep = sleep
        self._client = httpx.Client(timeout=timeout_s, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def infer(self, req: InferenceRequest) -> InferenceResult:
        payload: dict[str, Any] = {
            "model": req.model_id,
            "messages": req.prompt.to_messages(self.image_loader),
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        if req.seed is not None:
            payload["seed"] = req.seed
        url = f"{self.base_url}/v1/chat/completions"

        start = time.perf_counter()
        attempt = 0
        while True:
            try:
                resp = self._client.post(url, json=payload, headers=self._headers())
            except httpx.TimeoutException as exc:
                if attempt >= self.max_retries:
                    raise Timeout(str(exc)) from exc
                self._sleep(self.backoff_base_s * 2**attempt)
                attempt += 1
                continue
            except httpx.HTTPError as exc:
                raise BackendError(0, str(exc)) from exc

            if resp.status_code == 200:
                data = resp.json()
                try:
                    text = data["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError) as exc:
                    raise BackendError(200, resp.text) from exc
                return InferenceResult(
                    raw_text=text,
                    latency_ms=(time.perf_counter() - start) * 1000,
                    usage=data.get("usage", {}),
                    retries=attempt,
                )
            if resp.status_code in (401, 403):
                raise AuthFailure(f"auth rejected with {resp.status_code}")
            if resp.status_code in _RETRYABLE_STATUSES:
                if attempt >= self.max_retries:
                    if resp.status_code == 429:
                        raise RateLimited(f"rate limited after {attempt} retries")
                    raise BackendError(resp.status_code, resp.text)
                self._sleep(self.backoff_base_s * 2**attempt)
                attempt += 1
                continue
            raise BackendError(resp.status_code, resp.text)
