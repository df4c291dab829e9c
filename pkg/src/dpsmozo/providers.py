"""Logit and embedding providers.

Three interchangeable logit sources drive the decoder:

* ``SyntheticProvider``: a deterministic stand-in language model whose logits
  are seeded pseudo-random tables, cheap enough to brute-force in tests.
* ``TraceProvider``: replays logits recorded from another provider, so runs
  against slow or remote models are reproducible bit for bit.
* ``RemoteProvider``: a thin JSON-over-HTTP client for the inference server
  wire protocol (/v1/logits, /v1/embed, /v1/model, /v1/tokenize,
  /v1/detokenize).

Contexts are keyed by (demonstration ids, query fingerprint, prefix token
ids, template id); that tuple is the trace record key and the call-audit
unit. Wrap any provider in ``RecordingProvider`` to capture a trace or in
``CallAuditProvider`` to log which demonstrations each call touched.
"""

from __future__ import annotations

import json
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dist import LogitVector
from .errors import ProviderError, RemoteTransportError, UncoveredContextError
from .fileio import atomic_write_bytes, read_jsonl
from .rng import make_generator, stable_hex, stable_seed

__all__ = [
    "Demonstration",
    "PromptContext",
    "context_key",
    "load_demo_pool",
    "SyntheticProvider",
    "SyntheticEmbedder",
    "RecordingProvider",
    "CallAuditProvider",
    "TraceProvider",
    "RemoteProvider",
    "build_provider",
]

MAX_SYNTHETIC_VOCAB = 64


@dataclass(frozen=True)
class Demonstration:
    """One private in-context example."""

    demo_id: str
    input_text: str
    output_text: str

    def __post_init__(self):
        if not self.demo_id:
            raise ValueError("demonstration id must be non-empty")


@dataclass(frozen=True)
class PromptContext:
    """What a provider needs to score the next token.

    ``demonstrations`` is empty for zero-shot scoring, a single element for
    the one-shot calls the private decoder makes, and longer only for the
    concatenation decoding paths.
    """

    query_text: str
    prefix_token_ids: tuple[int, ...] = ()
    template_id: str = "default"
    demonstrations: tuple[Demonstration, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "prefix_token_ids", tuple(int(t) for t in self.prefix_token_ids))
        object.__setattr__(self, "demonstrations", tuple(self.demonstrations))

    @property
    def demonstration(self) -> Demonstration | None:
        if len(self.demonstrations) > 1:
            raise ValueError("context holds multiple demonstrations")
        return self.demonstrations[0] if self.demonstrations else None

    @property
    def demo_ids(self) -> tuple[str, ...]:
        return tuple(d.demo_id for d in self.demonstrations)


def context_key(ctx: PromptContext) -> tuple:
    """Stable lookup key for trace records and call audits."""
    return (ctx.demo_ids, stable_hex(ctx.query_text, size=8), ctx.prefix_token_ids, ctx.template_id)


def load_demo_pool(path) -> list[Demonstration]:
    """Read a JSONL pool of {id, input, output} records; ids must be unique."""
    demos = []
    seen = set()
    for i, rec in enumerate(read_jsonl(path)):
        try:
            demo = Demonstration(str(rec["id"]), str(rec["input"]), str(rec["output"]))
        except KeyError as exc:
            raise ValueError(f"{path}: record {i} is missing field {exc}") from exc
        if demo.demo_id in seen:
            raise ValueError(f"{path}: duplicate demonstration id {demo.demo_id!r}")
        seen.add(demo.demo_id)
        demos.append(demo)
    if not demos:
        raise ValueError(f"{path}: demonstration pool is empty")
    return demos


class SyntheticProvider:
    """Deterministic fake LM with controllable demonstration influence.

    Logits are ``base + gamma * sum(demo_effect)`` where base and each
    demo_effect are standard-normal tables seeded from the full context, so
    every call is a pure function of (seed, template, query, prefix, demos).
    The EOS token gets a bonus proportional to the prefix length, which makes
    generations terminate. ``query_match_label_boost`` adds a large logit to
    the label token of any demonstration whose input equals the query; it
    exists to build deliberately leaky mechanisms for membership-inference
    harness calibration.
    """

    def __init__(
        self,
        vocab_size: int = 32,
        seed: int = 0,
        gamma: float = 1.0,
        eos_bonus_per_token: float = 0.5,
        logit_scale: float = 1.0,
        query_match_label_boost: float = 0.0,
        eos_token_id: int | None = None,
    ):
        if not (2 <= vocab_size <= MAX_SYNTHETIC_VOCAB):
            raise ValueError(f"vocab_size must be in [2, {MAX_SYNTHETIC_VOCAB}]")
        self.vocab_size = int(vocab_size)
        self.seed = int(seed)
        self.gamma = float(gamma)
        self.eos_bonus_per_token = float(eos_bonus_per_token)
        self.logit_scale = float(logit_scale)
        self.query_match_label_boost = float(query_match_label_boost)
        self.eos_token_id = self.vocab_size - 1 if eos_token_id is None else int(eos_token_id)
        if not (0 <= self.eos_token_id < self.vocab_size):
            raise ValueError("eos_token_id out of range")

    def _table(self, *key) -> np.ndarray:
        gen = make_generator(self.seed, *key)
        return gen.standard_normal(self.vocab_size) * self.logit_scale

    def logits(self, ctx: PromptContext) -> LogitVector:
        base_key = ("base", ctx.template_id, ctx.query_text, ctx.prefix_token_ids)
        scores = self._table(*base_key)
        for demo in ctx.demonstrations:
            effect = self._table("demo", demo.input_text, demo.output_text, *base_key)
            scores = scores + self.gamma * effect
            if self.query_match_label_boost and demo.input_text == ctx.query_text:
                scores = scores.copy()
                scores[self.token_for_label(demo.output_text)] += self.query_match_label_boost
        scores = scores.copy()
        scores[self.eos_token_id] += self.eos_bonus_per_token * len(ctx.prefix_token_ids)
        return LogitVector(scores)

    def token_for_label(self, label: str) -> int:
        return stable_seed("label", label) % self.vocab_size

    def detokenize(self, token_ids: Sequence[int]) -> str:
        return " ".join(f"t{int(t)}" for t in token_ids)

    def spec(self) -> dict:
        return {
            "kind": "synthetic",
            "vocab_size": self.vocab_size,
            "seed": self.seed,
            "gamma": self.gamma,
            "eos_bonus_per_token": self.eos_bonus_per_token,
            "logit_scale": self.logit_scale,
            "query_match_label_boost": self.query_match_label_boost,
            "eos_token_id": self.eos_token_id,
        }


class SyntheticEmbedder:
    """Hash-seeded unit-norm sentence embeddings."""

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = int(dim)
        self.seed = int(seed)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dim))
        for i, text in enumerate(texts):
            vec = make_generator(self.seed, "embed", text).standard_normal(self.dim)
            out[i] = vec / np.linalg.norm(vec)
        return out


class RecordingProvider:
    """Wraps a provider and captures every logit call for later replay."""

    def __init__(self, inner):
        self.inner = inner
        self.records: list[tuple[tuple, np.ndarray]] = []

    @property
    def vocab_size(self) -> int:
        return self.inner.vocab_size

    @property
    def eos_token_id(self) -> int:
        return self.inner.eos_token_id

    def logits(self, ctx: PromptContext) -> LogitVector:
        result = self.inner.logits(ctx)
        self.records.append((context_key(ctx), np.asarray(result.scores, dtype=np.float64)))
        return result

    def write_trace(self, path, sidecar: bool = True) -> None:
        """JSONL trace (9 significant digits) plus optional float64 sidecar.

        The sidecar holds the raw little-endian float64 logits in record
        order; replay prefers it when present so resampled runs are
        bit-identical even where decimal formatting rounds.
        """
        path = Path(path)
        lines = []
        for key, scores in self.records:
            demo_ids, query_sha, prefix, template_id = key
            lines.append(json.dumps({
                "demo_ids": list(demo_ids),
                "query_sha": query_sha,
                "prefix": list(prefix),
                "template_id": template_id,
                "vocab_size": int(scores.size),
                "eos_token_id": int(self.inner.eos_token_id),
                "logits": [float(f"{v:.9g}") for v in scores],
            }, sort_keys=True))
        atomic_write_bytes(path, ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8"))
        if sidecar:
            blob = b"".join(np.asarray(s, dtype="<f8").tobytes() for _, s in self.records)
            atomic_write_bytes(path.with_suffix(path.suffix + ".bin"), blob)


class CallAuditProvider:
    """Wraps a provider and logs the context key of every call."""

    def __init__(self, inner):
        self.inner = inner
        self.calls: list[tuple] = []

    @property
    def vocab_size(self) -> int:
        return self.inner.vocab_size

    @property
    def eos_token_id(self) -> int:
        return self.inner.eos_token_id

    def logits(self, ctx: PromptContext) -> LogitVector:
        self.calls.append(context_key(ctx))
        return self.inner.logits(ctx)

    def demo_ids_touched(self) -> set[str]:
        return {demo_id for key in self.calls for demo_id in key[0]}


class TraceProvider:
    """Serves logits from a recorded trace; uncovered contexts are errors."""

    def __init__(self, records: dict[tuple, np.ndarray], vocab_size: int, eos_token_id: int):
        self.records = records
        self.vocab_size = int(vocab_size)
        self.eos_token_id = int(eos_token_id)

    @classmethod
    def from_files(cls, path, sidecar_path=None) -> "TraceProvider":
        path = Path(path)
        if sidecar_path is None:
            candidate = path.with_suffix(path.suffix + ".bin")
            sidecar_path = candidate if candidate.exists() else None
        raw = read_jsonl(path)
        if not raw:
            raise ValueError(f"{path}: trace is empty")
        vocab_size = int(raw[0]["vocab_size"])
        eos = int(raw[0]["eos_token_id"])
        sidecar = None
        if sidecar_path is not None:
            blob = np.fromfile(sidecar_path, dtype="<f8")
            if blob.size != len(raw) * vocab_size:
                raise ValueError(f"{sidecar_path}: sidecar length does not match trace")
            sidecar = blob.reshape(len(raw), vocab_size)
        records: dict[tuple, np.ndarray] = {}
        for i, rec in enumerate(raw):
            if int(rec["vocab_size"]) != vocab_size:
                raise ValueError(f"{path}: inconsistent vocab_size at record {i}")
            key = (tuple(rec["demo_ids"]), rec["query_sha"], tuple(rec["prefix"]), rec["template_id"])
            scores = sidecar[i] if sidecar is not None else np.asarray(rec["logits"], dtype=np.float64)
            records[key] = scores
        return cls(records, vocab_size, eos)

    def logits(self, ctx: PromptContext) -> LogitVector:
        key = context_key(ctx)
        try:
            return LogitVector(self.records[key])
        except KeyError:
            raise UncoveredContextError(key) from None


class RemoteProvider:
    """JSON-over-HTTP client for the inference server wire protocol.

    Transport failures and HTTP 5xx responses are retried up to
    ``max_attempts`` times with a short linear backoff, then surface as
    ``RemoteTransportError``. HTTP 4xx responses are never retried (the
    request itself is wrong) and raise ``ProviderError``. Multi-demonstration
    contexts are rejected: the wire protocol carries at most one
    demonstration per request.
    """

    def __init__(self, base_url: str, model_id: str | None = None,
                 timeout: float = 10.0, max_attempts: int = 3, backoff: float = 0.1):
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.timeout = float(timeout)
        self.max_attempts = int(max_attempts)
        self.backoff = float(backoff)
        info = self._request("GET", "/v1/model")
        self.vocab_size = int(info["vocab_size"])
        self.eos_token_id = int(info["eos_token_id"])
        self.embedding_dim = int(info["embedding_dim"])
        self.model_info = info

    def _request(self, method: str, route: str, payload: dict | None = None) -> dict:
        url = self.base_url + route
        data = None if payload is None else json.dumps(payload).encode("utf-8")
        last_error = None
        for attempt in range(1, self.max_attempts + 1):
            req = urllib.request.Request(
                url, data=data, method=method,
                headers={"Content-Type": "application/json"},
            )
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    return json.loads(resp.read().decode("utf-8"))
            except urllib.error.HTTPError as exc:
                if 400 <= exc.code < 500:
                    detail = exc.read().decode("utf-8", errors="replace")[:200]
                    raise ProviderError(f"{method} {route} rejected ({exc.code}): {detail}") from exc
                last_error = f"{method} {route} failed with HTTP {exc.code}"
            except (urllib.error.URLError, TimeoutError, ConnectionError, json.JSONDecodeError) as exc:
                last_error = f"{method} {route} failed: {exc}"
            if attempt < self.max_attempts:
                time.sleep(self.backoff * attempt)
        raise RemoteTransportError(last_error or f"{method} {route} failed", attempts=self.max_attempts)

    def logits(self, ctx: PromptContext) -> LogitVector:
        if len(ctx.demonstrations) > 1:
            raise ProviderError("wire protocol carries at most one demonstration per request")
        demo = ctx.demonstrations[0] if ctx.demonstrations else None
        payload = {
            "model_id": self.model_id,
            "template_id": ctx.template_id,
            "demonstration": None if demo is None else {
                "input": demo.input_text, "output": demo.output_text,
            },
            "query_text": ctx.query_text,
            "prefix_token_ids": list(ctx.prefix_token_ids),
        }
        resp = self._request("POST", "/v1/logits", payload)
        scores = np.asarray(resp["logits"], dtype=np.float64)
        if scores.size != int(resp["vocab_size"]) or scores.size != self.vocab_size:
            raise ProviderError("response logits length does not match vocab_size")
        if not np.isfinite(scores).all():
            raise ProviderError("response logits must all be finite")
        return LogitVector(scores)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        resp = self._request("POST", "/v1/embed", {"model_id": self.model_id, "texts": list(texts)})
        vectors = np.asarray(resp["vectors"], dtype=np.float64)
        if vectors.shape != (len(texts), int(resp["dim"])):
            raise ProviderError("embedding response shape mismatch")
        return vectors

    def tokenize(self, text: str) -> list[int]:
        return [int(t) for t in self._request("POST", "/v1/tokenize", {"text": text})["token_ids"]]

    def detokenize(self, token_ids: Sequence[int]) -> str:
        payload = {"token_ids": [int(t) for t in token_ids]}
        return str(self._request("POST", "/v1/detokenize", payload)["text"])

    def spec(self) -> dict:
        return {"kind": "remote", "base_url": self.base_url, "model_id": self.model_id}


def build_provider(spec: dict):
    """Instantiate a provider from its JSON spec ({"kind": ..., ...})."""
    kind = spec.get("kind")
    if kind == "synthetic":
        kwargs = {k: v for k, v in spec.items() if k != "kind"}
        return SyntheticProvider(**kwargs)
    if kind == "trace":
        return TraceProvider.from_files(spec["path"], spec.get("sidecar_path"))
    if kind == "remote":
        return RemoteProvider(
            spec["base_url"],
            model_id=spec.get("model_id"),
            timeout=float(spec.get("timeout", 10.0)),
            max_attempts=int(spec.get("max_attempts", 3)),
        )
    raise ValueError(f"unknown provider kind {kind!r}")
