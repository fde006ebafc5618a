"""Scorer backends: anything that can force-score a target given a source.

Two implementations ship here: `LexiconBackend` wraps the built-in
lexical model, and `ExternalBackend` drives a child process speaking the
line protocol (wire protocol v1):

- handshake (first line the child writes):
  ``{"alignkit_scorer": 1, "supports": ["sentence_logprob", ...]}``
- request:  ``{"id": 7, "src": [...], "tgt": [...], "need": [...]}``
- response: ``{"id": 7, "token_logprobs": [-1.2, -0.3]}`` — responses may
  arrive out of order and are matched by id; an error is reported as
  ``{"id": 7, "error": "..."}``.

All records are UTF-8 JSON, one per line; scores are natural-log space.
"""

from __future__ import annotations

import dataclasses
import json
import math
import queue
import shlex
import subprocess
import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import UNK_TOKEN, Token  # noqa: F401  (UNK re-exported for backends)
from .errors import (
    BackendError,
    CapabilityError,
    MalformedInputError,
    ScorerTimeoutError,
)
from .ibm import LexiconModel, sentence_logprob

PROTOCOL_KEY = "alignkit_scorer"
PROTOCOL_VERSION = 1

#: Score items a backend may support, in canonical order.
NEED_ITEMS = ("sentence_logprob", "token_logprobs", "attention")

DEFAULT_TIMEOUT = 60.0
DEFAULT_WINDOW = 256


@dataclass(frozen=True)
class ScoreRequest:
    """One forced-scoring job for a backend."""

    id: int
    src: tuple[str, ...]
    tgt: tuple[str, ...]
    need: frozenset[str]

    def __post_init__(self) -> None:
        if self.id < 0:
            raise MalformedInputError(f"request id must be >= 0, got {self.id}")
        object.__setattr__(self, "src", tuple(self.src))
        object.__setattr__(self, "tgt", tuple(self.tgt))
        object.__setattr__(self, "need", frozenset(self.need))
        if not self.src or not self.tgt:
            raise MalformedInputError(f"request {self.id}: src and tgt must be non-empty")
        if not self.need:
            raise MalformedInputError(f"request {self.id}: need must be non-empty")
        unknown = self.need - set(NEED_ITEMS)
        if unknown:
            raise MalformedInputError(
                f"request {self.id}: unknown need items {sorted(unknown)}"
            )

    def cache_key(self) -> tuple:
        return (self.src, self.tgt, self.need)

    def to_wire(self) -> str:
        return json.dumps(
            {
                "id": self.id,
                "src": list(self.src),
                "tgt": list(self.tgt),
                "need": [n for n in NEED_ITEMS if n in self.need],
            },
            ensure_ascii=False,
        )


@dataclass(frozen=True)
class AttentionPayload:
    """Subword-level attention: rows = target subwords, columns = source."""

    src_subwords: tuple[str, ...]
    tgt_subwords: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "src_subwords", tuple(self.src_subwords))
        object.__setattr__(self, "tgt_subwords", tuple(self.tgt_subwords))
        matrix = np.array(self.matrix, dtype=np.float64)
        if not self.src_subwords or not self.tgt_subwords:
            raise MalformedInputError("attention payload has empty subword list")
        if matrix.shape != (len(self.tgt_subwords), len(self.src_subwords)):
            raise MalformedInputError(
                f"attention matrix shape {matrix.shape} does not match "
                f"{len(self.tgt_subwords)} target x {len(self.src_subwords)} source subwords"
            )
        if not np.all(np.isfinite(matrix)):
            raise MalformedInputError("attention matrix has non-finite entries")
        if matrix.min() < 0.0 or matrix.max() > 1.0:
            raise MalformedInputError("attention entries must lie in [0, 1]")
        sums = matrix.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-3):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise MalformedInputError(
                f"attention row {bad} sums to {sums[bad]:.6f}, expected 1 ± 1e-3"
            )
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)


@dataclass(frozen=True)
class ScoreResponse:
    """Scores for one request; only the requested fields are populated."""

    id: int
    sentence_logprob: float | None = None
    token_logprobs: tuple[float, ...] | None = None
    attention: AttentionPayload | None = None

    def __post_init__(self) -> None:
        if self.token_logprobs is not None:
            object.__setattr__(self, "token_logprobs", tuple(float(v) for v in self.token_logprobs))
            if not all(math.isfinite(v) for v in self.token_logprobs):
                raise MalformedInputError(f"response {self.id}: non-finite token logprob")
        if self.sentence_logprob is not None:
            sent = float(self.sentence_logprob)
            if not math.isfinite(sent):
                raise MalformedInputError(f"response {self.id}: non-finite sentence logprob")
            if self.token_logprobs is not None:
                total = sum(self.token_logprobs)
                if abs(total - sent) > 1e-6:
                    raise MalformedInputError(
                        f"response {self.id}: token logprobs sum to {total!r} but "
                        f"sentence logprob is {sent!r} (tolerance 1e-6)"
                    )
            object.__setattr__(self, "sentence_logprob", min(sent, 0.0))


class Backend:
    """Base class: capability reporting plus batch scoring.

    Subclasses implement `_score_batch`; the public entry points handle
    id-uniqueness and capability checks so every backend behaves the
    same way on bad input.
    """

    name = "backend"

    def supports(self) -> frozenset[str]:
        raise NotImplementedError

    def score_batch(self, requests: Sequence[ScoreRequest]) -> list[ScoreResponse]:
        requests = list(requests)
        seen = set()
        for req in requests:
            if req.id in seen:
                raise MalformedInputError(f"duplicate request id {req.id} in batch")
            seen.add(req.id)
        caps = self.supports()
        for req in requests:
            missing = req.need - caps
            if missing:
                raise CapabilityError(
                    f"{sorted(missing)[0]} unsupported by {self.name} backend"
                )
        if not requests:
            return []
        return self._score_batch(requests)

    def score(self, request: ScoreRequest) -> ScoreResponse:
        return self.score_batch([request])[0]

    def _score_batch(self, requests: list[ScoreRequest]) -> list[ScoreResponse]:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self) -> "Backend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def score(backend: Backend, request: ScoreRequest) -> ScoreResponse:
    return backend.score(request)


def score_batch(backend: Backend, requests: Sequence[ScoreRequest]) -> list[ScoreResponse]:
    return backend.score_batch(requests)


def cached(backend: Backend) -> "CachedBackend":
    """Wrap a backend with an exact-match request cache."""
    return CachedBackend(backend)


class LexiconBackend(Backend):
    """Built-in backend scoring with the lexical translation model."""

    name = "builtin"

    def __init__(self, model: LexiconModel):
        self.model = model

    def supports(self) -> frozenset[str]:
        return frozenset({"sentence_logprob", "token_logprobs"})

    def _score_batch(self, requests: list[ScoreRequest]) -> list[ScoreResponse]:
        return [self._score_one(req) for req in requests]

    def _score_one(self, req: ScoreRequest) -> ScoreResponse:
        src = tuple(Token(w) for w in req.src)
        tgt = tuple(Token(w) for w in req.tgt)
        sent, per_token = sentence_logprob(self.model, src, tgt)
        return ScoreResponse(
            id=req.id,
            sentence_logprob=sent if "sentence_logprob" in req.need else None,
            token_logprobs=tuple(per_token) if "token_logprobs" in req.need else None,
        )


class CachedBackend(Backend):
    """Exact-match cache keyed on (src, tgt, need); transparent otherwise.

    Within a batch, duplicate keys are forwarded to the wrapped backend
    only once. Safe for concurrent use.
    """

    name = "cached"

    def __init__(self, inner: Backend):
        self.inner = inner
        self._cache: dict[tuple, ScoreResponse] = {}
        self._lock = threading.Lock()

    def supports(self) -> frozenset[str]:
        return self.inner.supports()

    def _score_batch(self, requests: list[ScoreRequest]) -> list[ScoreResponse]:
        with self._lock:
            forward: list[ScoreRequest] = []
            claimed: set[tuple] = set()
            for req in requests:
                key = req.cache_key()
                if key not in self._cache and key not in claimed:
                    claimed.add(key)
                    forward.append(req)
            if forward:
                for req, resp in zip(forward, self.inner.score_batch(forward)):
                    self._cache[req.cache_key()] = resp
            return [
                dataclasses.replace(self._cache[req.cache_key()], id=req.id)
                for req in requests
            ]

    def close(self) -> None:
        self.inner.close()


def _require_number(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedInputError(f"{what} is not a number: {value!r}")
    return float(value)


def _response_from_record(record: dict, req: ScoreRequest) -> ScoreResponse:
    """Build a validated ScoreResponse from a parsed protocol record."""
    for item in req.need:
        if item not in record:
            raise MalformedInputError(f"response is missing requested field {item!r}")
    sent = None
    if "sentence_logprob" in req.need:
        sent = _require_number(record["sentence_logprob"], "sentence_logprob")
    toks = None
    if "token_logprobs" in req.need:
        raw = record["token_logprobs"]
        if not isinstance(raw, list):
            raise MalformedInputError(f"token_logprobs is not a list: {raw!r}")
        toks = tuple(_require_number(v, "token logprob") for v in raw)
        if len(toks) != len(req.tgt):
            raise MalformedInputError(
                f"expected {len(req.tgt)} token logprobs, got {len(toks)}"
            )
    attn = None
    if "attention" in req.need:
        raw = record["attention"]
        if not isinstance(raw, dict):
            raise MalformedInputError(f"attention is not an object: {raw!r}")
        try:
            attn = AttentionPayload(
                tuple(str(s) for s in raw.get("src_subwords", ())),
                tuple(str(s) for s in raw.get("tgt_subwords", ())),
                raw.get("matrix", ()),
            )
        except (TypeError, ValueError) as err:
            raise MalformedInputError(f"bad attention payload: {err}") from err
    return ScoreResponse(
        id=req.id, sentence_logprob=sent, token_logprobs=toks, attention=attn
    )


class ExternalBackend(Backend):
    """Child-process scorer speaking wire protocol v1 over stdio.

    The child's first output line must be the handshake; requests are
    then written up to `window` in flight, and replies are matched by
    id (out-of-order replies are fine). A reply that cannot be parsed,
    repeats an id, or names an unknown id aborts with a backend error
    carrying the offending line.
    """

    name = "external"

    def __init__(
        self,
        command: str | Sequence[str],
        timeout: float = DEFAULT_TIMEOUT,
        window: int = DEFAULT_WINDOW,
    ):
        if timeout <= 0 or window < 1:
            raise MalformedInputError(
                f"timeout must be > 0 and window >= 1, got {timeout}/{window}"
            )
        self._timeout = timeout
        self._window = window
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.name = f"external ({argv[0]})" if argv else "external"
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as err:
            raise BackendError(f"cannot start scorer command {argv!r}: {err}") from err
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._lock = threading.Lock()
        self._supports = self._read_handshake()

    def _pump(self) -> None:
        try:
            for line in self._proc.stdout:
                self._lines.put(line)
        finally:
            self._lines.put(None)

    def _next_line(self) -> str:
        try:
            line = self._lines.get(timeout=self._timeout)
        except queue.Empty:
            raise ScorerTimeoutError(
                f"no reply from {self.name} within {self._timeout} s"
            ) from None
        if line is None:
            raise BackendError(f"{self.name}: scorer closed its output stream")
        return line.rstrip("\n")

    def _read_handshake(self) -> frozenset[str]:
        line = self._next_line()
        try:
            record = json.loads(line)
        except json.JSONDecodeError as err:
            raise BackendError(f"unparseable handshake: {err}; line: {line!r}") from err
        if not isinstance(record, dict) or PROTOCOL_KEY not in record:
            raise BackendError(f"handshake missing {PROTOCOL_KEY!r}; line: {line!r}")
        if record[PROTOCOL_KEY] != PROTOCOL_VERSION:
            raise CapabilityError(
                f"unsupported protocol version {record[PROTOCOL_KEY]!r} "
                f"(this client speaks {PROTOCOL_VERSION})"
            )
        supports = record.get("supports", [])
        if not isinstance(supports, list) or not set(supports) <= set(NEED_ITEMS):
            raise BackendError(f"handshake lists invalid capabilities: {supports!r}")
        return frozenset(supports)

    def supports(self) -> frozenset[str]:
        return self._supports

    def _send(self, req: ScoreRequest) -> None:
        try:
            self._proc.stdin.write(req.to_wire() + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError) as err:
            raise BackendError(f"{self.name}: scorer process died mid-write: {err}") from err

    def _score_batch(self, requests: list[ScoreRequest]) -> list[ScoreResponse]:
        with self._lock:
            pending: dict[int, ScoreRequest] = {}
            results: dict[int, ScoreResponse] = {}
            order = [req.id for req in requests]
            sent = 0
            while len(results) < len(requests):
                while sent < len(requests) and len(pending) < self._window:
                    req = requests[sent]
                    pending[req.id] = req
                    self._send(req)
                    sent += 1
                line = self._next_line()
                results.update(self._match_reply(line, pending, results))
            return [results[rid] for rid in order]

    def _match_reply(
        self,
        line: str,
        pending: dict[int, ScoreRequest],
        done: dict[int, ScoreResponse],
    ) -> dict[int, ScoreResponse]:
        try:
            record = json.loads(line)
        except json.JSONDecodeError as err:
            raise BackendError(f"unparseable reply: {err}; line: {line!r}") from err
        if not isinstance(record, dict) or "id" not in record:
            raise BackendError(f"reply without id; line: {line!r}")
        rid = record["id"]
        if "error" in record:
            raise BackendError(f"scorer error for id {rid}: {record['error']}")
        if rid in done:
            raise BackendError(f"duplicate reply for id {rid}; line: {line!r}")
        req = pending.pop(rid, None)
        if req is None:
            raise BackendError(f"reply for unknown id {rid!r}; line: {line!r}")
        try:
            return {rid: _response_from_record(record, req)}
        except MalformedInputError as err:
            raise BackendError(f"invalid reply for id {rid}: {err}; line: {line!r}") from err

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
