"""Soft-alignment score models built on the scorer abstraction.

Three families, all driven by forced scoring of modified sentence pairs:

- m1: sentence log-probability of each one-token pair (s_i, t_j);
  |S|*|T| scorings, log space.
- m2: drop in the j-th target token's log-probability when source token
  i is obscured (deleted or replaced by <unk>); |S|+1 scorings,
  logit-diff space (unbounded either direction).
- m3: sentence log-probability of the pair with source i and target j
  both obscured; |S|*|T| scorings, log space. Aligned pairs score
  highest because both sides of the translation are missing together.

Plus aggregation of subword-level attention payloads into token-level
probability matrices, and the line-oriented score interchange format:
one JSON record per sentence, e.g.
``{"id": 3, "rows": 2, "cols": 2, "space": "log", "scores": [[-0.7,-2.3],[-1.9,-0.4]]}``.
"""

from __future__ import annotations

import enum
import json
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .core import UNK_TOKEN, SentencePair, SoftAlignment, Token, strip_markers
from .errors import BackendError, MalformedInputError
from .scorer import AttentionPayload, Backend, ScoreRequest


class ObscureMode(enum.Enum):
    DELETE = "delete"
    SUBSTITUTE = "substitute"


class AttentionAggregation(enum.Enum):
    MAX = "max"
    AVG = "avg"


def obscure(words: Sequence[str], idx: int, mode: ObscureMode) -> tuple[str, ...]:
    """Remove the idx-th word or replace it with the UNK sentinel."""
    words = tuple(words)
    if not 0 <= idx < len(words):
        raise MalformedInputError(f"obscure index {idx} out of range for {len(words)} words")
    if mode is ObscureMode.DELETE:
        if len(words) < 2:
            raise MalformedInputError("cannot delete the only token of a sentence")
        return words[:idx] + words[idx + 1 :]
    return words[:idx] + (UNK_TOKEN,) + words[idx + 1 :]


def _run_batch(
    backend: Backend, requests: list[ScoreRequest], pair: SentencePair
):
    """Score a batch, attaching the sentence id to any backend failure."""
    try:
        return backend.score_batch(requests)
    except BackendError as err:
        raise type(err)(f"sentence pair {pair.id}: {err}") from err


def m1_scores(backend: Backend, pair: SentencePair) -> SoftAlignment:
    """Sentence log-prob of every one-token pair; |S|*|T| scorings."""
    src, tgt = pair.src_texts, pair.tgt_texts
    need = frozenset({"sentence_logprob"})
    requests = [
        ScoreRequest(i * len(tgt) + j, (src[i],), (tgt[j],), need)
        for i in range(len(src))
        for j in range(len(tgt))
    ]
    responses = _run_batch(backend, requests, pair)
    matrix = np.empty((len(src), len(tgt)))
    for req, resp in zip(requests, responses):
        matrix[req.id // len(tgt), req.id % len(tgt)] = resp.sentence_logprob
    return SoftAlignment(matrix, "log")


def m2_scores(
    backend: Backend, pair: SentencePair, mode: ObscureMode
) -> SoftAlignment:
    """Token log-prob drop under source obscuring; |S|+1 scorings."""
    src, tgt = pair.src_texts, pair.tgt_texts
    if mode is ObscureMode.DELETE and len(src) < 2:
        raise MalformedInputError(
            f"sentence pair {pair.id}: delete-mode m2 needs at least 2 source tokens"
        )
    need = frozenset({"token_logprobs"})
    requests = [ScoreRequest(0, src, tgt, need)]
    for i in range(len(src)):
        requests.append(ScoreRequest(i + 1, obscure(src, i, mode), tgt, need))
    responses = _run_batch(backend, requests, pair)
    base = responses[0].token_logprobs
    matrix = np.empty((len(src), len(tgt)))
    for i in range(len(src)):
        obscured = responses[i + 1].token_logprobs
        for j in range(len(tgt)):
            matrix[i, j] = base[j] - obscured[j]
    return SoftAlignment(matrix, "logit-diff")


def m3_scores(
    backend: Backend,
    pair: SentencePair,
    src_mode: ObscureMode,
    tgt_mode: ObscureMode,
) -> SoftAlignment:
    """Sentence log-prob with source i and target j both obscured."""
    src, tgt = pair.src_texts, pair.tgt_texts
    if src_mode is ObscureMode.DELETE and len(src) < 2:
        raise MalformedInputError(
            f"sentence pair {pair.id}: delete-mode m3 needs at least 2 source tokens"
        )
    if tgt_mode is ObscureMode.DELETE and len(tgt) < 2:
        raise MalformedInputError(
            f"sentence pair {pair.id}: delete-mode m3 needs at least 2 target tokens"
        )
    need = frozenset({"sentence_logprob"})
    requests = [
        ScoreRequest(
            i * len(tgt) + j, obscure(src, i, src_mode), obscure(tgt, j, tgt_mode), need
        )
        for i in range(len(src))
        for j in range(len(tgt))
    ]
    responses = _run_batch(backend, requests, pair)
    matrix = np.empty((len(src), len(tgt)))
    for req, resp in zip(requests, responses):
        matrix[req.id // len(tgt), req.id % len(tgt)] = resp.sentence_logprob
    return SoftAlignment(matrix, "log")


def _token_blocks(
    tokens: Sequence[Token], subwords: Sequence[str], side: str, pair_id: int
) -> list[tuple[int, int]]:
    """Map each token to its [lo, hi) span in the payload subword list."""
    blocks = []
    pos = 0
    for tok in tokens:
        lo = pos
        for piece in tok.pieces:
            if pos >= len(subwords) or strip_markers(subwords[pos]) != strip_markers(piece):
                raise MalformedInputError(
                    f"pair {pair_id}: {side} token {tok.text!r} does not match "
                    f"attention subwords at position {pos}"
                )
            pos += 1
        blocks.append((lo, pos))
    if pos != len(subwords):
        raise MalformedInputError(
            f"pair {pair_id}: {len(subwords) - pos} trailing {side} attention "
            f"subwords not covered by any token"
        )
    return blocks


def attention_scores(
    payload: AttentionPayload, pair: SentencePair, agg: AttentionAggregation
) -> SoftAlignment:
    """Reduce subword attention blocks to a token-level (|S|,|T|) matrix.

    The payload has one row per target subword; output entry (i, j) is
    the max or mean over the block (subwords of t_j) x (subwords of s_i).
    """
    src_blocks = _token_blocks(pair.src, payload.src_subwords, "source", pair.id)
    tgt_blocks = _token_blocks(pair.tgt, payload.tgt_subwords, "target", pair.id)
    matrix = np.empty((len(pair.src), len(pair.tgt)))
    for i, (slo, shi) in enumerate(src_blocks):
        for j, (tlo, thi) in enumerate(tgt_blocks):
            block = payload.matrix[tlo:thi, slo:shi]
            matrix[i, j] = block.max() if agg is AttentionAggregation.MAX else block.mean()
    return SoftAlignment(matrix, "probability")


# ---------------------------------------------------------------------------
# score interchange format


def score_record(pair_id: int, scores: SoftAlignment) -> str:
    """One interchange line for a sentence's soft alignment."""
    return json.dumps(
        {
            "id": pair_id,
            "rows": scores.rows,
            "cols": scores.cols,
            "space": scores.space_tag,
            "scores": [[float(v) for v in row] for row in scores.scores],
        },
        ensure_ascii=False,
    )


def parse_score_record(line: str) -> tuple[int, SoftAlignment]:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as err:
        raise MalformedInputError(f"unparseable score record: {err}; line: {line!r}") from err
    if not isinstance(record, dict):
        raise MalformedInputError(f"score record is not an object: {line!r}")
    for field in ("id", "rows", "cols", "space", "scores"):
        if field not in record:
            raise MalformedInputError(f"score record missing field {field!r}: {line!r}")
    pair_id = record["id"]
    if not isinstance(pair_id, int) or pair_id < 0:
        raise MalformedInputError(f"score record id must be a non-negative integer: {pair_id!r}")
    raw = record["scores"]
    if not isinstance(raw, list) or any(not isinstance(r, list) for r in raw):
        raise MalformedInputError(f"score record {pair_id}: scores must be a list of rows")
    widths = {len(r) for r in raw}
    if len(raw) != record["rows"] or widths != {record["cols"]}:
        raise MalformedInputError(
            f"score record {pair_id}: declared {record['rows']}x{record['cols']} "
            f"but scores payload disagrees"
        )
    return pair_id, SoftAlignment(np.array(raw, dtype=np.float64), record["space"])


def write_score_file(
    path: str | Path, records: Iterable[tuple[int, SoftAlignment]]
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pair_id, scores in records:
            fh.write(score_record(pair_id, scores) + "\n")


def read_score_file(path: str | Path) -> list[tuple[int, SoftAlignment]]:
    return list(iter_score_file(path))


def iter_score_file(path: str | Path) -> Iterator[tuple[int, SoftAlignment]]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield parse_score_record(line)
