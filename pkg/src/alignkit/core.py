"""Shared domain types and alignment evaluation metrics.

All types are immutable after construction and all metric functions are
pure, so everything here is safe to use concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import MalformedInputError, UndefinedMetricError

#: Stand-in for log(0); keeps score matrices finite and comparisons total.
LOG_ZERO = -1e9

#: Smallest probability admitted before taking a log.
PROB_FLOOR = 1e-12

#: Valid score domains for a soft alignment matrix.
SPACE_TAGS = ("log", "logit-diff", "probability")

#: Substrings treated as segmentation markers when comparing subword text
#: against token text (BPE continuation marker and word-boundary marker).
SEGMENT_MARKERS = ("@@", "▁")

#: Reserved token for unknown symbols; recognized by every scorer backend
#: and assumed never to occur in user corpora.
UNK_TOKEN = "<unk>"


def strip_markers(s: str) -> str:
    """Remove segmentation-marker substrings from a subword unit."""
    for marker in SEGMENT_MARKERS:
        s = s.replace(marker, "")
    return s


@dataclass(frozen=True)
class Token:
    """One whitespace token, optionally with its subword segmentation."""

    text: str
    subwords: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if not self.text:
            raise MalformedInputError("token text must be non-empty")
        if self.subwords is not None:
            pieces = tuple(self.subwords)
            if not pieces:
                raise MalformedInputError(
                    f"token {self.text!r}: subword list must be non-empty"
                )
            object.__setattr__(self, "subwords", pieces)
            joined = "".join(strip_markers(p) for p in pieces)
            if joined != strip_markers(self.text):
                raise MalformedInputError(
                    f"subwords {list(pieces)!r} do not spell token {self.text!r}"
                )

    @property
    def pieces(self) -> tuple[str, ...]:
        """Subword units, defaulting to the whole token."""
        return self.subwords if self.subwords is not None else (self.text,)


@dataclass(frozen=True)
class SentencePair:
    """A tokenized source/target sentence pair."""

    id: int
    src: tuple[Token, ...]
    tgt: tuple[Token, ...]

    def __post_init__(self) -> None:
        if self.id < 0:
            raise MalformedInputError(f"sentence pair id must be >= 0, got {self.id}")
        object.__setattr__(self, "src", tuple(self.src))
        object.__setattr__(self, "tgt", tuple(self.tgt))
        if not self.src or not self.tgt:
            raise MalformedInputError(f"sentence pair {self.id}: both sides must be non-empty")

    @classmethod
    def from_strings(
        cls, pair_id: int, src: Sequence[str], tgt: Sequence[str]
    ) -> "SentencePair":
        return cls(pair_id, tuple(Token(w) for w in src), tuple(Token(w) for w in tgt))

    @property
    def src_texts(self) -> tuple[str, ...]:
        return tuple(t.text for t in self.src)

    @property
    def tgt_texts(self) -> tuple[str, ...]:
        return tuple(t.text for t in self.tgt)


@dataclass(frozen=True, eq=False)
class SoftAlignment:
    """Dense |S| x |T| score matrix for one sentence pair.

    Rows are source positions. ``space_tag`` records the score domain so
    that downstream combination rules can check compatibility. Negative
    infinity is clamped to ``LOG_ZERO``; NaN and positive infinity are
    rejected.
    """

    scores: np.ndarray
    space_tag: str

    def __post_init__(self) -> None:
        if self.space_tag not in SPACE_TAGS:
            raise MalformedInputError(f"unknown score space {self.space_tag!r}")
        scores = np.array(self.scores, dtype=np.float64)
        if scores.ndim != 2 or scores.size == 0:
            raise MalformedInputError("score matrix must be 2-D and non-empty")
        scores[scores == -np.inf] = LOG_ZERO
        if not np.all(np.isfinite(scores)):
            raise MalformedInputError("score matrix contains NaN or +inf")
        if self.space_tag == "probability":
            if scores.min() < -1e-9 or scores.max() > 1.0 + 1e-9:
                raise MalformedInputError("probability-space scores must lie in [0, 1]")
            scores = np.clip(scores, 0.0, 1.0)
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    @property
    def rows(self) -> int:
        return self.scores.shape[0]

    @property
    def cols(self) -> int:
        return self.scores.shape[1]

    def transposed(self) -> "SoftAlignment":
        return SoftAlignment(self.scores.T.copy(), self.space_tag)


def _check_pairs(
    pairs: Iterable[tuple[int, int]], rows: int | None, cols: int | None, what: str
) -> frozenset[tuple[int, int]]:
    checked = set()
    for pair in pairs:
        i, j = pair
        if i < 0 or j < 0:
            raise MalformedInputError(f"{what}: negative index in pair {pair}")
        if rows is not None and i >= rows:
            raise MalformedInputError(f"{what}: source index {i} out of bounds (|S|={rows})")
        if cols is not None and j >= cols:
            raise MalformedInputError(f"{what}: target index {j} out of bounds (|T|={cols})")
        checked.add((int(i), int(j)))
    return frozenset(checked)


@dataclass(frozen=True)
class HardAlignment:
    """A set of (source index, target index) links.

    ``rows``/``cols`` carry the sentence dimensions when known, enabling
    bounds and compatibility checks; ``None`` means unknown.
    """

    pairs: frozenset[tuple[int, int]]
    rows: int | None = None
    cols: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "pairs", _check_pairs(self.pairs, self.rows, self.cols, "alignment")
        )

    def sorted_pairs(self) -> list[tuple[int, int]]:
        return sorted(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class GoldAlignment:
    """Gold annotation with a sure set and a possible superset.

    Sure pairs are automatically added to the possible set, so
    ``sure <= possible`` always holds.
    """

    sure: frozenset[tuple[int, int]]
    possible: frozenset[tuple[int, int]] = frozenset()
    rows: int | None = None
    cols: int | None = None

    def __post_init__(self) -> None:
        sure = _check_pairs(self.sure, self.rows, self.cols, "gold sure")
        possible = _check_pairs(self.possible, self.rows, self.cols, "gold possible")
        object.__setattr__(self, "sure", sure)
        object.__setattr__(self, "possible", possible | sure)


def _check_dims(hyp: HardAlignment, gold: GoldAlignment) -> None:
    if hyp.rows is not None and gold.rows is not None and hyp.rows != gold.rows:
        raise MalformedInputError(
            f"hypothesis/gold source lengths differ: {hyp.rows} vs {gold.rows}"
        )
    if hyp.cols is not None and gold.cols is not None and hyp.cols != gold.cols:
        raise MalformedInputError(
            f"hypothesis/gold target lengths differ: {hyp.cols} vs {gold.cols}"
        )


def precision(hyp: HardAlignment, gold: GoldAlignment) -> float:
    """Fraction of hypothesis links that are at least possible.

    An empty hypothesis has precision 1.0 (vacuously correct).
    """
    _check_dims(hyp, gold)
    if not hyp.pairs:
        return 1.0
    return len(hyp.pairs & gold.possible) / len(hyp.pairs)


def recall(hyp: HardAlignment, gold: GoldAlignment) -> float:
    """Fraction of sure links recovered by the hypothesis."""
    _check_dims(hyp, gold)
    if not gold.sure:
        raise UndefinedMetricError("recall is undefined for an empty sure set")
    return len(hyp.pairs & gold.sure) / len(gold.sure)


def aer(hyp: HardAlignment, gold: GoldAlignment) -> float:
    """Alignment error rate; lower is better."""
    _check_dims(hyp, gold)
    if not gold.sure:
        raise UndefinedMetricError("AER is undefined for an empty sure set")
    hit_sure = len(hyp.pairs & gold.sure)
    hit_possible = len(hyp.pairs & gold.possible)
    return 1.0 - (hit_sure + hit_possible) / (len(gold.sure) + len(hyp.pairs))


def corpus_eval(
    hyps: Sequence[HardAlignment], golds: Sequence[GoldAlignment]
) -> tuple[float, float, float]:
    """Micro-averaged (precision, recall, aer) over a corpus.

    Counts are summed across sentences before any ratio is taken, so a
    single-sentence corpus reproduces the per-sentence metrics exactly.
    """
    if len(hyps) != len(golds):
        raise MalformedInputError(
            f"corpus length mismatch: {len(hyps)} hypotheses vs {len(golds)} golds"
        )
    n_hyp = n_sure = hit_sure = hit_possible = 0
    for hyp, gold in zip(hyps, golds):
        _check_dims(hyp, gold)
        n_hyp += len(hyp.pairs)
        n_sure += len(gold.sure)
        hit_sure += len(hyp.pairs & gold.sure)
        hit_possible += len(hyp.pairs & gold.possible)
    if n_sure == 0:
        raise UndefinedMetricError("corpus AER is undefined: no sure links in gold")
    prec = 1.0 if n_hyp == 0 else hit_possible / n_hyp
    rec = hit_sure / n_sure
    rate = 1.0 - (hit_sure + hit_possible) / (n_sure + n_hyp)
    return prec, rec, rate


def corpus_eval_macro(
    hyps: Sequence[HardAlignment], golds: Sequence[GoldAlignment]
) -> tuple[float, float, float]:
    """Per-sentence metrics averaged across the corpus (macro average)."""
    if len(hyps) != len(golds):
        raise MalformedInputError(
            f"corpus length mismatch: {len(hyps)} hypotheses vs {len(golds)} golds"
        )
    if not hyps:
        raise UndefinedMetricError("macro metrics are undefined for an empty corpus")
    precs, recs, rates = [], [], []
    for hyp, gold in zip(hyps, golds):
        precs.append(precision(hyp, gold))
        recs.append(recall(hyp, gold))
        rates.append(aer(hyp, gold))
    return float(np.mean(precs)), float(np.mean(recs)), float(np.mean(rates))


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    if xs.ndim != 1 or ys.ndim != 1 or xs.shape != ys.shape:
        raise MalformedInputError("pearson requires two equal-length 1-D sequences")
    if xs.size < 2:
        raise MalformedInputError("pearson requires at least 2 samples")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    var_x = float(np.dot(dx, dx))
    var_y = float(np.dot(dy, dy))
    if var_x == 0.0 or var_y == 0.0:
        raise UndefinedMetricError("pearson is undefined for zero-variance input")
    return float(np.dot(dx, dy) / np.sqrt(var_x * var_y))
