"""Hard-alignment extraction, set algebra, and symmetrization.

Extractors (alpha thresholds are inclusive):

- a1: per source row, every column attaining the row maximum.
- a2: every cell with score >= alpha, in the raw score space.
- a3: per source row, every cell >= min(rowmax * alpha, rowmax / alpha)
  with alpha in (0, 1]; the min of the two branches handles negative
  row maxima (log-space scores). a3 with alpha = 1 is exactly a1.
- a4: the column-wise analogue of a3 (threshold relative to each
  column's maximum) — deliberately implemented against columns rather
  than via transposition, so the transpose-duality property is a real
  check.

Symmetrization of scores: reverse (transpose of the reverse-direction
matrix), add (log-ish spaces), multiply (probability space), and a
fitted linear blend beta0*p + beta1*p_r + beta2*p*p_r. Hard alignments
symmetrize by intersecting the forward set with the transposed reverse
set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    GoldAlignment,
    HardAlignment,
    SoftAlignment,
    corpus_eval,
)
from .errors import ConfigError, FitError, MalformedInputError

EXTRACTOR_KINDS = ("a1", "a2", "a3", "a4")
SYM_METHODS = ("reverse", "add", "multiply", "intersect", "linear")


def _check_relative_alpha(alpha: float, kind: str) -> None:
    if not 0.0 < alpha <= 1.0:
        raise ConfigError(f"{kind} requires alpha in (0, 1], got {alpha}")


def extract_a1(scores: SoftAlignment) -> HardAlignment:
    """Row-argmax extractor; ties keep every maximal column."""
    m = scores.scores
    pairs = set()
    for i in range(m.shape[0]):
        rowmax = m[i].max()
        for j in range(m.shape[1]):
            if m[i, j] == rowmax:
                pairs.add((i, j))
    return HardAlignment(frozenset(pairs), rows=m.shape[0], cols=m.shape[1])


def extract_a2(scores: SoftAlignment, alpha: float) -> HardAlignment:
    """Global threshold in the matrix's own score space."""
    m = scores.scores
    pairs = {
        (i, j)
        for i in range(m.shape[0])
        for j in range(m.shape[1])
        if m[i, j] >= alpha
    }
    return HardAlignment(frozenset(pairs), rows=m.shape[0], cols=m.shape[1])


def extract_a3(scores: SoftAlignment, alpha: float) -> HardAlignment:
    """Keep cells scoring at least alpha times their row's best."""
    _check_relative_alpha(alpha, "a3")
    m = scores.scores
    pairs = set()
    for i in range(m.shape[0]):
        rowmax = m[i].max()
        threshold = min(rowmax * alpha, rowmax / alpha)
        for j in range(m.shape[1]):
            if m[i, j] >= threshold:
                pairs.add((i, j))
    return HardAlignment(frozenset(pairs), rows=m.shape[0], cols=m.shape[1])


def extract_a4(scores: SoftAlignment, alpha: float) -> HardAlignment:
    """Keep cells scoring at least alpha times their column's best."""
    _check_relative_alpha(alpha, "a4")
    m = scores.scores
    pairs = set()
    for j in range(m.shape[1]):
        colmax = m[:, j].max()
        threshold = min(colmax * alpha, colmax / alpha)
        for i in range(m.shape[0]):
            if m[i, j] >= threshold:
                pairs.add((i, j))
    return HardAlignment(frozenset(pairs), rows=m.shape[0], cols=m.shape[1])


@dataclass(frozen=True)
class ExtractorSpec:
    """Parsed extractor selection, e.g. "a1", "a2:0.5", "a3:1"."""

    kind: str
    alpha: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in EXTRACTOR_KINDS:
            raise ConfigError(f"unknown extractor {self.kind!r} (choose from {EXTRACTOR_KINDS})")
        if self.kind == "a1":
            if self.alpha is not None:
                raise ConfigError("a1 takes no alpha")
        elif self.alpha is None:
            raise ConfigError(f"{self.kind} requires an alpha, e.g. {self.kind}:0.5")
        if self.kind in ("a3", "a4") and self.alpha is not None:
            _check_relative_alpha(self.alpha, self.kind)

    @classmethod
    def parse(cls, text: str) -> "ExtractorSpec":
        kind, sep, alpha_text = text.strip().partition(":")
        if not sep:
            return cls(kind)
        try:
            alpha = float(alpha_text)
        except ValueError:
            raise ConfigError(f"unparseable alpha in extractor spec {text!r}") from None
        return cls(kind, alpha)

    def apply(self, scores: SoftAlignment) -> HardAlignment:
        if self.kind == "a1":
            return extract_a1(scores)
        if self.kind == "a2":
            return extract_a2(scores, self.alpha)
        if self.kind == "a3":
            return extract_a3(scores, self.alpha)
        return extract_a4(scores, self.alpha)


def _merge_dims(alignments: Sequence[HardAlignment]) -> tuple[int | None, int | None]:
    rows = cols = None
    for a in alignments:
        if a.rows is not None:
            if rows is not None and rows != a.rows:
                raise MalformedInputError(
                    f"alignments disagree on source length: {rows} vs {a.rows}"
                )
            rows = a.rows
        if a.cols is not None:
            if cols is not None and cols != a.cols:
                raise MalformedInputError(
                    f"alignments disagree on target length: {cols} vs {a.cols}"
                )
            cols = a.cols
    return rows, cols


def combine(alignments: Sequence[HardAlignment], op: str) -> HardAlignment:
    """Exact set union or intersection over alignments of one pair."""
    if op not in ("union", "intersect"):
        raise ConfigError(f"unknown combine op {op!r} (use 'union' or 'intersect')")
    if not alignments:
        raise MalformedInputError("combine needs at least one alignment")
    rows, cols = _merge_dims(alignments)
    pairs = set(alignments[0].pairs)
    for a in alignments[1:]:
        pairs = pairs | a.pairs if op == "union" else pairs & a.pairs
    return HardAlignment(frozenset(pairs), rows=rows, cols=cols)


def transpose_alignment(a: HardAlignment) -> HardAlignment:
    return HardAlignment(
        frozenset((j, i) for i, j in a.pairs), rows=a.cols, cols=a.rows
    )


@dataclass(frozen=True)
class SymSpec:
    """Parsed symmetrization method, e.g. "add" or "linear:0.4,0.4,0.2"."""

    method: str
    betas: tuple[float, float, float] | None = None

    def __post_init__(self) -> None:
        if self.method not in SYM_METHODS:
            raise ConfigError(f"unknown symmetrization {self.method!r} (choose from {SYM_METHODS})")
        if self.method == "linear":
            if self.betas is None or len(self.betas) != 3:
                raise ConfigError("linear symmetrization requires three betas")
            object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        elif self.betas is not None:
            raise ConfigError(f"{self.method} takes no betas")

    @classmethod
    def parse(cls, text: str) -> "SymSpec":
        method, sep, beta_text = text.strip().partition(":")
        if not sep:
            return cls(method)
        try:
            betas = tuple(float(b) for b in beta_text.split(","))
        except ValueError:
            raise ConfigError(f"unparseable betas in {text!r}") from None
        return cls(method, betas)


def symmetrize_scores(
    fwd: SoftAlignment, rev: SoftAlignment, spec: SymSpec
) -> SoftAlignment:
    """Combine forward and reverse-direction score matrices.

    `rev` is the reverse-direction model's matrix (target as rows), so
    it must have transposed dimensions relative to `fwd`.
    """
    if spec.method == "intersect":
        raise ConfigError("intersect symmetrizes hard alignments, not score matrices")
    if (rev.rows, rev.cols) != (fwd.cols, fwd.rows):
        raise MalformedInputError(
            f"reverse matrix is {rev.rows}x{rev.cols}, expected "
            f"{fwd.cols}x{fwd.rows} (transposed forward dimensions)"
        )
    rev_t = rev.scores.T
    if spec.method == "reverse":
        return SoftAlignment(rev_t.copy(), rev.space_tag)
    if spec.method == "add":
        if fwd.space_tag not in ("log", "logit-diff") or rev.space_tag != fwd.space_tag:
            raise MalformedInputError(
                f"add needs matching log/logit-diff spaces, got "
                f"{fwd.space_tag!r} and {rev.space_tag!r}"
            )
        return SoftAlignment(fwd.scores + rev_t, fwd.space_tag)
    if spec.method == "multiply":
        if fwd.space_tag != "probability" or rev.space_tag != "probability":
            raise MalformedInputError(
                f"multiply needs probability spaces, got "
                f"{fwd.space_tag!r} and {rev.space_tag!r}"
            )
        return SoftAlignment(fwd.scores * rev_t, "probability")
    b0, b1, b2 = spec.betas
    blended = b0 * fwd.scores + b1 * rev_t + b2 * (fwd.scores * rev_t)
    # the blend lives in no canonical space; tag it as unbounded scores
    return SoftAlignment(blended, "logit-diff")


def symmetrize_hard(fwd: HardAlignment, rev: HardAlignment) -> HardAlignment:
    """Forward set intersected with the transposed reverse set."""
    rev_t = transpose_alignment(rev)
    rows, cols = _merge_dims([fwd, rev_t])
    return HardAlignment(frozenset(fwd.pairs & rev_t.pairs), rows=rows, cols=cols)


def fit_linear_sym(
    samples: Sequence[tuple[float, float, float]]
) -> tuple[float, float, float]:
    """Least-squares fit of gold labels on (p, p_r, p*p_r), no intercept."""
    if len(samples) < 3:
        raise FitError(f"linear symmetrization fit needs >= 3 samples, got {len(samples)}")
    data = np.asarray(samples, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != 3:
        raise MalformedInputError("samples must be (fwd score, rev score, label) triples")
    design = np.column_stack([data[:, 0], data[:, 1], data[:, 0] * data[:, 1]])
    if np.linalg.matrix_rank(design) < 3:
        raise FitError("rank-deficient design matrix (features are linearly dependent)")
    betas, *_ = np.linalg.lstsq(design, data[:, 2], rcond=None)
    return float(betas[0]), float(betas[1]), float(betas[2])


def alpha_sweep(
    scores: Sequence[SoftAlignment],
    golds: Sequence[GoldAlignment],
    kind: str,
    alphas: Sequence[float],
) -> list[tuple[float, float, float, float]]:
    """Corpus micro-metrics for one extractor across alpha values.

    Returns one (alpha, precision, recall, aer) row per alpha.
    """
    if kind not in ("a2", "a3", "a4"):
        raise ConfigError(f"alpha sweeps support a2/a3/a4, not {kind!r}")
    if len(scores) != len(golds):
        raise MalformedInputError(
            f"sweep corpus mismatch: {len(scores)} score matrices vs {len(golds)} golds"
        )
    rows = []
    for alpha in alphas:
        spec = ExtractorSpec(kind, float(alpha))
        hyps = [spec.apply(sa) for sa in scores]
        prec, rec, rate = corpus_eval(hyps, golds)
        rows.append((float(alpha), prec, rec, rate))
    return rows
