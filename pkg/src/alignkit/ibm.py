"""EM-trained lexical translation model (IBM Model 1) with an optional
diagonal positional prior (Model 2 style).

The model serves three roles: a standalone word aligner via Viterbi
decoding of alignment posteriors, a posterior-matrix source of soft
alignments, and the built-in scorer backend (forced sentence/token
log-probabilities).

Scoring uses one fixed arithmetic order everywhere — NULL mass first,
then source positions left to right — so that any reimplementation that
loads a saved model file and follows the same order reproduces scores
bit-for-bit.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import PROB_FLOOR, UNK_TOKEN, HardAlignment, SentencePair, SoftAlignment, Token
from .errors import MalformedInputError

#: Virtual source token: participates in the E-step and in scoring but is
#: never emitted in a hard alignment.
NULL_TOKEN = "<null>"

MODEL_HEADER_PREFIX = "ALIGNKIT-IBM v1 lambda="


def diagonal_weight(i: int, src_len: int, j: int, tgt_len: int, tension: float) -> float:
    """Positional prior weight exp(-tension * |i/|S| - j/|T||), 0-based.

    The NULL position always has weight 1.0 regardless of tension, and
    tension 0 makes every weight exactly 1.0 (the Model 1 case).
    """
    if tension == 0.0:
        return 1.0
    return math.exp(-tension * abs(i / src_len - j / tgt_len))


@dataclass
class LexiconModel:
    """Sparse lexical translation table t(target word | source word).

    ``trans_prob`` maps source word -> {target word: probability}; each
    stored distribution sums to 1 within 1e-6. Vocabularies are derived
    from the table and always contain the NULL and UNK reserved tokens.
    """

    trans_prob: dict[str, dict[str, float]]
    diagonal_tension: float = 0.0
    log_likelihoods: list[float] = field(default_factory=list)
    src_vocab: dict[str, int] = field(init=False, repr=False)
    tgt_vocab: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.diagonal_tension < 0:
            raise MalformedInputError(
                f"diagonal tension must be >= 0, got {self.diagonal_tension}"
            )
        srcs = set(self.trans_prob) | {NULL_TOKEN, UNK_TOKEN}
        tgts = {t for dist in self.trans_prob.values() for t in dist} | {UNK_TOKEN}
        self.src_vocab = {w: k for k, w in enumerate(sorted(srcs))}
        self.tgt_vocab = {w: k for k, w in enumerate(sorted(tgts))}

    def prob(self, src_word: str, tgt_word: str) -> float:
        """t(tgt_word | src_word) with UNK substitution for OOV words."""
        if src_word not in self.src_vocab:
            src_word = UNK_TOKEN
        if tgt_word not in self.tgt_vocab:
            tgt_word = UNK_TOKEN
        dist = self.trans_prob.get(src_word)
        if dist is None:
            return 0.0
        return dist.get(tgt_word, 0.0)

    def validate(self) -> None:
        """Check the per-source normalization invariant (1 ± 1e-6)."""
        for s, dist in self.trans_prob.items():
            total = 0.0
            for t, p in dist.items():
                if p < 0.0 or not math.isfinite(p):
                    raise MalformedInputError(f"t({t}|{s}) = {p} is not a probability")
                total += p
            if abs(total - 1.0) > 1e-6:
                raise MalformedInputError(
                    f"distribution for source {s!r} sums to {total!r}, expected 1"
                )


def train_em(
    corpus: Sequence[SentencePair], iterations: int, diagonal_tension: float = 0.0
) -> LexiconModel:
    """Train t(tgt|src) by EM; records per-iteration corpus log-likelihood.

    Initialization is uniform over co-occurring target words (the NULL
    token co-occurs with everything). The likelihood stored for
    iteration k is evaluated with the parameters entering that
    iteration, so the recorded sequence is non-decreasing.
    """
    if not corpus:
        raise MalformedInputError("training corpus is empty")
    if iterations < 1:
        raise MalformedInputError(f"iterations must be >= 1, got {iterations}")
    if diagonal_tension < 0:
        raise MalformedInputError(f"diagonal tension must be >= 0, got {diagonal_tension}")

    cooc: dict[str, set[str]] = defaultdict(set)
    for pair in corpus:
        tgt_words = {tok.text for tok in pair.tgt}
        cooc[NULL_TOKEN].update(tgt_words)
        for tok in pair.src:
            cooc[tok.text].update(tgt_words)
    table = {
        s: {t: 1.0 / len(ts) for t in sorted(ts)} for s, ts in sorted(cooc.items())
    }

    likelihoods = []
    for _ in range(iterations):
        counts: dict[str, dict[str, float]] = {s: defaultdict(float) for s in table}
        log_likelihood = 0.0
        for pair in corpus:
            src = [tok.text for tok in pair.src]
            tgt = [tok.text for tok in pair.tgt]
            n, m = len(src), len(tgt)
            for j, tw in enumerate(tgt):
                weights = [
                    diagonal_weight(i, n, j, m, diagonal_tension) for i in range(n)
                ]
                u_null = table[NULL_TOKEN].get(tw, 0.0)
                masses = [w * table[sw].get(tw, 0.0) for w, sw in zip(weights, src)]
                total = u_null
                for u in masses:
                    total += u
                normalizer = 1.0
                for w in weights:
                    normalizer += w
                if total <= 0.0:
                    # No lexical mass anywhere: fall back to the prior.
                    u_null, masses, total = 1.0, weights, normalizer
                log_likelihood += math.log(max(total / normalizer, PROB_FLOOR))
                counts[NULL_TOKEN][tw] += u_null / total
                for sw, u in zip(src, masses):
                    counts[sw][tw] += u / total
        new_table = {}
        for s, cnt in counts.items():
            denom = sum(cnt.values())
            if denom > 0.0:
                new_table[s] = {t: c / denom for t, c in cnt.items()}
        table = new_table
        likelihoods.append(log_likelihood)

    return LexiconModel(
        trans_prob=table,
        diagonal_tension=diagonal_tension,
        log_likelihoods=likelihoods,
    )


def posterior_with_null(
    model: LexiconModel, pair: SentencePair
) -> tuple[np.ndarray, np.ndarray]:
    """Alignment posteriors: (|S| x |T| matrix, NULL share per column).

    Each column plus its NULL share sums to 1. Columns with no lexical
    mass at all fall back to the (diagonal) prior distribution.
    """
    src = [tok.text for tok in pair.src]
    tgt = [tok.text for tok in pair.tgt]
    n, m = len(src), len(tgt)
    tension = model.diagonal_tension
    matrix = np.zeros((n, m))
    null_row = np.zeros(m)
    for j, tw in enumerate(tgt):
        weights = [diagonal_weight(i, n, j, m, tension) for i in range(n)]
        u_null = model.prob(NULL_TOKEN, tw)
        masses = [w * model.prob(sw, tw) for w, sw in zip(weights, src)]
        total = u_null
        for u in masses:
            total += u
        if total <= 0.0:
            normalizer = 1.0
            for w in weights:
                normalizer += w
            u_null, masses, total = 1.0, weights, normalizer
        null_row[j] = u_null / total
        for i, u in enumerate(masses):
            matrix[i, j] = u / total
    return matrix, null_row


def posterior_matrix(model: LexiconModel, pair: SentencePair) -> SoftAlignment:
    """Posterior that target j aligns to source i; NULL mass excluded."""
    matrix, _ = posterior_with_null(model, pair)
    return SoftAlignment(matrix, "probability")


def viterbi_align(model: LexiconModel, pair: SentencePair) -> HardAlignment:
    """Link each target token to its best source, unless NULL beats all.

    Ties among sources break toward the smallest index; a tie between
    NULL and the best source keeps the link (NULL must win strictly).
    """
    matrix, null_row = posterior_with_null(model, pair)
    links = set()
    for j in range(matrix.shape[1]):
        best_i = int(np.argmax(matrix[:, j]))
        if null_row[j] > matrix[best_i, j]:
            continue
        links.add((best_i, j))
    return HardAlignment(frozenset(links), rows=matrix.shape[0], cols=matrix.shape[1])


def sentence_logprob(
    model: LexiconModel, src: Sequence[Token], tgt: Sequence[Token]
) -> tuple[float, list[float]]:
    """Forced-scoring log-probability of tgt given src.

    Token j's probability is the prior-weighted average of t(tgt_j | ·)
    over NULL and all source positions; the sentence log-probability is
    the sum of token log-probabilities. Probabilities are floored at
    PROB_FLOOR before the log, so results are always finite.
    """
    if not src or not tgt:
        raise MalformedInputError("scoring requires non-empty source and target")
    src_words = [tok.text for tok in src]
    tgt_words = [tok.text for tok in tgt]
    n, m = len(src_words), len(tgt_words)
    tension = model.diagonal_tension
    token_logprobs = []
    for j, tw in enumerate(tgt_words):
        total = model.prob(NULL_TOKEN, tw)
        normalizer = 1.0
        for i, sw in enumerate(src_words):
            w = diagonal_weight(i, n, j, m, tension)
            total += w * model.prob(sw, tw)
            normalizer += w
        token_logprobs.append(math.log(max(total / normalizer, PROB_FLOOR)))
    sentence = 0.0
    for lp in token_logprobs:
        sentence += lp
    return sentence, token_logprobs


def save_model(model: LexiconModel, path: str | Path) -> None:
    """Write the versioned flat model file (sorted, 17 significant digits)."""
    rows = []
    for s, dist in model.trans_prob.items():
        for t, p in dist.items():
            if p != 0.0:
                rows.append((s, t, p))
    rows.sort()
    lines = [f"{MODEL_HEADER_PREFIX}{model.diagonal_tension:.17g}\n"]
    for s, t, p in rows:
        lines.append(f"{s}\t{t}\t{p:.17g}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def load_model(path: str | Path) -> LexiconModel:
    """Load a model file written by save_model; validates normalization."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(MODEL_HEADER_PREFIX):
        raise MalformedInputError(f"{path}: missing '{MODEL_HEADER_PREFIX}' header")
    try:
        tension = float(lines[0][len(MODEL_HEADER_PREFIX):])
    except ValueError:
        raise MalformedInputError(f"{path}: unparseable lambda in header {lines[0]!r}")
    table: dict[str, dict[str, float]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != 3:
            raise MalformedInputError(
                f"{path}:{lineno}: expected 'src<TAB>tgt<TAB>prob', got {line!r}"
            )
        s, t, p_text = parts
        try:
            p = float(p_text)
        except ValueError:
            raise MalformedInputError(f"{path}:{lineno}: unparseable probability {p_text!r}")
        if p < 0.0 or not math.isfinite(p):
            raise MalformedInputError(f"{path}:{lineno}: invalid probability {p}")
        dist = table.setdefault(s, {})
        if t in dist:
            raise MalformedInputError(f"{path}:{lineno}: duplicate entry for ({s}, {t})")
        dist[t] = p
    model = LexiconModel(trans_prob=table, diagonal_tension=tension)
    model.validate()
    return model
