"""Forced scoring over a flat lexical translation model file.

The model format is the ``ALIGNKIT-IBM v1`` file: a header line carrying
the diagonal-prior strength followed by tab-separated
``source<TAB>target<TAB>probability`` rows. Scoring reproduces the file
format owner's arithmetic exactly — for each target word, NULL mass
first, then source positions left to right accumulating both the
weighted mass and the prior normalizer, one division, and a floor of
1e-12 before the log — so a client comparing this process against its
own built-in scorer sees bit-identical numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

PROB_FLOOR = 1e-12
NULL_TOKEN = "<null>"
UNK_TOKEN = "<unk>"
MODEL_HEADER_PREFIX = "ALIGNKIT-IBM v1 lambda="


class ModelFormatError(ValueError):
    """The model file cannot be parsed or violates its invariants."""


class RequestError(ValueError):
    """A scoring request that cannot be served (reported, never fatal)."""


def diagonal_weight(i: int, src_len: int, j: int, tgt_len: int, tension: float) -> float:
    """Positional prior exp(-tension * |i/|S| - j/|T||); exactly 1.0 at 0."""
    if tension == 0.0:
        return 1.0
    return math.exp(-tension * abs(i / src_len - j / tgt_len))


@dataclass
class Lexicon:
    """t(target | source) table plus the diagonal prior strength."""

    table: dict[str, dict[str, float]]
    tension: float

    def __post_init__(self) -> None:
        self._src_known = set(self.table) | {NULL_TOKEN, UNK_TOKEN}
        self._tgt_known = {t for dist in self.table.values() for t in dist} | {UNK_TOKEN}

    def prob(self, src_word: str, tgt_word: str) -> float:
        """t(tgt | src); words outside the vocabularies score as <unk>."""
        if src_word not in self._src_known:
            src_word = UNK_TOKEN
        if tgt_word not in self._tgt_known:
            tgt_word = UNK_TOKEN
        dist = self.table.get(src_word)
        if dist is None:
            return 0.0
        return dist.get(tgt_word, 0.0)


def load_lexicon(path: str | Path) -> Lexicon:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(MODEL_HEADER_PREFIX):
        raise ModelFormatError(f"{path}: missing '{MODEL_HEADER_PREFIX}' header")
    try:
        tension = float(lines[0][len(MODEL_HEADER_PREFIX):])
    except ValueError:
        raise ModelFormatError(f"{path}: unparseable lambda in header {lines[0]!r}")
    if tension < 0.0 or not math.isfinite(tension):
        raise ModelFormatError(f"{path}: invalid lambda {tension}")
    table: dict[str, dict[str, float]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != 3:
            raise ModelFormatError(
                f"{path}:{lineno}: expected 'src<TAB>tgt<TAB>prob', got {line!r}"
            )
        s, t, p_text = parts
        try:
            p = float(p_text)
        except ValueError:
            raise ModelFormatError(f"{path}:{lineno}: unparseable probability {p_text!r}")
        if p < 0.0 or not math.isfinite(p):
            raise ModelFormatError(f"{path}:{lineno}: invalid probability {p}")
        dist = table.setdefault(s, {})
        if t in dist:
            raise ModelFormatError(f"{path}:{lineno}: duplicate entry for ({s}, {t})")
        dist[t] = p
    for s, dist in table.items():
        total = 0.0
        for p in dist.values():
            total += p
        if abs(total - 1.0) > 1e-6:
            raise ModelFormatError(
                f"{path}: distribution for source {s!r} sums to {total!r}, expected 1"
            )
    return Lexicon(table=table, tension=tension)


def make_segmenter(mode: str, separator: str):
    """Build the subword segmentation the scorer reports.

    ``words`` keeps every word as a single unit. ``chunk:N`` splits words
    into fixed-width pieces of N characters, marked with the separator
    (suffix continuation for ``@@``, word-start prefix for ``▁``) so a
    client holding the same segmentation can regroup them.
    """
    if mode == "words":
        return lambda word: [word]
    if mode.startswith("chunk:"):
        try:
            width = int(mode[len("chunk:"):])
        except ValueError:
            width = 0
        if width < 1:
            raise ValueError(f"chunk width must be a positive integer, got {mode!r}")
        if separator == "@@":
            def segment(word: str) -> list[str]:
                pieces = [word[k:k + width] for k in range(0, len(word), width)]
                return [p + "@@" if k < len(pieces) - 1 else p for k, p in enumerate(pieces)]
        else:  # "▁" marks the piece that starts a word
            def segment(word: str) -> list[str]:
                pieces = [word[k:k + width] for k in range(0, len(word), width)]
                return ["▁" + p if k == 0 else p for k, p in enumerate(pieces)]
        return segment
    raise ValueError(f"unknown segmentation mode {mode!r} (expected words or chunk:N)")


@dataclass
class ScoredSentence:
    """Everything the protocol can ask for about one sentence pair.

    The lexicon scores whole words; its reported segmentation comes from
    the configured segmenter. A word's log-probability sits on its first
    piece (continuations carry 0.0), so per-word groups sum exactly to
    the word score. Attention rows are the model's alignment posteriors
    over the real source words (NULL mass excluded, renormalized), with
    each source word's mass split evenly over its pieces and one
    identical row per piece of the target word.
    """

    sentence_logprob: float
    word_piece_logprobs: list[list[float]]
    src_subwords: list[str]
    tgt_subwords: list[str]
    attention: list[list[float]]

    def token_logprobs(self) -> list[float]:
        """Word-level log-probabilities: sum of each word's piece group."""
        out = []
        for group in self.word_piece_logprobs:
            total = 0.0
            for lp in group:
                total += lp
            out.append(total)
        return out


def score_sentence(lex: Lexicon, src: list[str], tgt: list[str], segment=None) -> ScoredSentence:
    """Forced-score tgt given src; see the module docstring for the order."""
    if not src or not tgt:
        raise RequestError("src and tgt must be non-empty")
    if segment is None:
        segment = make_segmenter("words", "@@")
    src_groups = [segment(w) for w in src]
    tgt_groups = [segment(w) for w in tgt]
    n, m = len(src), len(tgt)
    piece_groups = []
    attention = []
    sentence = 0.0
    for j, tw in enumerate(tgt):
        total = lex.prob(NULL_TOKEN, tw)
        normalizer = 1.0
        masses = []
        for i, sw in enumerate(src):
            w = diagonal_weight(i, n, j, m, lex.tension)
            masses.append(w * lex.prob(sw, tw))
            total += masses[-1]
            normalizer += w
        lp = math.log(max(total / normalizer, PROB_FLOOR))
        piece_groups.append([lp] + [0.0] * (len(tgt_groups[j]) - 1))
        sentence += lp
        row_total = 0.0
        for u in masses:
            row_total += u
        if row_total <= 0.0:
            # no lexical mass anywhere: attend according to the prior
            masses = [diagonal_weight(i, n, j, m, lex.tension) for i in range(n)]
            row_total = 0.0
            for u in masses:
                row_total += u
        row = []
        for u, pieces in zip(masses, src_groups):
            share = u / row_total / len(pieces)
            row.extend([share] * len(pieces))
        for _ in tgt_groups[j]:
            attention.append(list(row))
    return ScoredSentence(
        sentence_logprob=sentence,
        word_piece_logprobs=piece_groups,
        src_subwords=[p for group in src_groups for p in group],
        tgt_subwords=[p for group in tgt_groups for p in group],
        attention=attention,
    )
