"""Seeded synthetic bitext generator with known gold alignments.

Sentences draw distinct word types from a bijective 26-type dictionary,
so the generating alignment is a permutation per sentence. The surface
forms are built to give every manual feature signal:

- a fraction of dictionary entries translate to the identical string
  (string-equality feature),
- the rest keep the source prefix and mutate the suffix (character and
  subword overlap, small length differences),
- target order is source order with random adjacent swaps (position
  difference stays small but varies),
- word lengths vary, so token-length and subword-count differences vary.

Tokens carry a deterministic fixed-width subword segmentation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GoldAlignment, SentencePair, Token

ALPHABET = "abcdefghijklmnopqrstuvwxyz"

SUBWORD_CHUNK = 3


def chunk_subwords(word: str, marker: str = "@@") -> tuple[str, ...]:
    """Split a word into fixed-width pieces, marking non-final pieces."""
    pieces = [word[k : k + SUBWORD_CHUNK] for k in range(0, len(word), SUBWORD_CHUNK)]
    return tuple(
        p + marker if k < len(pieces) - 1 else p for k, p in enumerate(pieces)
    )


def _random_word(rng: np.random.Generator, used: set[str]) -> str:
    while True:
        length = int(rng.integers(3, 8))
        word = "".join(ALPHABET[int(c)] for c in rng.integers(0, 26, size=length))
        if word not in used:
            used.add(word)
            return word


def _mutate_suffix(rng: np.random.Generator, word: str, used: set[str]) -> str:
    while True:
        keep = max(2, len(word) - 2)
        tail = "".join(
            ALPHABET[int(c)] for c in rng.integers(0, 26, size=int(rng.integers(1, 4)))
        )
        cand = word[:keep] + tail
        if cand not in used:
            used.add(cand)
            return cand


def make_dictionary(
    rng: np.random.Generator, n_types: int = 26, identity_frac: float = 0.2
) -> dict[str, str]:
    """Bijective source->target word dictionary."""
    src_used: set[str] = set()
    tgt_used: set[str] = set()
    mapping: dict[str, str] = {}
    for _ in range(n_types):
        s = _random_word(rng, src_used)
        if rng.random() < identity_frac and s not in tgt_used:
            tgt_used.add(s)
            mapping[s] = s
        else:
            mapping[s] = _mutate_suffix(rng, s, tgt_used)
    return mapping


@dataclass
class SyntheticCorpus:
    pairs: list[SentencePair]
    golds: list[GoldAlignment]
    dictionary: dict[str, str]


def generate(
    n_pairs: int = 500,
    seed: int = 0,
    n_types: int = 26,
    min_len: int = 3,
    max_len: int = 8,
    swap_prob: float = 0.2,
    identity_frac: float = 0.2,
) -> SyntheticCorpus:
    """Generate a corpus whose gold alignment is known exactly.

    Each sentence samples distinct source types without replacement;
    the target side is the dictionary translation in source order with
    random adjacent swaps applied. Gold sure pairs are {(perm[j], j)}.
    """
    rng = np.random.default_rng(seed)
    dictionary = make_dictionary(rng, n_types=n_types, identity_frac=identity_frac)
    src_types = list(dictionary)
    pairs, golds = [], []
    for pid in range(n_pairs):
        k = int(rng.integers(min_len, max_len + 1))
        chosen = rng.choice(len(src_types), size=k, replace=False)
        src_words = [src_types[int(ix)] for ix in chosen]
        perm = list(range(k))
        for pos in range(k - 1):
            if rng.random() < swap_prob:
                perm[pos], perm[pos + 1] = perm[pos + 1], perm[pos]
        tgt_words = [dictionary[src_words[p]] for p in perm]
        pairs.append(
            SentencePair(
                pid,
                tuple(Token(w, chunk_subwords(w)) for w in src_words),
                tuple(Token(w, chunk_subwords(w)) for w in tgt_words),
            )
        )
        golds.append(
            GoldAlignment(
                frozenset((perm[j], j) for j in range(k)), rows=k, cols=k
            )
        )
    return SyntheticCorpus(pairs, golds, dictionary)


def synthetic_attention(
    pair: SentencePair,
    gold: GoldAlignment,
    rng: np.random.Generator,
    focus: float = 0.9,
) -> tuple[list[str], list[str], np.ndarray]:
    """Fabricate a subword-level attention matrix peaked on the gold links.

    Returns (src_subwords, tgt_subwords, matrix) with rows = target
    subwords, each row summing to 1: `focus` mass spread uniformly over
    the gold source token's subwords, the rest over all other subwords,
    plus a little multiplicative jitter before renormalization.
    """
    src_groups = [tok.pieces for tok in pair.src]
    tgt_groups = [tok.pieces for tok in pair.tgt]
    src_subwords = [p for group in src_groups for p in group]
    tgt_subwords = [p for group in tgt_groups for p in group]
    src_offsets = np.cumsum([0] + [len(g) for g in src_groups])
    aligned_src = {j: i for i, j in gold.sure}
    matrix = np.zeros((len(tgt_subwords), len(src_subwords)))
    row = 0
    for j, group in enumerate(tgt_groups):
        i = aligned_src[j]
        lo, hi = src_offsets[i], src_offsets[i + 1]
        for _ in group:
            r = np.full(len(src_subwords), (1.0 - focus) / max(1, len(src_subwords) - (hi - lo)))
            r[lo:hi] = focus / (hi - lo)
            r *= rng.uniform(0.9, 1.1, size=r.shape)
            matrix[row] = r / r.sum()
            row += 1
    return src_subwords, tgt_subwords, matrix
