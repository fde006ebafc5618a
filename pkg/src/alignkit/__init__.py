"""Bitext word alignment toolkit.

Derives soft alignment scores from sentence-pair scoring functions, turns
them into hard alignments with parameterized extractors and symmetrization,
evaluates against gold annotations, and ensembles score sources with a
small feed-forward network.
"""

from .core import (
    GoldAlignment,
    HardAlignment,
    SentencePair,
    SoftAlignment,
    Token,
    aer,
    corpus_eval,
    pearson,
    precision,
    recall,
)

__version__ = "0.1.0"

__all__ = [
    "GoldAlignment",
    "HardAlignment",
    "SentencePair",
    "SoftAlignment",
    "Token",
    "aer",
    "corpus_eval",
    "pearson",
    "precision",
    "recall",
    "__version__",
]
