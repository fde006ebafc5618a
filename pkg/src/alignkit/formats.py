"""On-disk text formats: corpora, subword files, and alignment files.

Corpora are UTF-8, one sentence per line, whitespace-tokenized.
Optional subword files run parallel to the token files; units are
regrouped into words by the segmentation marker ("@@" suffix
continuation or "▁" prefix word-start) and must spell the token line
exactly.

Alignment files hold one line per sentence: space-separated `i-j`
items for sure links and `i?j` for possible-only links, 0-indexed.
Emitters sort items by (i, j) so files diff cleanly; empty lines mean
empty alignments and round-trip unchanged.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Sequence

from .core import GoldAlignment, HardAlignment, SentencePair, Token
from .errors import ConfigError, MalformedInputError

DEFAULT_SEPARATOR = "@@"

_LINK_RE = re.compile(r"^(\d+)([-?])(\d+)$")


def read_lines(path: str | Path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def group_subwords(units: Sequence[str], separator: str = DEFAULT_SEPARATOR) -> list[tuple[str, ...]]:
    """Regroup a flat list of subword units into per-word tuples."""
    words: list[tuple[str, ...]] = []
    current: list[str] = []
    if separator == "@@":
        for unit in units:
            current.append(unit)
            if not unit.endswith(separator):
                words.append(tuple(current))
                current = []
        if current:
            raise MalformedInputError(
                f"line ends with continuation unit {current[-1]!r}"
            )
    elif separator == "▁":
        for unit in units:
            if unit.startswith(separator):
                if current:
                    words.append(tuple(current))
                current = [unit]
            elif current:
                current.append(unit)
            else:
                raise MalformedInputError(
                    f"first unit {unit!r} lacks the word-start marker"
                )
        if current:
            words.append(tuple(current))
    else:
        raise ConfigError(
            f"unsupported subword separator {separator!r} (use '@@' or '▁')"
        )
    return words


def read_token_file(
    path: str | Path,
    subword_path: str | Path | None = None,
    separator: str = DEFAULT_SEPARATOR,
) -> list[tuple[Token, ...]]:
    lines = read_lines(path)
    sub_lines = read_lines(subword_path) if subword_path is not None else None
    if sub_lines is not None and len(sub_lines) != len(lines):
        raise MalformedInputError(
            f"{path} has {len(lines)} lines but {subword_path} has {len(sub_lines)}"
        )
    sentences = []
    for n, line in enumerate(lines, start=1):
        words = line.split()
        if not words:
            raise MalformedInputError(f"{path}:{n}: empty sentence")
        if sub_lines is None:
            sentences.append(tuple(Token(w) for w in words))
            continue
        try:
            groups = group_subwords(sub_lines[n - 1].split(), separator)
        except MalformedInputError as err:
            raise MalformedInputError(f"{subword_path}:{n}: {err}") from err
        if len(groups) != len(words):
            raise MalformedInputError(
                f"{subword_path}:{n}: {len(groups)} subword groups for {len(words)} tokens"
            )
        try:
            sentences.append(tuple(Token(w, g) for w, g in zip(words, groups)))
        except MalformedInputError as err:
            raise MalformedInputError(f"{subword_path}:{n}: {err}") from err
    return sentences


def read_corpus(
    src_path: str | Path,
    tgt_path: str | Path,
    subwords_src: str | Path | None = None,
    subwords_tgt: str | Path | None = None,
    separator: str = DEFAULT_SEPARATOR,
) -> list[SentencePair]:
    """Read a parallel corpus; pair ids are 0-based line numbers."""
    src = read_token_file(src_path, subwords_src, separator)
    tgt = read_token_file(tgt_path, subwords_tgt, separator)
    if len(src) != len(tgt):
        raise MalformedInputError(
            f"{src_path} has {len(src)} lines but {tgt_path} has {len(tgt)}"
        )
    return [SentencePair(k, s, t) for k, (s, t) in enumerate(zip(src, tgt))]


# ---------------------------------------------------------------------------
# alignment files


def parse_alignment_line(
    line: str, where: str = ""
) -> tuple[set[tuple[int, int]], set[tuple[int, int]]]:
    """Parse one line into (sure, possible-only) index-pair sets."""
    sure: set[tuple[int, int]] = set()
    possible: set[tuple[int, int]] = set()
    for item in line.split():
        m = _LINK_RE.match(item)
        if m is None:
            raise MalformedInputError(f"{where}bad alignment item {item!r}")
        i, sep, j = int(m.group(1)), m.group(2), int(m.group(3))
        (sure if sep == "-" else possible).add((i, j))
    return sure, possible


def format_alignment_line(
    sure: frozenset[tuple[int, int]] | set[tuple[int, int]],
    possible_only: frozenset[tuple[int, int]] | set[tuple[int, int]] = frozenset(),
) -> str:
    items = [(i, j, "-") for (i, j) in sure] + [(i, j, "?") for (i, j) in possible_only]
    return " ".join(f"{i}{sep}{j}" for i, j, sep in sorted(items))


def read_gold_file(path: str | Path) -> list[GoldAlignment]:
    golds = []
    for n, line in enumerate(read_lines(path), start=1):
        sure, possible = parse_alignment_line(line, where=f"{path}:{n}: ")
        golds.append(GoldAlignment(frozenset(sure), frozenset(possible)))
    return golds


def read_alignment_file(path: str | Path) -> list[HardAlignment]:
    """Read hypothesis alignments; possible-only links are not allowed."""
    alignments = []
    for n, line in enumerate(read_lines(path), start=1):
        sure, possible = parse_alignment_line(line, where=f"{path}:{n}: ")
        if possible:
            raise MalformedInputError(
                f"{path}:{n}: hypothesis lines must use only i-j links"
            )
        alignments.append(HardAlignment(frozenset(sure)))
    return alignments


def write_alignment_file(path: str | Path, alignments: Sequence[HardAlignment]) -> None:
    lines = [format_alignment_line(a.pairs) for a in alignments]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def write_gold_file(path: str | Path, golds: Sequence[GoldAlignment]) -> None:
    lines = [
        format_alignment_line(g.sure, g.possible - g.sure) for g in golds
    ]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def write_token_file(
    path: str | Path,
    sentences: Sequence[Sequence[Token]],
    subword_path: str | Path | None = None,
) -> None:
    """Write token lines; optionally the parallel subword lines too."""
    Path(path).write_text(
        "".join(" ".join(t.text for t in sent) + "\n" for sent in sentences),
        encoding="utf-8",
    )
    if subword_path is not None:
        Path(subword_path).write_text(
            "".join(
                " ".join(unit for t in sent for unit in t.pieces) + "\n"
                for sent in sentences
            ),
            encoding="utf-8",
        )
