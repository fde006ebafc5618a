"""Line-delimited JSON scoring server (wire protocol v1).

Reads one request per line on stdin and writes one response per line on
stdout. The handshake is the first line written, and only after the
model has loaded, so a client never sees a handshake from a process
that cannot score. Malformed requests produce an error record
``{"id": ..., "error": "..."}`` (id null when unrecoverable) and the
process keeps serving; it exits when its input stream closes.

Responses are written in request order. The protocol allows reordering
(clients match replies by id), so in-order is simply the conservative
choice of a single-reader, single-writer loop.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

from . import __version__
from .lexicon import (
    Lexicon,
    ModelFormatError,
    RequestError,
    load_lexicon,
    make_segmenter,
    score_sentence,
)

PROTOCOL_KEY = "alignkit_scorer"
PROTOCOL_VERSION = 1
NEED_ITEMS = ("sentence_logprob", "token_logprobs", "attention")
SEPARATORS = ("@@", "▁")

#: Sum of word-level logprobs must match the sentence logprob this
#: tightly; a violation means the word grouping lost or duplicated a
#: subword and is reported as an error instead of a wrong answer.
ADDITIVITY_TOLERANCE = 1e-4


class ConfigError(ValueError):
    """Bad command-line or config-level settings."""


@dataclass(frozen=True)
class BridgeConfig:
    """Startup settings; the model must load before any output."""

    model: str
    direction: str = ""
    device: str = "cpu"
    batch_size: int = 1
    separator: str = "@@"
    segment: str = "words"

    def __post_init__(self) -> None:
        if not self.model:
            raise ConfigError("a model path is required")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.separator not in SEPARATORS:
            raise ConfigError(
                f"unsupported subword separator {self.separator!r} "
                f"(expected one of {', '.join(SEPARATORS)})"
            )
        try:
            make_segmenter(self.segment, self.separator)
        except ValueError as err:
            raise ConfigError(str(err))


def _parse_request(record: object) -> tuple[int, list[str], list[str], list[str]]:
    """Validate one protocol request; returns (id, src, tgt, need)."""
    if not isinstance(record, dict):
        raise RequestError(f"request is not an object: {record!r}")
    rid = record.get("id")
    if isinstance(rid, bool) or not isinstance(rid, int) or rid < 0:
        raise RequestError(f"request id must be a non-negative integer, got {rid!r}")

    def str_list(name: str) -> list[str]:
        value = record.get(name)
        if (
            not isinstance(value, list)
            or not value
            or not all(isinstance(v, str) for v in value)
        ):
            raise RequestError(f"{name!r} must be a non-empty list of strings")
        return value

    src = str_list("src")
    tgt = str_list("tgt")
    need = record.get("need")
    if not isinstance(need, list) or not need:
        raise RequestError("'need' must be a non-empty list")
    unknown = [n for n in need if n not in NEED_ITEMS]
    if unknown:
        raise RequestError(f"unknown need items {unknown!r}")
    return rid, src, tgt, need


def _response(
    lex: Lexicon, segment, rid: int, src: list[str], tgt: list[str], need: Sequence[str]
) -> dict:
    scored = score_sentence(lex, src, tgt, segment)
    word_logprobs = scored.token_logprobs()
    if abs(sum(word_logprobs) - scored.sentence_logprob) > ADDITIVITY_TOLERANCE:
        raise RequestError(
            f"internal additivity violation: token sum {sum(word_logprobs)!r} "
            f"vs sentence {scored.sentence_logprob!r}"
        )
    out: dict = {"id": rid}
    if "sentence_logprob" in need:
        out["sentence_logprob"] = scored.sentence_logprob
    if "token_logprobs" in need:
        out["token_logprobs"] = word_logprobs
    if "attention" in need:
        out["attention"] = {
            "src_subwords": scored.src_subwords,
            "tgt_subwords": scored.tgt_subwords,
            "matrix": scored.attention,
        }
    return out


def serve(config: BridgeConfig, in_stream: TextIO, out_stream: TextIO) -> None:
    """Load the model, emit the handshake, answer until EOF."""
    lex = load_lexicon(config.model)
    segment = make_segmenter(config.segment, config.separator)

    def emit(record: dict) -> None:
        out_stream.write(json.dumps(record, ensure_ascii=False) + "\n")
        out_stream.flush()

    emit({PROTOCOL_KEY: PROTOCOL_VERSION, "supports": list(NEED_ITEMS)})
    for line in in_stream:
        if not line.strip():
            continue
        rid = None
        try:
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise RequestError(f"unparseable request line: {err}")
            if isinstance(record, dict) and "id" in record:
                rid = record["id"]
            parsed_id, src, tgt, need = _parse_request(record)
            emit(_response(lex, segment, parsed_id, src, tgt, need))
        except RequestError as err:
            emit({"id": rid, "error": str(err)})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nmt-bridge",
        description="Scorer child process speaking the alignkit wire protocol over stdio.",
    )
    parser.add_argument("--model", required=True, help="lexical translation model file")
    parser.add_argument("--direction", default="", help="informational tag, e.g. de-en")
    parser.add_argument("--device", default="cpu", help="informational; this model runs on CPU")
    parser.add_argument("--batch-size", type=int, default=1,
                        help="internal scoring batch size (>= 1)")
    parser.add_argument("--separator", default="@@",
                        help="subword continuation marker reported in segmentations")
    parser.add_argument("--segment", default="words",
                        help="reported segmentation: 'words' or 'chunk:N' "
                             "(fixed-width N-character pieces)")
    parser.add_argument("--version", action="version", version=f"nmt-bridge {__version__}")
    return parser


def main(argv: Iterable[str] | None = None) -> int:
    args = build_parser().parse_args(list(argv) if argv is not None else None)
    try:
        config = BridgeConfig(
            model=args.model,
            direction=args.direction,
            device=args.device,
            batch_size=args.batch_size,
            separator=args.separator,
            segment=args.segment,
        )
    except ConfigError as err:
        print(f"nmt-bridge: error: {err}", file=sys.stderr)
        return 3
    # the protocol is UTF-8 regardless of the ambient locale
    sys.stdin.reconfigure(encoding="utf-8")
    sys.stdout.reconfigure(encoding="utf-8")
    try:
        serve(config, sys.stdin, sys.stdout)
    except (ModelFormatError, OSError) as err:
        print(f"nmt-bridge: error: {err}", file=sys.stderr)
        return 2
    return 0
