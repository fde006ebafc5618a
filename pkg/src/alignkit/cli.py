"""Command-line interface.

One subcommand per pipeline stage: train-ibm, score, extract,
symmetrize, eval, sweep, ensemble (features/train/apply), and
gen-synthetic. Optional flags resolve as: command line, then
ALIGNKIT_<NAME> environment variables, then a JSON config file
(--config or ALIGNKIT_CONFIG), then built-in defaults.

Exit codes: 0 success, 2 malformed input or I/O, 3 configuration or
capability errors, 4 backend/training failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .core import SentencePair, corpus_eval, corpus_eval_macro
from .ensemble import (
    DEFAULT_EXTRACTION,
    SCORE_CHANNELS,
    TrainConfig,
    assemble_features,
    ensemble_align,
    load_features,
    load_mlp,
    mlp_train,
    save_features,
    save_mlp,
)
from .errors import (
    BackendError,
    CapabilityError,
    ConfigError,
    FitError,
    MalformedInputError,
    TrainingError,
    UndefinedMetricError,
)
from .extract import ExtractorSpec, SymSpec, alpha_sweep, combine, symmetrize_hard, symmetrize_scores
from .formats import (
    DEFAULT_SEPARATOR,
    read_alignment_file,
    read_corpus,
    read_gold_file,
    write_alignment_file,
    write_gold_file,
    write_token_file,
)
from .ibm import load_model, posterior_matrix, save_model, train_em
from .nmt_scores import (
    AttentionAggregation,
    ObscureMode,
    attention_scores,
    m1_scores,
    m2_scores,
    m3_scores,
    read_score_file,
    write_score_file,
)
from .scorer import DEFAULT_TIMEOUT, DEFAULT_WINDOW, ExternalBackend, LexiconBackend, ScoreRequest, score
from .synthetic import generate

SCORE_METHODS = (
    "m1",
    "m2a",
    "m2b",
    "m3aa",
    "m3ab",
    "m3ba",
    "m3bb",
    "attn-max",
    "attn-avg",
    "ibm-posterior",
)

_OBSCURE = {"a": ObscureMode.DELETE, "b": ObscureMode.SUBSTITUTE}


class Settings:
    """Option resolution: flag > ALIGNKIT_* env var > config file > default."""

    def __init__(self, args: argparse.Namespace):
        self._args = args
        self._file: dict = {}
        config_path = getattr(args, "config", None) or os.environ.get("ALIGNKIT_CONFIG")
        if config_path:
            try:
                data = json.loads(Path(config_path).read_text(encoding="utf-8"))
            except OSError as err:
                raise ConfigError(f"cannot read config file {config_path}: {err}") from err
            except json.JSONDecodeError as err:
                raise ConfigError(f"config file {config_path} is not valid JSON: {err}") from err
            if not isinstance(data, dict):
                raise ConfigError(f"config file {config_path} must hold a JSON object")
            self._file = data

    def get(self, name: str, default, cast=str, dest: str | None = None):
        key = (dest or name).replace("-", "_")
        value = getattr(self._args, key, None)
        if value is not None:
            return value
        env_name = "ALIGNKIT_" + name.replace("-", "_").upper()
        raw = os.environ.get(env_name)
        source = env_name
        if raw is None and name in self._file:
            raw = self._file[name]
            source = "config file"
        if raw is None:
            return default
        try:
            return cast(raw)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"invalid value {raw!r} for {name} (from {source}): {err}") from err


def _read_cli_corpus(args, settings: Settings) -> list[SentencePair]:
    separator = settings.get("separator", DEFAULT_SEPARATOR)
    return read_corpus(
        args.src,
        args.tgt,
        subwords_src=getattr(args, "subwords_src", None),
        subwords_tgt=getattr(args, "subwords_tgt", None),
        separator=separator,
    )


def _make_backend(spec: str, settings: Settings):
    kind, sep, rest = spec.partition(":")
    if not sep or not rest:
        raise ConfigError(
            f"scorer must be builtin:<model-file> or external:<command>, got {spec!r}"
        )
    if kind == "builtin":
        return LexiconBackend(load_model(rest))
    if kind == "external":
        timeout = settings.get("timeout", DEFAULT_TIMEOUT, float)
        window = settings.get("window", DEFAULT_WINDOW, int)
        return ExternalBackend(rest, timeout=timeout, window=window)
    raise ConfigError(f"unknown scorer kind {kind!r} (use builtin: or external:)")


def _parse_channels(items, settings: Settings) -> dict[str, list]:
    """Parse repeated NAME=SCOREFILE channel options."""
    channels: dict[str, list] = {}
    for item in items or []:
        name, sep, path = item.partition("=")
        if not sep:
            raise ConfigError(f"channel must look like name=scorefile, got {item!r}")
        if name not in SCORE_CHANNELS:
            raise ConfigError(f"unknown channel {name!r} (choose from {SCORE_CHANNELS})")
        if name in channels:
            raise ConfigError(f"channel {name!r} given twice")
        channels[name] = [sa for _, sa in read_score_file(path)]
    return channels


# ---------------------------------------------------------------------------
# commands


def cmd_train_ibm(args) -> int:
    settings = Settings(args)
    pairs = _read_cli_corpus(args, settings)
    iterations = settings.get("iters", 5, int)
    tension = settings.get("lambda", 0.0, float, dest="diagonal_lambda")
    model = train_em(pairs, iterations, tension)
    for k, ll in enumerate(model.log_likelihoods, start=1):
        print(f"iteration {k} log-likelihood {ll:.6f}")
    save_model(model, args.out)
    return 0


def cmd_score(args) -> int:
    settings = Settings(args)
    method = args.method
    if method.startswith("attn") and (
        getattr(args, "subwords_src", None) is None
        or getattr(args, "subwords_tgt", None) is None
    ):
        raise MalformedInputError(
            f"method {method} requires --subwords-src and --subwords-tgt"
        )
    pairs = _read_cli_corpus(args, settings)
    if method == "ibm-posterior":
        kind, _, rest = args.scorer.partition(":")
        if kind != "builtin" or not rest:
            raise ConfigError("ibm-posterior requires --scorer builtin:<model-file>")
        model = load_model(rest)
        records = [(pair.id, posterior_matrix(model, pair)) for pair in pairs]
        write_score_file(args.out, records)
        return 0
    backend = _make_backend(args.scorer, settings)
    records = []
    with backend:
        for pair in pairs:
            if method == "m1":
                sa = m1_scores(backend, pair)
            elif method in ("m2a", "m2b"):
                sa = m2_scores(backend, pair, _OBSCURE[method[2]])
            elif method.startswith("m3"):
                sa = m3_scores(backend, pair, _OBSCURE[method[2]], _OBSCURE[method[3]])
            else:  # attn-max / attn-avg
                agg = AttentionAggregation.MAX if method.endswith("max") else AttentionAggregation.AVG
                resp = score(
                    backend,
                    ScoreRequest(pair.id, pair.src_texts, pair.tgt_texts, frozenset({"attention"})),
                )
                sa = attention_scores(resp.attention, pair, agg)
            records.append((pair.id, sa))
    write_score_file(args.out, records)
    return 0


def _read_score_files(paths) -> list[list]:
    """Read several score files over the same corpus; verify id sequences."""
    per_file = []
    first_ids = None
    for path in paths:
        records = read_score_file(path)
        ids = [pair_id for pair_id, _ in records]
        if first_ids is None:
            first_ids = ids
        elif ids != first_ids:
            raise MalformedInputError(
                f"score file {path} has ids {ids[:5]}..., expected the same "
                f"sequence as {paths[0]}"
            )
        per_file.append([sa for _, sa in records])
    return per_file


def cmd_extract(args) -> int:
    settings = Settings(args)
    specs = [ExtractorSpec.parse(s) for s in args.extractor]
    op = settings.get("combine", "union")
    per_file = _read_score_files(args.scores)
    hyps = []
    for k in range(len(per_file[0])):
        parts = [spec.apply(mats[k]) for mats in per_file for spec in specs]
        hyps.append(combine(parts, op))
    write_alignment_file(args.out, hyps)
    return 0


def cmd_symmetrize(args) -> int:
    settings = Settings(args)
    method = args.method
    betas = None
    betas_raw = settings.get("betas", None)
    if betas_raw is not None:
        try:
            betas = tuple(float(b) for b in str(betas_raw).split(","))
        except ValueError:
            raise ConfigError(f"unparseable betas {betas_raw!r}") from None
    spec = SymSpec(method, betas)
    if method == "intersect":
        fwd = read_alignment_file(args.fwd)
        rev = read_alignment_file(args.rev)
        if len(fwd) != len(rev):
            raise MalformedInputError(
                f"{args.fwd} has {len(fwd)} lines but {args.rev} has {len(rev)}"
            )
        write_alignment_file(args.out, [symmetrize_hard(f, r) for f, r in zip(fwd, rev)])
        return 0
    fwd_records, rev_records = _read_score_files_pairwise(args.fwd, args.rev)
    records = [
        (pid, symmetrize_scores(f, r, spec))
        for (pid, f), (_, r) in zip(fwd_records, rev_records)
    ]
    write_score_file(args.out, records)
    return 0


def _read_score_files_pairwise(fwd_path, rev_path):
    fwd = read_score_file(fwd_path)
    rev = read_score_file(rev_path)
    if [i for i, _ in fwd] != [i for i, _ in rev]:
        raise MalformedInputError(
            f"{fwd_path} and {rev_path} do not cover the same sentence ids"
        )
    return fwd, rev


def cmd_eval(args) -> int:
    hyps = read_alignment_file(args.hyp)
    golds = read_gold_file(args.gold)
    if len(hyps) != len(golds):
        raise MalformedInputError(
            f"{args.hyp} has {len(hyps)} lines but {args.gold} has {len(golds)}"
        )
    evaluate = corpus_eval_macro if args.macro else corpus_eval
    p, r, a = evaluate(hyps, golds)
    print(f"{p:.4f} {r:.4f} {a:.4f}")
    return 0


def cmd_sweep(args) -> int:
    settings = Settings(args)
    mats = [sa for _, sa in read_score_file(args.scores)]
    golds = read_gold_file(args.gold)
    if len(mats) != len(golds):
        raise MalformedInputError(
            f"{args.scores} has {len(mats)} records but {args.gold} has {len(golds)} lines"
        )
    alphas_raw = settings.get("alphas", None)
    if alphas_raw is None:
        raise ConfigError("--alphas is required (comma-separated values)")
    try:
        alphas = [float(a) for a in str(alphas_raw).split(",")]
    except ValueError:
        raise ConfigError(f"unparseable alphas {alphas_raw!r}") from None
    rows = alpha_sweep(mats, golds, args.extractor, alphas)
    lines = ["alpha,precision,recall,aer"]
    lines += [f"{al:.6f},{p:.6f},{r:.6f},{a:.6f}" for al, p, r, a in rows]
    text = "".join(line + "\n" for line in lines)
    if args.csv:
        Path(args.csv).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_ensemble_features(args) -> int:
    settings = Settings(args)
    pairs = _read_cli_corpus(args, settings)
    golds = read_gold_file(args.gold) if args.gold else None
    channels = _parse_channels(args.channel, settings)
    baseline = read_alignment_file(args.baseline) if args.baseline else None
    positives = settings.get("positives", "sure+possible")
    table = assemble_features(pairs, golds, channels, baseline, positives=positives)
    save_features(table, args.out)
    print(f"wrote {len(table)} feature rows for {len(pairs)} sentence pairs")
    return 0


def cmd_ensemble_train(args) -> int:
    settings = Settings(args)
    table = load_features(args.features)
    config = TrainConfig(
        epochs=settings.get("epochs", 50, int),
        learning_rate=settings.get("learning-rate", 0.01, float),
        batch_size=settings.get("batch-size", 256, int),
        seed=settings.get("seed", 0, int),
        val_fraction=settings.get("val-fraction", 0.2, float),
        extraction=tuple(args.extractor) if args.extractor else DEFAULT_EXTRACTION,
    )
    model, log = mlp_train(table, config)
    for entry in log["epochs"]:
        marker = " *" if entry["selected"] else ""
        print(
            f"epoch {entry['epoch']} train_loss {entry['train_loss']:.6f} "
            f"val_aer {entry['val_aer']:.6f}{marker}"
        )
    print(f"selected epoch {log['best_epoch']} val_aer {log['best_val_aer']:.6f}")
    save_mlp(model, args.out)
    return 0


def cmd_ensemble_apply(args) -> int:
    settings = Settings(args)
    model = load_mlp(args.model)
    pairs = _read_cli_corpus(args, settings)
    channels = _parse_channels(args.channel, settings)
    baseline = read_alignment_file(args.baseline) if args.baseline else None
    write_alignment_file(args.out, ensemble_align(model, pairs, channels, baseline))
    return 0


def cmd_gen_synthetic(args) -> int:
    settings = Settings(args)
    corpus = generate(
        n_pairs=settings.get("pairs", 500, int),
        seed=settings.get("seed", 0, int),
        n_types=settings.get("types", 26, int),
        min_len=settings.get("min-len", 3, int),
        max_len=settings.get("max-len", 8, int),
        swap_prob=settings.get("swap-prob", 0.2, float),
        identity_frac=settings.get("identity-frac", 0.2, float),
    )
    write_token_file(args.out_src, [p.src for p in corpus.pairs], args.out_subwords_src)
    write_token_file(args.out_tgt, [p.tgt for p in corpus.pairs], args.out_subwords_tgt)
    write_gold_file(args.out_gold, corpus.golds)
    print(f"wrote {len(corpus.pairs)} sentence pairs")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_corpus_options(sp, subwords: bool = True) -> None:
    sp.add_argument("--src", required=True, help="source-side corpus, one sentence per line")
    sp.add_argument("--tgt", required=True, help="target-side corpus, one sentence per line")
    if subwords:
        sp.add_argument("--subwords-src", help="source subword file parallel to --src")
        sp.add_argument("--subwords-tgt", help="target subword file parallel to --tgt")
    sp.add_argument("--separator", help="subword continuation marker (default @@)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default option values")

    parser = argparse.ArgumentParser(
        prog="alignkit", description="Word alignment from translation-model scores."
    )
    parser.add_argument("--version", action="version", version=f"alignkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sp = sub.add_parser("train-ibm", parents=[common], help="train a lexical translation model")
    _add_corpus_options(sp)
    sp.add_argument("--out", required=True, help="output model file")
    sp.add_argument("--iters", type=int, help="EM iterations (default 5)")
    sp.add_argument("--lambda", dest="diagonal_lambda", type=float,
                    help="diagonal prior strength (default 0 = off)")
    sp.set_defaults(func=cmd_train_ibm)

    sp = sub.add_parser("score", parents=[common], help="score a corpus into an alignment matrix file")
    _add_corpus_options(sp)
    sp.add_argument("--method", required=True, choices=SCORE_METHODS)
    sp.add_argument("--scorer", required=True,
                    help="builtin:<model-file> or external:<command>")
    sp.add_argument("--out", required=True, help="output score file (one record per line)")
    sp.add_argument("--timeout", type=float, help="seconds to wait per external reply")
    sp.add_argument("--window", type=int, help="max in-flight external requests")
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("extract", parents=[common], help="turn score files into hard alignments")
    sp.add_argument("--scores", action="append", required=True,
                    help="score file; repeat to combine several")
    sp.add_argument("--extractor", action="append", required=True,
                    help="a1, a2:alpha, a3:alpha or a4:alpha; repeatable")
    sp.add_argument("--combine", choices=("union", "intersect"),
                    help="how to merge multiple extractions (default union)")
    sp.add_argument("--out", required=True, help="output alignment file")
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("symmetrize", parents=[common],
                        help="combine forward and reverse direction outputs")
    sp.add_argument("--fwd", required=True, help="forward score or alignment file")
    sp.add_argument("--rev", required=True, help="reverse-direction score or alignment file")
    sp.add_argument("--method", required=True,
                    choices=("reverse", "add", "multiply", "linear", "intersect"))
    sp.add_argument("--betas", help="b0,b1,b2 for --method linear")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_symmetrize)

    sp = sub.add_parser("eval", parents=[common], help="score a hypothesis file against gold")
    sp.add_argument("--hyp", required=True, help="hypothesis alignment file")
    sp.add_argument("--gold", required=True, help="gold alignment file (i-j sure, i?j possible)")
    sp.add_argument("--macro", action="store_true", help="average per-sentence metrics")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("sweep", parents=[common], help="threshold sweep as a CSV table")
    sp.add_argument("--scores", required=True, help="score file to sweep over")
    sp.add_argument("--gold", required=True)
    sp.add_argument("--extractor", required=True, choices=("a2", "a3", "a4"))
    sp.add_argument("--alphas", help="comma-separated threshold values")
    sp.add_argument("--csv", help="output CSV path (default: stdout)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("ensemble", help="feature assembly and learned combination")
    esub = sp.add_subparsers(dest="ensemble_command", required=True, metavar="STEP")

    ep = esub.add_parser("features", parents=[common], help="assemble a feature table")
    _add_corpus_options(ep)
    ep.add_argument("--gold", help="gold alignment file (labels; omit for inference tables)")
    ep.add_argument("--channel", action="append", metavar="NAME=SCOREFILE",
                    help=f"score channel, one of {', '.join(SCORE_CHANNELS)}; repeatable")
    ep.add_argument("--baseline", help="alignment file for the binary baseline feature")
    ep.add_argument("--positives", choices=("sure+possible", "sure"),
                    help="which gold links count as positive labels")
    ep.add_argument("--out", required=True, help="output feature table (JSON)")
    ep.set_defaults(func=cmd_ensemble_features)

    ep = esub.add_parser("train", parents=[common], help="train the combiner on a feature table")
    ep.add_argument("--features", required=True)
    ep.add_argument("--out", required=True, help="output model file (JSON)")
    ep.add_argument("--epochs", type=int)
    ep.add_argument("--learning-rate", type=float)
    ep.add_argument("--batch-size", type=int)
    ep.add_argument("--seed", type=int)
    ep.add_argument("--val-fraction", type=float)
    ep.add_argument("--extractor", action="append",
                    help="extraction chain for epoch selection; repeatable")
    ep.set_defaults(func=cmd_ensemble_train)

    ep = esub.add_parser("apply", parents=[common], help="align a corpus with a trained combiner")
    _add_corpus_options(ep)
    ep.add_argument("--model", required=True)
    ep.add_argument("--channel", action="append", metavar="NAME=SCOREFILE")
    ep.add_argument("--baseline", help="alignment file for the binary baseline feature")
    ep.add_argument("--out", required=True, help="output alignment file")
    ep.set_defaults(func=cmd_ensemble_apply)

    sp = sub.add_parser("gen-synthetic", parents=[common],
                        help="write a small synthetic corpus with gold alignments")
    sp.add_argument("--out-src", required=True)
    sp.add_argument("--out-tgt", required=True)
    sp.add_argument("--out-gold", required=True)
    sp.add_argument("--out-subwords-src")
    sp.add_argument("--out-subwords-tgt")
    sp.add_argument("--pairs", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--types", type=int)
    sp.add_argument("--min-len", type=int)
    sp.add_argument("--max-len", type=int)
    sp.add_argument("--swap-prob", type=float)
    sp.add_argument("--identity-frac", type=float)
    sp.set_defaults(func=cmd_gen_synthetic)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


def console(argv=None) -> int:
    try:
        return main(argv)
    except (ConfigError, CapabilityError) as err:
        return _fail(err, 3)
    except (MalformedInputError, UndefinedMetricError) as err:
        return _fail(err, 2)
    except (BackendError, TrainingError, FitError) as err:
        return _fail(err, 4)
    except OSError as err:
        return _fail(err, 2)


def _fail(err: Exception, code: int) -> int:
    print(f"alignkit: error: {err}", file=sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(console())
