"""Per-token-pair feature assembly and a small feed-forward regressor.

Feature vectors have a fixed layout: seven score channels (m1, m2b,
m3aa, m3bb, attention_avg, fastalign_binary, m1_reverse), six manual
features (pos_diff, len_diff, subword_count_diff, levenshtein_norm,
subword_overlap, string_equal), then one presence bit per maskable
group. Missing channels are zero-filled with their mask bit cleared, so
one code path serves every feature ablation.

The regressor is a plain numpy MLP with layer widths
[input, 32, 16, 16, 8, 1], tanh hidden activations, logistic output,
and dropout 0.2 after the first two hidden layers (training only). It
trains with minibatch SGD on class-weighted cross-entropy; after each
epoch the validation AER is computed by scoring the validation
sentences and extracting with the configured chain (default
a2:0.001 ∩ a3:1 ∩ a4:1), and the best-AER epoch's parameters are kept.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import GoldAlignment, HardAlignment, SentencePair, SoftAlignment, corpus_eval
from .errors import MalformedInputError, TrainingError
from .extract import ExtractorSpec, combine

#: Score channels that arrive as per-sentence matrices (forward
#: orientation: rows = source tokens). m1_reverse must be transposed to
#: forward orientation by the caller before assembly.
SCORE_CHANNELS = ("m1", "m2b", "m3aa", "m3bb", "attention_avg", "m1_reverse")

MANUAL_NAMES = (
    "pos_diff",
    "len_diff",
    "subword_count_diff",
    "levenshtein_norm",
    "subword_overlap",
    "string_equal",
)

FEATURE_NAMES = (
    "m1",
    "m2b",
    "m3aa",
    "m3bb",
    "attention_avg",
    "fastalign_binary",
    "m1_reverse",
) + MANUAL_NAMES

#: Feature groups that may be absent; each contributes one mask bit.
#: "subwords" covers the two segmentation-dependent manual features.
MASK_GROUPS = (
    "m1",
    "m2b",
    "m3aa",
    "m3bb",
    "attention_avg",
    "fastalign_binary",
    "m1_reverse",
    "subwords",
)

INPUT_WIDTH = len(FEATURE_NAMES) + len(MASK_GROUPS)

HIDDEN_WIDTHS = (32, 16, 16, 8)

#: Hidden layers whose activations get dropout during training.
DROPOUT_LAYERS = (0, 1)

DEFAULT_EXTRACTION = ("a2:0.001", "a3:1", "a4:1")


def levenshtein(a: str, b: str) -> int:
    """Classic edit distance (insert/delete/substitute, all cost 1)."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (ca != cb))
            )
        previous = current
    return previous[-1]


def manual_features(
    pair: SentencePair, i: int, j: int, with_subwords: bool = True
) -> tuple[float, float, float, float, float, float]:
    """Six handcrafted features for the token pair (s_i, t_j).

    With `with_subwords`, both tokens must carry segmentations; without
    it the two segmentation-dependent features are zero-filled (the
    caller is expected to clear the corresponding mask bit).
    """
    if not (0 <= i < len(pair.src) and 0 <= j < len(pair.tgt)):
        raise MalformedInputError(
            f"pair {pair.id}: indices ({i},{j}) out of range "
            f"({len(pair.src)}x{len(pair.tgt)})"
        )
    s, t = pair.src[i], pair.tgt[j]
    pos_diff = abs(i / len(pair.src) - j / len(pair.tgt))
    len_diff = float(abs(len(s.text) - len(t.text)))
    s_low, t_low = s.text.lower(), t.text.lower()
    lev_norm = levenshtein(s_low, t_low) / max(len(s_low), len(t_low))
    string_equal = 1.0 if s_low == t_low else 0.0
    if with_subwords:
        if s.subwords is None or t.subwords is None:
            raise MalformedInputError(
                f"pair {pair.id}: subword features requested but token "
                f"{(s.text if s.subwords is None else t.text)!r} has no segmentation"
            )
        subword_count_diff = float(abs(len(s.subwords) - len(t.subwords)))
        subword_overlap = float(len(set(s.subwords) & set(t.subwords)))
    else:
        subword_count_diff = 0.0
        subword_overlap = 0.0
    return (pos_diff, len_diff, subword_count_diff, lev_norm, subword_overlap, string_equal)


@dataclass
class FeatureTable:
    """One row per (sentence, i, j) cell, in corpus order."""

    features: np.ndarray  # (n, len(FEATURE_NAMES))
    mask: np.ndarray  # (n, len(MASK_GROUPS)), 0/1
    labels: np.ndarray  # (n,), 0/1
    cells: list[tuple[int, int, int]]  # (pair id, i, j)
    shapes: dict[int, tuple[int, int]]
    spans: dict[int, tuple[int, int]]  # pair id -> [start, end) row range
    golds: dict[int, GoldAlignment]
    order: tuple[int, ...]  # pair ids in corpus order

    def __len__(self) -> int:
        return len(self.labels)


def _check_channel(
    name: str, mats: Sequence[SoftAlignment], pairs: Sequence[SentencePair]
) -> None:
    if len(mats) != len(pairs):
        raise MalformedInputError(
            f"channel {name}: {len(mats)} matrices for {len(pairs)} sentence pairs"
        )
    for sa, pair in zip(mats, pairs):
        if (sa.rows, sa.cols) != (len(pair.src), len(pair.tgt)):
            raise MalformedInputError(
                f"channel {name}: sentence pair {pair.id} is "
                f"{len(pair.src)}x{len(pair.tgt)} but matrix is {sa.rows}x{sa.cols}"
            )


def assemble_features(
    pairs: Sequence[SentencePair],
    golds: Sequence[GoldAlignment] | None,
    score_sources: dict[str, Sequence[SoftAlignment]] | None = None,
    baseline: Sequence[HardAlignment] | None = None,
    positives: str = "sure+possible",
) -> FeatureTable:
    """Build the feature table for a corpus.

    `score_sources` maps channel names (subset of SCORE_CHANNELS) to
    per-sentence matrices in forward orientation. `baseline` supplies
    the binary aligner-output feature. Labels are 1 for cells in the
    gold sure∪possible set (or sure only, per `positives`); with golds
    None all labels are 0 (feature assembly for inference).
    """
    score_sources = dict(score_sources or {})
    unknown = set(score_sources) - set(SCORE_CHANNELS)
    if unknown:
        raise MalformedInputError(f"unknown score channels {sorted(unknown)}")
    if positives not in ("sure+possible", "sure"):
        raise MalformedInputError(f"positives must be 'sure+possible' or 'sure', got {positives!r}")
    if golds is not None and len(golds) != len(pairs):
        raise MalformedInputError(
            f"{len(golds)} gold annotations for {len(pairs)} sentence pairs"
        )
    if baseline is not None and len(baseline) != len(pairs):
        raise MalformedInputError(
            f"{len(baseline)} baseline alignments for {len(pairs)} sentence pairs"
        )
    for name, mats in score_sources.items():
        _check_channel(name, mats, pairs)

    with_subwords = all(
        tok.subwords is not None for pair in pairs for tok in pair.src + pair.tgt
    )
    group_present = {
        **{name: name in score_sources for name in SCORE_CHANNELS},
        "fastalign_binary": baseline is not None,
        "subwords": with_subwords,
    }
    mask_row = np.array([1.0 if group_present[g] else 0.0 for g in MASK_GROUPS])

    rows, labels, cells = [], [], []
    shapes, spans, gold_map = {}, {}, {}
    order = []
    for k, pair in enumerate(pairs):
        n_src, n_tgt = len(pair.src), len(pair.tgt)
        order.append(pair.id)
        if pair.id in shapes:
            raise MalformedInputError(f"duplicate sentence pair id {pair.id}")
        shapes[pair.id] = (n_src, n_tgt)
        start = len(rows)
        gold = golds[k] if golds is not None else None
        if gold is not None:
            gold_map[pair.id] = gold
            positive_set = gold.possible if positives == "sure+possible" else gold.sure
        else:
            positive_set = frozenset()
        for i in range(n_src):
            for j in range(n_tgt):
                channel_vals = []
                for name in ("m1", "m2b", "m3aa", "m3bb", "attention_avg"):
                    mats = score_sources.get(name)
                    channel_vals.append(float(mats[k].scores[i, j]) if mats else 0.0)
                channel_vals.append(
                    1.0 if baseline is not None and (i, j) in baseline[k].pairs else 0.0
                )
                rev = score_sources.get("m1_reverse")
                channel_vals.append(float(rev[k].scores[i, j]) if rev else 0.0)
                manual = manual_features(pair, i, j, with_subwords=with_subwords)
                rows.append(channel_vals + list(manual))
                labels.append(1.0 if (i, j) in positive_set else 0.0)
                cells.append((pair.id, i, j))
        spans[pair.id] = (start, len(rows))
    features = np.array(rows, dtype=np.float64).reshape(len(rows), len(FEATURE_NAMES))
    mask = np.tile(mask_row, (len(rows), 1))
    return FeatureTable(
        features=features,
        mask=mask,
        labels=np.array(labels, dtype=np.float64),
        cells=cells,
        shapes=shapes,
        spans=spans,
        golds=gold_map,
        order=tuple(order),
    )


# ---------------------------------------------------------------------------
# MLP


@dataclass
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 0.01
    batch_size: int = 256
    seed: int = 0
    val_fraction: float = 0.2
    extraction: tuple[str, ...] = DEFAULT_EXTRACTION

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.learning_rate <= 0 or self.batch_size < 1:
            raise MalformedInputError(
                "epochs, learning rate and batch size must all be positive"
            )
        if not 0.0 < self.val_fraction < 1.0:
            raise MalformedInputError(
                f"val_fraction must be in (0, 1), got {self.val_fraction}"
            )
        for spec in self.extraction:
            ExtractorSpec.parse(spec)


@dataclass
class MlpModel:
    """Trained regressor plus everything needed to apply it."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    feature_mean: np.ndarray  # over FEATURE_NAMES columns only
    feature_std: np.ndarray
    extraction: tuple[str, ...] = DEFAULT_EXTRACTION
    seed: int = 0
    dropout: float = 0.2
    feature_names: tuple[str, ...] = FEATURE_NAMES
    mask_groups: tuple[str, ...] = MASK_GROUPS

    @property
    def widths(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def normalize(self, features: np.ndarray, mask: np.ndarray) -> np.ndarray:
        z = (features - self.feature_mean) / self.feature_std
        return np.hstack([z, mask])


def mlp_init(seed: int, input_width: int = INPUT_WIDTH):
    """Seeded Gaussian init scaled by 1/sqrt(fan_in)."""
    rng = np.random.default_rng(seed)
    widths = [input_width, *HIDDEN_WIDTHS, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(widths, widths[1:]):
        weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _forward(weights, biases, x, drop_masks=None):
    """Forward pass to the output logit; returns (logits, caches).

    Each hidden cache holds (layer input, pre-dropout tanh activation);
    the next layer's input already has any dropout mask applied.
    """
    caches = []
    h = x
    n_hidden = len(weights) - 1
    for k in range(n_hidden):
        act = np.tanh(h @ weights[k] + biases[k])
        caches.append((h, act))
        if drop_masks is not None and k in DROPOUT_LAYERS:
            h = act * drop_masks[DROPOUT_LAYERS.index(k)]
        else:
            h = act
    logits = (h @ weights[-1] + biases[-1]).ravel()
    caches.append((h, logits))
    return logits, caches


def _sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def loss_and_grads(weights, biases, x, y, pos_weight=1.0, drop_masks=None):
    """Class-weighted binary cross-entropy from logits, plus gradients.

    loss = mean( pos_weight*y*softplus(-z) + (1-y)*softplus(z) ).
    """
    logits, caches = _forward(weights, biases, x, drop_masks)
    loss = float(
        np.mean(pos_weight * y * np.logaddexp(0.0, -logits) + (1.0 - y) * np.logaddexp(0.0, logits))
    )
    n = x.shape[0]
    # dL/dz = (1-y)*sigmoid(z) - pos_weight*y*sigmoid(-z), averaged
    dz = ((1.0 - y) * _sigmoid(logits) - pos_weight * y * _sigmoid(-logits)) / n
    grad_w = [None] * len(weights)
    grad_b = [None] * len(biases)
    h_last = caches[-1][0]
    grad_w[-1] = h_last.T @ dz[:, None]
    grad_b[-1] = np.array([dz.sum()])
    upstream = dz[:, None] @ weights[-1].T  # gradient w.r.t. last hidden activation
    for k in range(len(weights) - 2, -1, -1):
        h_in, act = caches[k]
        if drop_masks is not None and k in DROPOUT_LAYERS:
            upstream = upstream * drop_masks[DROPOUT_LAYERS.index(k)]
        dpre = upstream * (1.0 - act**2)
        grad_w[k] = h_in.T @ dpre
        grad_b[k] = dpre.sum(axis=0)
        upstream = dpre @ weights[k].T
    return loss, grad_w, grad_b


def mlp_forward(model: MlpModel, x: Sequence[float]) -> float:
    """Evaluation-mode prediction for one raw feature vector (with mask)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.widths[0],):
        raise MalformedInputError(
            f"feature vector has shape {x.shape}, model expects ({model.widths[0]},)"
        )
    n_feat = len(model.feature_names)
    row = model.normalize(x[None, :n_feat], x[None, n_feat:])
    logits, _ = _forward(model.weights, model.biases, row)
    return float(_sigmoid(logits)[0])


def _predict_probs(model: MlpModel, features: np.ndarray, mask: np.ndarray) -> np.ndarray:
    logits, _ = _forward(model.weights, model.biases, model.normalize(features, mask))
    return _sigmoid(logits)


def _chain_extract(scores: SoftAlignment, extraction: Sequence[str]) -> HardAlignment:
    parts = [ExtractorSpec.parse(spec).apply(scores) for spec in extraction]
    return combine(parts, "intersect")


def _table_alignments(
    model: MlpModel, table: FeatureTable, pair_ids: Sequence[int]
) -> list[HardAlignment]:
    probs = _predict_probs(model, table.features, table.mask)
    out = []
    for pid in pair_ids:
        start, end = table.spans[pid]
        matrix = probs[start:end].reshape(table.shapes[pid])
        out.append(_chain_extract(SoftAlignment(matrix, "probability"), model.extraction))
    return out


def validation_aer(model: MlpModel, table: FeatureTable, pair_ids: Sequence[int]) -> float:
    hyps = _table_alignments(model, table, pair_ids)
    golds = [table.golds[pid] for pid in pair_ids]
    return corpus_eval(hyps, golds)[2]


def mlp_train(table: FeatureTable, config: TrainConfig) -> tuple[MlpModel, dict]:
    """Minibatch SGD with per-epoch validation-AER model selection.

    The corpus is split on sentence boundaries; z-normalization
    statistics come from the training split only. Returns the model
    from the best-validation-AER epoch plus a log dict holding the
    split, the class weight, and one entry per epoch.
    """
    if len(table.golds) != len(table.order):
        raise TrainingError("training requires gold annotations for every sentence")
    rng = np.random.default_rng(config.seed)
    ids = list(table.order)
    perm = rng.permutation(len(ids))
    n_val = max(1, int(round(config.val_fraction * len(ids))))
    if n_val >= len(ids):
        raise TrainingError(
            f"validation split would consume all {len(ids)} sentences"
        )
    val_ids = [ids[k] for k in perm[:n_val]]
    train_ids = [ids[k] for k in perm[n_val:]]
    train_rows = np.concatenate(
        [np.arange(*table.spans[pid]) for pid in train_ids]
    )
    x_feat = table.features[train_rows]
    y = table.labels[train_rows]
    n_pos = float(y.sum())
    n_neg = float(len(y) - y.sum())
    if n_pos == 0 or n_neg == 0:
        raise TrainingError("training split has a single class; cannot fit")
    pos_weight = n_neg / n_pos

    mean = x_feat.mean(axis=0)
    std = x_feat.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    weights, biases = mlp_init(config.seed)
    model = MlpModel(
        weights=weights,
        biases=biases,
        feature_mean=mean,
        feature_std=std,
        extraction=tuple(config.extraction),
        seed=config.seed,
    )
    x_train = model.normalize(x_feat, table.mask[train_rows])

    best = None
    epochs_log = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(y))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(y), config.batch_size):
            batch = order[start : start + config.batch_size]
            xb, yb = x_train[batch], y[batch]
            drop_masks = [
                (rng.random((len(batch), HIDDEN_WIDTHS[k])) >= model.dropout)
                / (1.0 - model.dropout)
                for k in DROPOUT_LAYERS
            ]
            loss, grad_w, grad_b = loss_and_grads(
                model.weights, model.biases, xb, yb, pos_weight, drop_masks
            )
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite training loss at epoch {epoch}")
            for k in range(len(model.weights)):
                model.weights[k] -= config.learning_rate * grad_w[k]
                model.biases[k] -= config.learning_rate * grad_b[k]
            epoch_loss += loss
            n_batches += 1
        val_aer = validation_aer(model, table, val_ids)
        selected = best is None or val_aer < best[0]
        if selected:
            best = (
                val_aer,
                epoch,
                [w.copy() for w in model.weights],
                [b.copy() for b in model.biases],
            )
        epochs_log.append(
            {
                "epoch": epoch,
                "train_loss": epoch_loss / max(1, n_batches),
                "val_aer": val_aer,
                "selected": selected,
            }
        )
    model.weights = best[2]
    model.biases = best[3]
    log = {
        "train_ids": train_ids,
        "val_ids": val_ids,
        "pos_weight": pos_weight,
        "best_epoch": best[1],
        "best_val_aer": best[0],
        "epochs": epochs_log,
    }
    return model, log


def ensemble_align(
    model: MlpModel,
    pairs: Sequence[SentencePair],
    score_sources: dict[str, Sequence[SoftAlignment]] | None = None,
    baseline: Sequence[HardAlignment] | None = None,
) -> list[HardAlignment]:
    """Score every cell with the model, then apply its extraction chain."""
    table = assemble_features(pairs, None, score_sources, baseline)
    if table.features.shape[1] + table.mask.shape[1] != model.widths[0]:
        raise MalformedInputError(
            f"feature width {table.features.shape[1] + table.mask.shape[1]} does not "
            f"match model input width {model.widths[0]}"
        )
    return _table_alignments(model, table, list(table.order))


# ---------------------------------------------------------------------------
# persistence


MLP_FORMAT_KEY = "alignkit_mlp"
MLP_FORMAT_VERSION = 1

FEATURES_FORMAT_KEY = "alignkit_features"
FEATURES_FORMAT_VERSION = 1


def save_features(table: FeatureTable, path: str | Path) -> None:
    """Persist a feature table as one JSON document."""
    payload = {
        FEATURES_FORMAT_KEY: FEATURES_FORMAT_VERSION,
        "feature_names": list(FEATURE_NAMES),
        "mask_groups": list(MASK_GROUPS),
        "order": list(table.order),
        "shapes": [list(table.shapes[pid]) for pid in table.order],
        "golds": {
            str(pid): {
                "sure": sorted(map(list, g.sure)),
                "possible": sorted(map(list, g.possible)),
            }
            for pid, g in table.golds.items()
        },
        "mask_row": table.mask[0].tolist() if len(table) else [],
        "labels": table.labels.tolist(),
        "features": table.features.tolist(),
    }
    Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def load_features(path: str | Path) -> FeatureTable:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise MalformedInputError(f"{path}: unparseable feature file: {err}") from err
    if (
        not isinstance(payload, dict)
        or payload.get(FEATURES_FORMAT_KEY) != FEATURES_FORMAT_VERSION
    ):
        raise MalformedInputError(f"{path}: not a v{FEATURES_FORMAT_VERSION} feature file")
    try:
        if tuple(payload["feature_names"]) != FEATURE_NAMES or tuple(
            payload["mask_groups"]
        ) != MASK_GROUPS:
            raise MalformedInputError(f"{path}: feature layout does not match this build")
        order = tuple(int(p) for p in payload["order"])
        features = np.array(payload["features"], dtype=np.float64)
        labels = np.array(payload["labels"], dtype=np.float64)
        mask_row = np.array(payload["mask_row"], dtype=np.float64)
        cells: list[tuple[int, int, int]] = []
        shapes: dict[int, tuple[int, int]] = {}
        spans: dict[int, tuple[int, int]] = {}
        for pid, (n_src, n_tgt) in zip(order, payload["shapes"]):
            start = len(cells)
            cells.extend((pid, i, j) for i in range(n_src) for j in range(n_tgt))
            shapes[pid] = (n_src, n_tgt)
            spans[pid] = (start, len(cells))
        golds = {
            int(pid): GoldAlignment(
                frozenset(tuple(p) for p in item["sure"]),
                frozenset(tuple(p) for p in item["possible"]),
            )
            for pid, item in payload["golds"].items()
        }
    except (KeyError, TypeError, ValueError) as err:
        if isinstance(err, MalformedInputError):
            raise
        raise MalformedInputError(f"{path}: corrupt feature file: {err}") from err
    if features.shape != (len(cells), len(FEATURE_NAMES)) or labels.shape != (len(cells),):
        raise MalformedInputError(
            f"{path}: feature array shape {features.shape} disagrees with sentence shapes"
        )
    if mask_row.shape != (len(MASK_GROUPS),) and len(cells) > 0:
        raise MalformedInputError(f"{path}: mask row has wrong width")
    return FeatureTable(
        features=features,
        mask=np.tile(mask_row, (len(cells), 1)),
        labels=labels,
        cells=cells,
        shapes=shapes,
        spans=spans,
        golds=golds,
        order=order,
    )


def save_mlp(model: MlpModel, path: str | Path) -> None:
    payload = {
        MLP_FORMAT_KEY: MLP_FORMAT_VERSION,
        "widths": model.widths,
        "feature_names": list(model.feature_names),
        "mask_groups": list(model.mask_groups),
        "extraction": list(model.extraction),
        "seed": model.seed,
        "dropout": model.dropout,
        "feature_mean": model.feature_mean.tolist(),
        "feature_std": model.feature_std.tolist(),
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def load_mlp(path: str | Path) -> MlpModel:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise MalformedInputError(f"{path}: unparseable model file: {err}") from err
    if not isinstance(payload, dict) or payload.get(MLP_FORMAT_KEY) != MLP_FORMAT_VERSION:
        raise MalformedInputError(f"{path}: not a v{MLP_FORMAT_VERSION} regressor file")
    try:
        widths = payload["widths"]
        weights = [np.array(w, dtype=np.float64) for w in payload["weights"]]
        biases = [np.array(b, dtype=np.float64) for b in payload["biases"]]
        model = MlpModel(
            weights=weights,
            biases=biases,
            feature_mean=np.array(payload["feature_mean"], dtype=np.float64),
            feature_std=np.array(payload["feature_std"], dtype=np.float64),
            extraction=tuple(payload["extraction"]),
            seed=int(payload["seed"]),
            dropout=float(payload["dropout"]),
            feature_names=tuple(payload["feature_names"]),
            mask_groups=tuple(payload["mask_groups"]),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise MalformedInputError(f"{path}: corrupt model file: {err}") from err
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        if w.shape != (widths[k], widths[k + 1]) or b.shape != (widths[k + 1],):
            raise MalformedInputError(
                f"{path}: layer {k} shapes {w.shape}/{b.shape} disagree with widths {widths}"
            )
    if model.feature_mean.shape != (len(model.feature_names),):
        raise MalformedInputError(f"{path}: normalization vector width mismatch")
    return model
