"""Tests for feature assembly and the MLP regressor."""

import json
import math

import numpy as np
import pytest

from alignkit.core import (
    GoldAlignment,
    HardAlignment,
    SentencePair,
    SoftAlignment,
    Token,
    pearson,
)
from alignkit.ensemble import (
    DEFAULT_EXTRACTION,
    FEATURE_NAMES,
    HIDDEN_WIDTHS,
    INPUT_WIDTH,
    MASK_GROUPS,
    MlpModel,
    TrainConfig,
    assemble_features,
    ensemble_align,
    levenshtein,
    load_mlp,
    loss_and_grads,
    manual_features,
    mlp_forward,
    mlp_init,
    mlp_train,
    save_mlp,
    validation_aer,
)
from alignkit.errors import MalformedInputError, TrainingError
from alignkit.extract import combine, extract_a3, extract_a4
from alignkit.synthetic import generate


def seg_token(text, pieces):
    return Token(text, tuple(pieces))


def simple_pair(pair_id=0, src=("aaa", "bb"), tgt=("cc", "ddd")):
    return SentencePair.from_strings(pair_id, src, tgt)


# ---------------------------------------------------------------------------
# manual features


def test_pos_diff_matches_hand_value():
    pair = simple_pair()
    feats = manual_features(pair, 0, 1, with_subwords=False)
    assert feats[0] == abs(0 / 2 - 1 / 2) == 0.5
    assert manual_features(pair, 0, 0, with_subwords=False)[0] == 0.0


@pytest.mark.parametrize(
    "a,b,dist",
    [
        ("kitten", "sitting", 3),
        ("abc", "abc", 0),
        ("", "abc", 3),
        ("flaw", "lawn", 2),
        ("a", "b", 1),
    ],
)
def test_levenshtein_known_values(a, b, dist):
    assert levenshtein(a, b) == dist
    assert levenshtein(b, a) == dist


def test_string_features_case_insensitive():
    pair = SentencePair.from_strings(0, ["House"], ["house"])
    feats = manual_features(pair, 0, 0, with_subwords=False)
    assert feats[3] == 0.0  # normalized edit distance
    assert feats[5] == 1.0  # string equality


def test_len_and_lev_features():
    pair = SentencePair.from_strings(0, ["abcd"], ["ab"])
    feats = manual_features(pair, 0, 0, with_subwords=False)
    assert feats[1] == 2.0
    assert feats[3] == levenshtein("abcd", "ab") / 4


def test_subword_features_count_and_overlap():
    src = seg_token("abcdef", ("abc@@", "def"))
    tgt = seg_token("abcxy", ("abc@@", "x@@", "y"))
    pair = SentencePair(0, (src,), (tgt,))
    feats = manual_features(pair, 0, 0)
    assert feats[2] == 1.0  # |2 - 3|
    assert feats[4] == 1.0  # shared unit "abc@@"


def test_manual_features_missing_segmentation_raises():
    pair = simple_pair()
    with pytest.raises(MalformedInputError):
        manual_features(pair, 0, 0, with_subwords=True)


def test_manual_features_index_out_of_range():
    pair = simple_pair()
    with pytest.raises(MalformedInputError):
        manual_features(pair, 2, 0, with_subwords=False)
    with pytest.raises(MalformedInputError):
        manual_features(pair, 0, -1, with_subwords=False)


def test_manual_feature_correlation_signs_on_synthetic_corpus():
    """Sanity-check feature directions against gold labels.

    On the synthetic corpus, gold-linked tokens are dictionary
    translations which often share prefixes (or are identical), so
    edit distance should correlate negatively with the label and
    string equality / subword overlap positively.
    """
    corpus = generate(n_pairs=80, seed=11)
    table = assemble_features(corpus.pairs, corpus.golds)
    cols = {name: table.features[:, FEATURE_NAMES.index(name)] for name in FEATURE_NAMES}
    y = table.labels
    assert pearson(cols["pos_diff"], y) < 0
    assert pearson(cols["levenshtein_norm"], y) < 0
    assert pearson(cols["string_equal"], y) > 0
    assert pearson(cols["subword_overlap"], y) > 0


# ---------------------------------------------------------------------------
# feature assembly


def two_pair_corpus():
    pairs = [
        SentencePair.from_strings(0, ["a", "b"], ["x", "y", "z"]),
        SentencePair.from_strings(1, ["c"], ["w", "v"]),
    ]
    golds = [
        GoldAlignment(frozenset({(0, 0)}), frozenset({(1, 2)})),
        GoldAlignment(frozenset({(0, 1)})),
    ]
    return pairs, golds


def test_assemble_row_order_and_spans():
    pairs, golds = two_pair_corpus()
    table = assemble_features(pairs, golds)
    assert len(table) == 2 * 3 + 1 * 2
    assert table.cells == [
        (0, 0, 0), (0, 0, 1), (0, 0, 2),
        (0, 1, 0), (0, 1, 1), (0, 1, 2),
        (1, 0, 0), (1, 0, 1),
    ]
    assert table.spans == {0: (0, 6), 1: (6, 8)}
    assert table.shapes == {0: (2, 3), 1: (1, 2)}
    assert table.order == (0, 1)
    assert table.features.shape == (8, len(FEATURE_NAMES))
    assert table.mask.shape == (8, len(MASK_GROUPS))


def test_assemble_labels_sure_plus_possible_and_sure_only():
    pairs, golds = two_pair_corpus()
    table = assemble_features(pairs, golds)
    labelled = {cell for cell, lab in zip(table.cells, table.labels) if lab == 1.0}
    assert labelled == {(0, 0, 0), (0, 1, 2), (1, 0, 1)}
    sure_only = assemble_features(pairs, golds, positives="sure")
    labelled = {cell for cell, lab in zip(sure_only.cells, sure_only.labels) if lab == 1.0}
    assert labelled == {(0, 0, 0), (1, 0, 1)}


def test_assemble_places_channel_values():
    pairs, golds = two_pair_corpus()
    m1 = [
        SoftAlignment(np.arange(6, dtype=float).reshape(2, 3) * -1.0, "log"),
        SoftAlignment(np.array([[-7.0, -8.0]]), "log"),
    ]
    rev = [
        SoftAlignment(np.full((2, 3), -0.25), "log"),
        SoftAlignment(np.full((1, 2), -0.5), "log"),
    ]
    baseline = [
        HardAlignment(frozenset({(1, 1)})),
        HardAlignment(frozenset()),
    ]
    table = assemble_features(
        pairs, golds, {"m1": m1, "m1_reverse": rev}, baseline=baseline
    )
    col = FEATURE_NAMES.index
    for row, (pid, i, j) in enumerate(table.cells):
        assert table.features[row, col("m1")] == m1[pid].scores[i, j]
        assert table.features[row, col("m1_reverse")] == rev[pid].scores[i, j]
        expected_bin = 1.0 if (pid, i, j) == (0, 1, 1) else 0.0
        assert table.features[row, col("fastalign_binary")] == expected_bin
        # absent channels are zero-filled
        assert table.features[row, col("m2b")] == 0.0
    mask = dict(zip(MASK_GROUPS, table.mask[0]))
    assert mask["m1"] == 1.0 and mask["m1_reverse"] == 1.0
    assert mask["fastalign_binary"] == 1.0
    assert mask["m2b"] == 0.0 and mask["m3aa"] == 0.0
    assert mask["subwords"] == 0.0  # from_strings corpora carry no segmentation


def test_assemble_subword_mask_set_when_segmented():
    corpus = generate(n_pairs=4, seed=3)
    table = assemble_features(corpus.pairs, corpus.golds)
    assert all(row[MASK_GROUPS.index("subwords")] == 1.0 for row in table.mask)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"score_sources": {"bogus": []}},
        {"score_sources": {"m1": []}},  # wrong matrix count
        {"baseline": [HardAlignment(frozenset())]},  # wrong count
        {"positives": "everything"},
    ],
)
def test_assemble_rejects_bad_inputs(kwargs):
    pairs, golds = two_pair_corpus()
    call = {"score_sources": None, "baseline": None, "positives": "sure+possible"}
    call.update(kwargs)
    with pytest.raises(MalformedInputError):
        assemble_features(pairs, golds, **call)


def test_assemble_rejects_wrong_matrix_dims():
    pairs, golds = two_pair_corpus()
    bad = [
        SoftAlignment(np.zeros((3, 2)), "log"),  # transposed
        SoftAlignment(np.zeros((1, 2)), "log"),
    ]
    with pytest.raises(MalformedInputError, match="sentence pair 0"):
        assemble_features(pairs, golds, {"m1": bad})


def test_assemble_rejects_duplicate_pair_ids():
    pair = simple_pair(pair_id=5)
    gold = GoldAlignment(frozenset({(0, 0)}))
    with pytest.raises(MalformedInputError, match="duplicate"):
        assemble_features([pair, pair], [gold, gold])


# ---------------------------------------------------------------------------
# MLP forward


def random_params(seed, input_width=INPUT_WIDTH):
    weights, biases = mlp_init(seed, input_width)
    rng = np.random.default_rng(seed + 1)
    biases = [rng.normal(0, 0.1, size=b.shape) for b in biases]
    return weights, biases


def identity_model(weights, biases):
    return MlpModel(
        weights=weights,
        biases=biases,
        feature_mean=np.zeros(len(FEATURE_NAMES)),
        feature_std=np.ones(len(FEATURE_NAMES)),
    )


def oracle_forward(weights, biases, x):
    """Scalar re-implementation with explicit loops and math.tanh."""
    h = [float(v) for v in x]
    for k in range(len(weights) - 1):
        w, b = weights[k], biases[k]
        h = [
            math.tanh(sum(h[a] * w[a][c] for a in range(len(h))) + b[c])
            for c in range(w.shape[1])
        ]
    w, b = weights[-1], biases[-1]
    z = sum(h[a] * w[a][0] for a in range(len(h))) + b[0]
    return 1.0 / (1.0 + math.exp(-z))


def test_zero_parameters_output_half():
    weights, biases = mlp_init(0)
    weights = [np.zeros_like(w) for w in weights]
    model = identity_model(weights, biases)
    rng = np.random.default_rng(4)
    assert mlp_forward(model, rng.normal(size=INPUT_WIDTH)) == 0.5


def test_forward_matches_scalar_oracle():
    weights, biases = random_params(7)
    model = identity_model(weights, biases)
    rng = np.random.default_rng(8)
    for _ in range(20):
        x = rng.normal(size=INPUT_WIDTH)
        assert mlp_forward(model, x) == pytest.approx(
            oracle_forward(weights, biases, x), abs=1e-10
        )


def test_forward_width_mismatch_raises():
    model = identity_model(*mlp_init(0))
    with pytest.raises(MalformedInputError):
        mlp_forward(model, np.zeros(INPUT_WIDTH + 1))


def test_forward_output_strictly_inside_unit_interval():
    weights, biases = random_params(9)
    model = identity_model(weights, biases)
    for scale in (0.0, 1.0, 1e3, -1e3):
        out = mlp_forward(model, np.full(INPUT_WIDTH, scale))
        assert 0.0 < out < 1.0


def test_forward_applies_stored_normalization():
    weights, biases = random_params(10)
    mean = np.full(len(FEATURE_NAMES), 2.0)
    std = np.full(len(FEATURE_NAMES), 4.0)
    model = MlpModel(weights=weights, biases=biases, feature_mean=mean, feature_std=std)
    plain = identity_model(weights, biases)
    x = np.concatenate([np.full(len(FEATURE_NAMES), 6.0), np.ones(len(MASK_GROUPS))])
    x_norm = np.concatenate([np.full(len(FEATURE_NAMES), 1.0), np.ones(len(MASK_GROUPS))])
    assert mlp_forward(model, x) == mlp_forward(plain, x_norm)


# ---------------------------------------------------------------------------
# loss and gradients


def test_loss_matches_naive_cross_entropy():
    weights, biases = random_params(12)
    rng = np.random.default_rng(13)
    x = rng.normal(size=(16, INPUT_WIDTH))
    y = (rng.random(16) < 0.5).astype(float)
    loss, _, _ = loss_and_grads(weights, biases, x, y, pos_weight=1.0)
    probs = np.array([oracle_forward(weights, biases, row) for row in x])
    naive = -np.mean(y * np.log(probs) + (1 - y) * np.log(1 - probs))
    assert loss == pytest.approx(naive, rel=1e-9)


def test_loss_pos_weight_scales_positive_term():
    weights, biases = random_params(14)
    rng = np.random.default_rng(15)
    x = rng.normal(size=(8, INPUT_WIDTH))
    y_pos = np.ones(8)
    y_neg = np.zeros(8)
    loss_pos_1, _, _ = loss_and_grads(weights, biases, x, y_pos, pos_weight=1.0)
    loss_pos_3, _, _ = loss_and_grads(weights, biases, x, y_pos, pos_weight=3.0)
    loss_neg_1, _, _ = loss_and_grads(weights, biases, x, y_neg, pos_weight=1.0)
    loss_neg_3, _, _ = loss_and_grads(weights, biases, x, y_neg, pos_weight=3.0)
    assert loss_pos_3 == pytest.approx(3.0 * loss_pos_1, rel=1e-12)
    assert loss_neg_3 == loss_neg_1


def numeric_grad(weights, biases, x, y, pos_weight, drop_masks, which, k, idx, h=1e-5):
    def loss_at(delta):
        ws = [w.copy() for w in weights]
        bs = [b.copy() for b in biases]
        (ws if which == "w" else bs)[k][idx] += delta
        loss, _, _ = loss_and_grads(ws, bs, x, y, pos_weight, drop_masks)
        return loss

    return (loss_at(h) - loss_at(-h)) / (2 * h)


def grad_errors(weights, biases, x, y, pos_weight, drop_masks=None):
    """Relative error of every analytic gradient vs central differences.

    The denominator is floored at 1e-6: below that magnitude the finite
    difference itself is dominated by float noise and the comparison is
    meaningless.
    """
    loss, grad_w, grad_b = loss_and_grads(weights, biases, x, y, pos_weight, drop_masks)
    assert np.isfinite(loss)
    errors = []
    for k in range(len(weights)):
        for idx in np.ndindex(weights[k].shape):
            num = numeric_grad(weights, biases, x, y, pos_weight, drop_masks, "w", k, idx)
            ana = grad_w[k][idx]
            errors.append(abs(ana - num) / max(abs(ana), abs(num), 1e-6))
        for idx in np.ndindex(biases[k].shape):
            num = numeric_grad(weights, biases, x, y, pos_weight, drop_masks, "b", k, idx)
            ana = grad_b[k][idx]
            errors.append(abs(ana - num) / max(abs(ana), abs(num), 1e-6))
    return errors


def test_gradients_match_finite_differences_small_net():
    # A narrow input keeps the full-gradient sweep fast.
    weights, biases = random_params(20, input_width=3)
    rng = np.random.default_rng(21)
    x = rng.normal(size=(6, 3))
    y = (rng.random(6) < 0.5).astype(float)
    errors = grad_errors(weights, biases, x, y, pos_weight=2.5)
    assert max(errors) < 1e-4


def test_gradients_match_with_fixed_dropout_masks():
    weights, biases = random_params(22, input_width=3)
    rng = np.random.default_rng(23)
    x = rng.normal(size=(5, 3))
    y = (rng.random(5) < 0.5).astype(float)
    drop_masks = [
        (rng.random((5, HIDDEN_WIDTHS[0])) >= 0.2) / 0.8,
        (rng.random((5, HIDDEN_WIDTHS[1])) >= 0.2) / 0.8,
    ]
    errors = grad_errors(weights, biases, x, y, 1.0, drop_masks)
    assert max(errors) < 1e-4


# ---------------------------------------------------------------------------
# training


def separable_table(n_pairs=24, size=3, seed=0):
    """Corpus whose m1 channel perfectly separates the diagonal gold."""
    rng = np.random.default_rng(seed)
    pairs, golds, mats = [], [], []
    words = ["w%d" % k for k in range(size)]
    for pid in range(n_pairs):
        pairs.append(SentencePair.from_strings(pid, words, words))
        golds.append(GoldAlignment(frozenset((k, k) for k in range(size))))
        base = -6.0 + rng.normal(0, 0.1, size=(size, size))
        for k in range(size):
            base[k, k] = -1.0 + rng.normal(0, 0.1)
        mats.append(SoftAlignment(base, "log"))
    table = assemble_features(pairs, golds, {"m1": mats})
    return table, pairs, golds, mats


def test_training_fits_separable_corpus():
    table, _, _, _ = separable_table()
    config = TrainConfig(epochs=50, learning_rate=0.05, batch_size=64, seed=1)
    model, log = mlp_train(table, config)
    assert log["best_val_aer"] == 0.0
    assert validation_aer(model, table, log["val_ids"]) == 0.0
    assert len(log["epochs"]) == 50
    assert log["epochs"][log["best_epoch"]]["val_aer"] == log["best_val_aer"]


def test_training_is_deterministic():
    table, _, _, _ = separable_table()
    config = TrainConfig(epochs=5, seed=42)
    model_a, log_a = mlp_train(table, config)
    model_b, log_b = mlp_train(table, config)
    for wa, wb in zip(model_a.weights, model_b.weights):
        assert np.array_equal(wa, wb)
    for ba, bb in zip(model_a.biases, model_b.biases):
        assert np.array_equal(ba, bb)
    assert log_a == log_b


def test_training_split_is_on_sentence_boundaries():
    table, _, _, _ = separable_table(n_pairs=20)
    config = TrainConfig(epochs=2, seed=3, val_fraction=0.25)
    model, log = mlp_train(table, config)
    assert len(log["val_ids"]) == 5
    assert set(log["train_ids"]) | set(log["val_ids"]) == set(table.order)
    assert not set(log["train_ids"]) & set(log["val_ids"])
    # normalization statistics come from the training rows only
    train_rows = np.concatenate([np.arange(*table.spans[p]) for p in log["train_ids"]])
    z = (table.features[train_rows] - model.feature_mean) / model.feature_std
    assert np.all(np.abs(z.mean(axis=0)) < 1e-6)


def test_training_pos_weight_is_class_ratio():
    table, _, _, _ = separable_table(n_pairs=20, size=3)
    config = TrainConfig(epochs=1, seed=5)
    _, log = mlp_train(table, config)
    train_rows = np.concatenate([np.arange(*table.spans[p]) for p in log["train_ids"]])
    y = table.labels[train_rows]
    assert log["pos_weight"] == (len(y) - y.sum()) / y.sum()


def test_training_single_class_raises():
    pairs = [SentencePair.from_strings(k, ["a", "b"], ["x", "y"]) for k in range(6)]
    golds = [
        GoldAlignment(
            frozenset((i, j) for i in range(2) for j in range(2))
        )
        for _ in pairs
    ]
    table = assemble_features(pairs, golds)  # every cell positive
    with pytest.raises(TrainingError, match="single class"):
        mlp_train(table, TrainConfig(epochs=1, seed=0))


def test_training_requires_gold_annotations():
    pairs = [SentencePair.from_strings(k, ["a"], ["x"]) for k in range(4)]
    table = assemble_features(pairs, None)
    with pytest.raises(TrainingError, match="gold"):
        mlp_train(table, TrainConfig(epochs=1))


def test_training_reports_nonfinite_loss_epoch():
    table, _, _, _ = separable_table(n_pairs=10)
    table.features[0, 0] = np.inf
    with np.errstate(invalid="ignore"):
        with pytest.raises(TrainingError, match="epoch 0"):
            mlp_train(table, TrainConfig(epochs=3, seed=0))


def test_train_config_validation():
    with pytest.raises(MalformedInputError):
        TrainConfig(epochs=0)
    with pytest.raises(MalformedInputError):
        TrainConfig(val_fraction=1.0)
    with pytest.raises(MalformedInputError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(Exception):
        TrainConfig(extraction=("a9:1",))


# ---------------------------------------------------------------------------
# applying the model


def passthrough_model():
    """A model whose output is a strictly increasing map of the m1 feature.

    Every output stays above the a2 floor of 0.001, so the default
    extraction chain reduces to a3:1 ∩ a4:1 over the m1 channel.
    """
    weights, biases = mlp_init(0)
    weights = [np.zeros_like(w) for w in weights]
    biases = [np.zeros_like(b) for b in biases]
    weights[0][0, 0] = 0.5
    for k in range(1, len(weights)):
        weights[k][0, 0] = 1.0
    biases[-1][0] = 6.0
    return identity_model(weights, biases)


def test_ensemble_align_passthrough_matches_chain_on_m1():
    rng = np.random.default_rng(31)
    pairs, mats = [], []
    for pid in range(20):
        n_src = int(rng.integers(2, 5))
        n_tgt = int(rng.integers(2, 5))
        pairs.append(
            SentencePair.from_strings(
                pid, ["s%d" % k for k in range(n_src)], ["t%d" % k for k in range(n_tgt)]
            )
        )
        mats.append(SoftAlignment(rng.normal(size=(n_src, n_tgt)), "logit-diff"))
    model = passthrough_model()
    got = ensemble_align(model, pairs, {"m1": mats})
    for hyp, sa in zip(got, mats):
        expected = combine([extract_a3(sa, 1.0), extract_a4(sa, 1.0)], "intersect")
        assert hyp.pairs == expected.pairs


def test_ensemble_align_width_mismatch_raises():
    weights, biases = mlp_init(0, input_width=INPUT_WIDTH + 2)
    model = MlpModel(
        weights=weights,
        biases=biases,
        feature_mean=np.zeros(len(FEATURE_NAMES)),
        feature_std=np.ones(len(FEATURE_NAMES)),
    )
    with pytest.raises(MalformedInputError, match="width"):
        ensemble_align(model, [simple_pair()])


def test_trained_model_applies_to_fresh_sentences():
    table, pairs, golds, mats = separable_table(n_pairs=30)
    model, _ = mlp_train(table, TrainConfig(epochs=40, learning_rate=0.05, seed=2))
    # score unseen sentences drawn from the same construction
    _, fresh_pairs, fresh_golds, fresh_mats = separable_table(n_pairs=8, seed=99)
    hyps = ensemble_align(model, fresh_pairs, {"m1": fresh_mats})
    from alignkit.core import corpus_eval

    _, _, err = corpus_eval(hyps, fresh_golds)
    assert err == 0.0


# ---------------------------------------------------------------------------
# persistence


def trained_model():
    table, _, _, _ = separable_table(n_pairs=12)
    model, _ = mlp_train(table, TrainConfig(epochs=3, seed=7))
    return model


def test_save_load_round_trip_is_bit_exact(tmp_path):
    model = trained_model()
    path = tmp_path / "mlp.json"
    save_mlp(model, path)
    loaded = load_mlp(path)
    for wa, wb in zip(model.weights, loaded.weights):
        assert np.array_equal(wa, wb)
    for ba, bb in zip(model.biases, loaded.biases):
        assert np.array_equal(ba, bb)
    assert np.array_equal(model.feature_mean, loaded.feature_mean)
    assert np.array_equal(model.feature_std, loaded.feature_std)
    assert loaded.extraction == model.extraction
    assert loaded.widths == model.widths
    rng = np.random.default_rng(17)
    for _ in range(10):
        x = rng.normal(size=INPUT_WIDTH)
        assert mlp_forward(model, x) == mlp_forward(loaded, x)
    # a second save emits identical bytes
    path2 = tmp_path / "again.json"
    save_mlp(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_saved_model_is_versioned_json(tmp_path):
    model = trained_model()
    path = tmp_path / "mlp.json"
    save_mlp(model, path)
    payload = json.loads(path.read_text())
    assert payload["alignkit_mlp"] == 1
    assert payload["widths"] == [INPUT_WIDTH, *HIDDEN_WIDTHS, 1]
    assert payload["feature_names"] == list(FEATURE_NAMES)
    assert payload["extraction"] == list(DEFAULT_EXTRACTION)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda p: "not json at all",
        lambda p: json.dumps({"something": 1}),
        lambda p: json.dumps({**p, "alignkit_mlp": 2}),
        lambda p: json.dumps({k: v for k, v in p.items() if k != "weights"}),
        lambda p: json.dumps({**p, "widths": [4, 1]}),
        lambda p: json.dumps({**p, "feature_mean": [0.0]}),
    ],
)
def test_load_rejects_corrupt_files(tmp_path, mutate):
    model = trained_model()
    path = tmp_path / "mlp.json"
    save_mlp(model, path)
    payload = json.loads(path.read_text())
    path.write_text(mutate(payload))
    with pytest.raises(MalformedInputError):
        load_mlp(path)
