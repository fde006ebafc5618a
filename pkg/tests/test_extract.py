"""Tests for extractors, set algebra, and symmetrization."""

import numpy as np
import pytest

from alignkit.core import GoldAlignment, HardAlignment, SoftAlignment, aer, precision, recall
from alignkit.errors import ConfigError, FitError, MalformedInputError
from alignkit.extract import (
    ExtractorSpec,
    SymSpec,
    alpha_sweep,
    combine,
    extract_a1,
    extract_a2,
    extract_a3,
    extract_a4,
    fit_linear_sym,
    symmetrize_hard,
    symmetrize_scores,
    transpose_alignment,
)


def soft(rows, tag="log"):
    return SoftAlignment(np.array(rows, dtype=np.float64), tag)


def hard(pairs, rows=None, cols=None):
    return HardAlignment(frozenset(pairs), rows=rows, cols=cols)


def random_soft(rng, rows=None, cols=None, tag="log"):
    r = rows or int(rng.integers(1, 6))
    c = cols or int(rng.integers(1, 6))
    return SoftAlignment(rng.normal(size=(r, c)), tag)


# ---------------------------------------------------------------------------
# extractors


def test_a1_examples():
    assert extract_a1(soft([[0.9, 0.1], [0.2, 0.8]])).pairs == {(0, 0), (1, 1)}
    assert extract_a1(soft([[0.5, 0.5]])).pairs == {(0, 0), (0, 1)}


def test_a1_matches_brute_force():
    rng = np.random.default_rng(19)
    for _ in range(50):
        sa = random_soft(rng, rows=3, cols=4)
        got = extract_a1(sa).pairs
        want = set()
        for i in range(3):
            best = max(sa.scores[i])
            want |= {(i, j) for j in range(4) if sa.scores[i][j] == best}
        assert got == want


def test_a1_all_equal_matrix_gives_cartesian_set():
    sa = soft([[0.3, 0.3, 0.3], [0.3, 0.3, 0.3]])
    assert extract_a1(sa).pairs == {(i, j) for i in range(2) for j in range(3)}


def test_a2_examples():
    sa = soft([[0.9, 0.1], [0.2, 0.8]])
    assert extract_a2(sa, 0.5).pairs == {(0, 0), (1, 1)}
    assert extract_a2(sa, -1e18).pairs == {(i, j) for i in range(2) for j in range(2)}
    assert extract_a2(sa, 0.95).pairs == set()


def test_a3_positive_row_hand_case():
    # threshold = min(4*0.5, 4/0.5) = 2
    assert extract_a3(soft([[4.0, 2.0, 1.0]]), 0.5).pairs == {(0, 0), (0, 1)}


def test_a3_negative_row_hand_case():
    # threshold = min(-2*0.5, -2/0.5) = -4
    assert extract_a3(soft([[-2.0, -4.0, -8.0]]), 0.5).pairs == {(0, 0), (0, 1)}


def test_a3_alpha_one_equals_a1():
    rng = np.random.default_rng(29)
    for _ in range(200):
        sa = random_soft(rng)
        assert extract_a3(sa, 1.0).pairs == extract_a1(sa).pairs


def test_a3_alpha_bounds():
    sa = soft([[1.0]])
    for bad in (0.0, -0.5, 1.5):
        with pytest.raises(ConfigError):
            extract_a3(sa, bad)
        with pytest.raises(ConfigError):
            extract_a4(sa, bad)


def test_a4_examples():
    assert extract_a4(soft([[0.9, 0.1], [0.2, 0.8]]), 1.0).pairs == {(0, 0), (1, 1)}
    assert extract_a4(soft([[0.5], [0.5]]), 1.0).pairs == {(0, 0), (1, 0)}


def test_a4_is_transpose_dual_of_a3():
    rng = np.random.default_rng(37)
    for _ in range(200):
        sa = random_soft(rng)
        alpha = float(rng.uniform(0.05, 1.0))
        dual = transpose_alignment(extract_a3(sa.transposed(), alpha))
        assert extract_a4(sa, alpha).pairs == dual.pairs


def test_a3_a4_monotone_in_alpha():
    rng = np.random.default_rng(41)
    for _ in range(100):
        sa = random_soft(rng)
        a_small, a_big = sorted(rng.uniform(0.05, 1.0, size=2))
        assert extract_a3(sa, a_big).pairs <= extract_a3(sa, a_small).pairs
        assert extract_a4(sa, a_big).pairs <= extract_a4(sa, a_small).pairs


def test_a2_size_monotone_in_alpha():
    rng = np.random.default_rng(43)
    for _ in range(100):
        sa = random_soft(rng)
        t_small, t_big = sorted(rng.normal(size=2))
        assert len(extract_a2(sa, t_big)) <= len(extract_a2(sa, t_small))


# ---------------------------------------------------------------------------
# set algebra


def test_combine_examples():
    assert combine([hard({(0, 0)}), hard({(1, 1)})], "union").pairs == {(0, 0), (1, 1)}
    assert combine([hard({(0, 0), (1, 1)}), hard({(1, 1)})], "intersect").pairs == {(1, 1)}


def test_combine_chain_matches_brute_force():
    rng = np.random.default_rng(47)
    for _ in range(50):
        sa = SoftAlignment(rng.uniform(0, 1, size=(4, 4)), "probability")
        got = combine(
            [extract_a2(sa, 0.001), extract_a3(sa, 1.0), extract_a4(sa, 1.0)],
            "intersect",
        ).pairs
        want = set()
        for i in range(4):
            for j in range(4):
                v = sa.scores[i, j]
                if v >= 0.001 and v == sa.scores[i].max() and v == sa.scores[:, j].max():
                    want.add((i, j))
        assert got == want


def test_combine_validation():
    with pytest.raises(MalformedInputError):
        combine([], "union")
    with pytest.raises(ConfigError):
        combine([hard({(0, 0)})], "xor")
    with pytest.raises(MalformedInputError):
        combine([hard({(0, 0)}, rows=2, cols=2), hard({(0, 0)}, rows=3, cols=2)], "union")


def test_transpose_alignment():
    assert transpose_alignment(hard({(0, 1)})).pairs == {(1, 0)}
    a = hard({(0, 2), (1, 0)}, rows=2, cols=3)
    back = transpose_alignment(transpose_alignment(a))
    assert back.pairs == a.pairs and back.rows == 2 and back.cols == 3


# ---------------------------------------------------------------------------
# symmetrization


def test_symmetrize_reverse():
    fwd = soft([[-5.0]])
    rev = soft([[-1.0]])
    out = symmetrize_scores(fwd, rev, SymSpec("reverse"))
    assert out.scores[0, 0] == -1.0


def test_symmetrize_add_hand_case():
    fwd = soft([[-1.0, -2.0]])
    rev = soft([[-3.0], [-4.0]])
    out = symmetrize_scores(fwd, rev, SymSpec("add"))
    np.testing.assert_array_equal(out.scores, [[-4.0, -6.0]])
    assert out.space_tag == "log"


def test_symmetrize_add_exact_elementwise():
    rng = np.random.default_rng(53)
    fwd = random_soft(rng, rows=3, cols=5)
    rev = random_soft(rng, rows=5, cols=3)
    out = symmetrize_scores(fwd, rev, SymSpec("add"))
    for i in range(3):
        for j in range(5):
            assert out.scores[i, j] == fwd.scores[i, j] + rev.scores[j, i]


def test_symmetrize_multiply():
    fwd = SoftAlignment(np.array([[0.5, 0.2]]), "probability")
    rev = SoftAlignment(np.array([[0.4], [0.9]]), "probability")
    out = symmetrize_scores(fwd, rev, SymSpec("multiply"))
    np.testing.assert_allclose(out.scores, [[0.2, 0.18]])
    assert out.space_tag == "probability"


def test_symmetrize_space_rules():
    prob = SoftAlignment(np.array([[0.5]]), "probability")
    logm = soft([[-1.0]])
    with pytest.raises(MalformedInputError):
        symmetrize_scores(prob, prob, SymSpec("add"))
    with pytest.raises(MalformedInputError):
        symmetrize_scores(logm, logm, SymSpec("multiply"))
    with pytest.raises(MalformedInputError):
        symmetrize_scores(logm, SoftAlignment(np.array([[-1.0]]), "logit-diff"), SymSpec("add"))


def test_symmetrize_dimension_check():
    with pytest.raises(MalformedInputError):
        symmetrize_scores(soft([[-1.0, -2.0]]), soft([[-1.0, -2.0]]), SymSpec("add"))


def test_symmetrize_linear_identity():
    rng = np.random.default_rng(59)
    fwd = random_soft(rng, rows=2, cols=3)
    rev = random_soft(rng, rows=3, cols=2)
    out = symmetrize_scores(fwd, rev, SymSpec("linear", (1.0, 0.0, 0.0)))
    np.testing.assert_array_equal(out.scores, fwd.scores)


def test_symmetrize_rejects_intersect_on_scores():
    with pytest.raises(ConfigError):
        symmetrize_scores(soft([[-1.0]]), soft([[-1.0]]), SymSpec("intersect"))


def test_symmetrize_hard_examples():
    fwd = hard({(0, 0), (0, 1)})
    rev = hard({(0, 0)})
    assert symmetrize_hard(fwd, rev).pairs == {(0, 0)}
    self_rev = transpose_alignment(fwd)
    assert symmetrize_hard(fwd, self_rev).pairs == fwd.pairs


def test_symmetrize_hard_size_bound():
    rng = np.random.default_rng(61)
    for _ in range(50):
        fwd_pairs = {(int(a), int(b)) for a, b in rng.integers(0, 4, size=(5, 2))}
        rev_pairs = {(int(a), int(b)) for a, b in rng.integers(0, 4, size=(5, 2))}
        out = symmetrize_hard(hard(fwd_pairs), hard(rev_pairs))
        assert len(out) <= min(len(fwd_pairs), len(rev_pairs))


def test_symmetrize_hard_dimension_check():
    with pytest.raises(MalformedInputError):
        symmetrize_hard(hard({(0, 0)}, rows=2, cols=3), hard({(0, 0)}, rows=2, cols=3))


# ---------------------------------------------------------------------------
# linear fit


def test_fit_linear_recovers_exact_coefficients():
    rng = np.random.default_rng(67)
    p = rng.normal(size=40)
    pr = rng.normal(size=40)
    labels = 0.5 * p + 0.5 * pr
    betas = fit_linear_sym(list(zip(p, pr, labels)))
    assert betas == pytest.approx((0.5, 0.5, 0.0), abs=1e-8)


def test_fit_linear_zero_labels():
    rng = np.random.default_rng(71)
    samples = [(float(a), float(b), 0.0) for a, b in rng.normal(size=(10, 2))]
    assert fit_linear_sym(samples) == pytest.approx((0.0, 0.0, 0.0), abs=1e-12)


def test_fit_linear_duplication_invariance():
    rng = np.random.default_rng(73)
    base = [
        (float(a), float(b), float(c)) for a, b, c in rng.normal(size=(12, 3))
    ]
    once = fit_linear_sym(base)
    twice = fit_linear_sym(base + base)
    assert twice == pytest.approx(once, rel=1e-9)


def test_fit_linear_errors():
    with pytest.raises(FitError):
        fit_linear_sym([(1.0, 2.0, 0.5), (2.0, 1.0, 0.5)])  # too few
    # second column is a multiple of the first -> rank deficient
    samples = [(x, 2.0 * x, 0.0) for x in (1.0, 2.0, 3.0, 4.0)]
    with pytest.raises(FitError):
        fit_linear_sym(samples)


# ---------------------------------------------------------------------------
# sweeps and spec parsing


def test_alpha_sweep_a3_at_one_equals_a1():
    rng = np.random.default_rng(79)
    scores, golds = [], []
    for _ in range(10):
        sa = random_soft(rng, rows=4, cols=4)
        scores.append(sa)
        golds.append(GoldAlignment(frozenset({(0, 0), (1, 1)}), rows=4, cols=4))
    rows = alpha_sweep(scores, golds, "a3", [0.5, 1.0])
    assert [r[0] for r in rows] == [0.5, 1.0]
    hyps = [extract_a1(sa) for sa in scores]
    from alignkit.core import corpus_eval

    assert rows[1][1:] == pytest.approx(corpus_eval(hyps, golds))


def test_alpha_sweep_a2_full_coverage_below_min():
    sa = SoftAlignment(np.array([[0.4, 0.6], [0.9, 0.1]]), "probability")
    gold = GoldAlignment(frozenset({(0, 1), (1, 0)}), rows=2, cols=2)
    rows = alpha_sweep([sa], [gold], "a2", [0.0])
    alpha, prec, rec, rate = rows[0]
    assert rec == 1.0
    assert prec == pytest.approx(2.0 / 4.0)
    assert rate == pytest.approx(aer(extract_a2(sa, 0.0), gold))


def test_alpha_sweep_validation():
    with pytest.raises(ConfigError):
        alpha_sweep([], [], "a1", [1.0])
    with pytest.raises(MalformedInputError):
        alpha_sweep([soft([[0.0]])], [], "a2", [1.0])


def test_extractor_spec_parsing():
    assert ExtractorSpec.parse("a1") == ExtractorSpec("a1")
    assert ExtractorSpec.parse("a2:0.5") == ExtractorSpec("a2", 0.5)
    assert ExtractorSpec.parse("a3:1") == ExtractorSpec("a3", 1.0)
    rng = np.random.default_rng(83)
    sa = random_soft(rng)
    assert ExtractorSpec.parse("a3:1").apply(sa).pairs == extract_a1(sa).pairs
    for bad in ("a5", "a2", "a3:2", "a3:0", "a1:0.5", "a3:x"):
        with pytest.raises(ConfigError):
            ExtractorSpec.parse(bad)


def test_sym_spec_parsing():
    assert SymSpec.parse("add") == SymSpec("add")
    assert SymSpec.parse("linear:1,0,0") == SymSpec("linear", (1.0, 0.0, 0.0))
    for bad in ("grow-diag", "linear", "linear:1,2", "add:1,2,3", "linear:a,b,c"):
        with pytest.raises(ConfigError):
            SymSpec.parse(bad)
