import json

import numpy as np
import pytest
from scipy import stats

from mqlab import stathub
from mqlab.stathub import AlphabetMismatch, TestReport


def test_perfect_fit():
    stat, p, dof = stathub.chi_square_gof(np.array([50, 30, 20]), np.array([0.5, 0.3, 0.2]))
    assert stat == 0.0 and p == 1.0 and dof == 2


def test_skewed_expectation_rejected():
    counts = np.full(4, 2500)
    _, p, _ = stathub.chi_square_gof(counts, np.array([0.7, 0.1, 0.1, 0.1]))
    assert p < 1e-6


def test_single_cell_refused():
    with pytest.raises(ValueError):
        stathub.chi_square_gof(np.array([3, 1]), np.array([0.9, 0.1]))


def test_tail_merging():
    groups = stathub.merge_small_cells(np.array([50.0, 20.0, 4.0, 2.0, 1.0]))
    assert [g.tolist() for g in groups] == [[0], [1], [2, 3, 4]]


def test_pvalues_match_reference_quantiles():
    # upper 5% and 0.1% points of chi-square with 1 and 10 dof
    for x, k, p in ((3.841459, 1, 0.05), (18.307038, 10, 0.05), (29.588298, 10, 0.001)):
        assert stats.chi2.sf(x, k) == pytest.approx(p, rel=1e-6)


def test_block_compare_identical_input():
    x = np.random.default_rng(0).integers(0, 3, 3000)
    stat, p, _ = stathub.block_law_compare(x, x, 3)
    assert stat == 0.0 and p == 1.0


def test_block_compare_alphabet_checks():
    with pytest.raises(AlphabetMismatch):
        stathub.block_law_compare(np.zeros((30, 2), int), np.zeros((30, 1), int))
    with pytest.raises(AlphabetMismatch):
        stathub.block_law_compare(np.array([0, 1, 5] * 10), np.array([0, 1, 1] * 10), alphabet=[0, 1])
    with pytest.raises(ValueError):
        stathub.block_law_compare(np.array([0, 1]), np.array([0, 1]), 3)


def test_block_compare_detects_correlation():
    gen = np.random.default_rng(1)
    iid = gen.integers(0, 2, 30_000)
    sticky = np.repeat(gen.integers(0, 2, 10_000), 3)
    _, p, _ = stathub.block_law_compare(iid, sticky, 3)
    assert p < 1e-10


def test_ks_examples():
    gen = np.random.default_rng(2)
    _, p = stathub.ks_test(gen.exponential(1.0, 100_000), stats.expon())
    assert p > 1e-3
    _, p = stathub.ks_test(gen.exponential(1.0, 1000), stats.expon(scale=0.5))
    assert p < 1e-3
    d, _ = stathub.ks_test(np.full(50, 100.0), stats.expon())
    assert d == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        stathub.ks_test([], stats.expon())
    _, p = stathub.ks_two_sample(gen.normal(size=2000), gen.normal(size=3000))
    assert p > 1e-3


def test_reversibility_trivial_and_ks():
    x = np.random.default_rng(3).integers(0, 2, 9000)
    rep = stathub.reversibility_test(x, x)
    assert rep.passed


def test_intensity_and_proportion():
    v = np.random.default_rng(4).random(100_000) < 0.3
    est, se = stathub.estimate_intensity(v)
    assert abs(est - 0.3) < 5 * se
    p, lo, hi = stathub.proportion_ci(30, 100)
    assert lo < p == 0.3 < hi


def test_batched_compare_handles_correlation():
    gen = np.random.default_rng(5)
    # a sticky two-state chain: naive iid chi-square over-rejects equal-law copies, batch means does not
    def chain(n):
        flips = gen.random(n) < 0.05
        return np.cumsum(flips) % 2
    x, y = chain(300_000), chain(300_000)
    _, p, _ = stathub.batched_block_compare(x, y, 3)
    assert p > 1e-3
    _, p, _ = stathub.batched_block_compare(x, (gen.random(300_000) < 0.5).astype(int), 3)
    assert p < 1e-10
    with pytest.raises(ValueError):
        stathub.batched_block_compare(x[:100], y[:90], 3, paired=True)


def test_report_bonferroni_and_json():
    rep = TestReport("demo", alpha=1e-3, metadata={"seed": np.int64(3)})
    rep.null("a", 1.0, 7e-4)
    assert not rep.passed
    # a second test halves the per-test threshold
    rep.null("b", 1.0, 0.9)
    assert rep["a"].passed and rep["a"].threshold == pytest.approx(5e-4)
    rep2 = TestReport.from_dict(json.loads(rep.to_json()))
    assert [t.name for t in rep2.tests] == ["a", "b"] and rep2.metadata["seed"] == 3
    assert json.loads(rep.to_json())["schema"] == 1


def test_report_kinds():
    rep = TestReport("k")
    assert not rep.passed  # an empty battery proves nothing
    rep.exact("e", True, n=3)
    rep.tolerance("t", 1.01, 1.0, 0.02, relative=True)
    rep.reject("control", 10.0, 1e-9)
    rep.check("c", True, value=2)
    assert rep.passed
    rep.reject("weak control", 1.0, 0.5)
    assert not rep.passed
    assert all(line.startswith("[") for line in rep.summary_lines())


def test_merge_and_determinism():
    def build():
        r = TestReport("x", metadata={"cfg": {"a": 1}})
        r.null("n", 2.0, 0.5, dof=3, n=100)
        return r
    a, b = build(), build()
    assert a.to_json(timestamp=False) == b.to_json(timestamp=False)
    m = TestReport.merge([a, b], "both")
    assert len(m.tests) == 2 and m.tests[0].threshold == pytest.approx(5e-4)
    assert stathub.config_digest({"a": 1, "b": [1, 2]}) == stathub.config_digest({"b": [1, 2], "a": 1})
    with pytest.raises(ValueError):
        TestReport.from_dict({"schema": 99})


def test_symmetry_test():
    partner = np.array([1, 0, 2, 4, 3])
    gen = np.random.default_rng(6)
    sym = gen.choice(5, 20_000, p=[0.2, 0.2, 0.2, 0.2, 0.2])
    assert stathub.symmetry_test(sym, partner)[1] > 1e-3
    skew = gen.choice(5, 20_000, p=[0.3, 0.1, 0.2, 0.2, 0.2])
    stat, p, dof = stathub.symmetry_test(skew, partner)
    assert p < 1e-10 and dof == 2
    with pytest.raises(ValueError):
        stathub.symmetry_test(sym, np.array([1, 2, 0, 3, 4]))


def test_reversibility_rejects_an_irreversible_chain():
    # (x(n), x(n-1)) for a chain that cycles 0 -> 1 -> 2: the reversed, swapped pair cycles the other way
    gen = np.random.default_rng(7)
    x = np.cumsum(gen.random(60_000) < 0.7) % 3
    rep = stathub.reversibility_test(x[1:], x[:-1])
    assert not rep.passed
