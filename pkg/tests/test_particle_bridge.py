from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mqlab.fixed_points import FixedPointSpec
from mqlab.multiclass import MulticlassWorkSequence
from mqlab.particle_bridge import (
    HOLE,
    LabelSequence,
    TasepConfig,
    apply_attempts,
    apply_attempts_batch,
    arrivals_to_config,
    attempt_stream,
    densities,
    evolve_rings,
    exact_adjacent_match_m3,
    finite_label_process,
    fixed_point_rings,
    label_spec,
    pair_frequencies,
    repeat_statistics,
    stationarity_check,
    tasep_step_continuous,
)
from mqlab.procgen import FamilySpec, RngStream
from mqlab.fixed_points import construct_fixed_point


def test_mapping_examples():
    empty = MulticlassWorkSequence(0, np.zeros((2, 4), dtype=np.int64))
    assert (arrivals_to_config(empty).sites == HOLE).all()
    one = MulticlassWorkSequence(0, np.array([[1, 0, 0, 0]]))
    assert arrivals_to_config(one).to_row() == ["1", "inf", "inf", "inf"]
    with pytest.raises(ValueError):
        arrivals_to_config(MulticlassWorkSequence(0, np.array([[2, 0]])))
    with pytest.raises(ValueError):
        arrivals_to_config(MulticlassWorkSequence(0, np.array([[1, 0], [1, 0]])))


def test_config_validation_and_csv(tmp_path):
    with pytest.raises(ValueError):
        TasepConfig(np.array([1]), 1)
    with pytest.raises(ValueError):
        TasepConfig(np.array([3, HOLE]), 2)
    c = TasepConfig(np.array([2, HOLE, 1, HOLE]), 2)
    c.write_csv(tmp_path / "c.csv")
    assert TasepConfig.read_csv(tmp_path / "c.csv", 2) == c
    assert c.counts().tolist() == [1, 1, 2]
    assert c.project(1).sites.tolist() == [HOLE, HOLE, 1, HOLE]


def test_jump_rules():
    # a 1 to the right of a 2 swaps with it
    c = TasepConfig(np.array([2, 1, HOLE]), 2)
    assert apply_attempts(c, [1]).sites.tolist() == [1, 2, HOLE]
    # a 2 cannot pass a 1, holes never move, and site 0 jumps across the seam
    c = TasepConfig(np.array([1, 2, HOLE]), 2)
    assert apply_attempts(c, [1, 2]) == c
    assert apply_attempts(c, [0]).sites.tolist() == [HOLE, 2, 1]


def test_all_holes_is_fixed():
    c = TasepConfig(np.full(10, HOLE), 1)
    assert tasep_step_continuous(c, 5.0, 0) == c


def test_single_particle_displacement_is_poisson():
    gen = np.random.default_rng(1)
    n, T, reps = 50, 3.0, 4000
    rings = np.full((reps, n), HOLE)
    rings[:, 25] = 1
    out = evolve_rings(rings, T, gen)
    steps = (25 - np.argmax(out == 1, axis=1)) % n
    assert abs(steps.mean() - T) < 5 * np.sqrt(T / reps)
    assert abs(steps.var() - T) < 0.15 * T


@st.composite
def rings_and_attempts(draw):
    m = draw(st.integers(1, 3))
    n = draw(st.integers(2, 20))
    sites = draw(st.lists(st.sampled_from(list(range(1, m + 1)) + [HOLE]), min_size=n, max_size=n))
    att = draw(st.lists(st.integers(0, n - 1), max_size=200))
    return TasepConfig(np.array(sites), m), np.array(att, dtype=np.int64)


@given(rings_and_attempts())
def test_conservation(ca):
    c, att = ca
    assert np.array_equal(apply_attempts(c, att).counts(), c.counts())


@given(rings_and_attempts(), st.data())
def test_projection_is_pathwise(ca, data):
    c, att = ca
    r = data.draw(st.integers(1, c.m))
    assert apply_attempts(c, att).project(r) == apply_attempts(c.project(r), att)


@given(rings_and_attempts())
def test_batch_matches_loop(ca):
    c, att = ca
    rings = np.stack([c.sites, c.sites])
    out = apply_attempts_batch(rings, np.stack([att, att]))
    assert np.array_equal(out[0], apply_attempts(c, att).sites)


def test_fixed_point_densities():
    spec = FixedPointSpec(FamilySpec.bernoulli(), (0.3, 0.2))
    rings = fixed_point_rings(spec, 1000, 40, RngStream(2))
    d = densities(rings, 2).mean(axis=0)
    assert np.allclose(d, [0.3, 0.2], atol=0.02)
    pf = pair_frequencies(rings, 2)
    assert np.allclose(pf.sum(axis=1), 1.0)


def test_stationarity_small():
    spec = FixedPointSpec(FamilySpec.bernoulli(), (0.3, 0.2))
    rep = stationarity_check(spec, 300, 100.0, 40, RngStream(3), control=False)
    assert rep.passed, "\n".join(rep.summary_lines())


def test_single_class_product_measure_is_stationary():
    spec = FixedPointSpec(FamilySpec.bernoulli(), (0.5,))
    rep = stationarity_check(spec, 300, 100.0, 40, RngStream(4), control=False)
    assert rep.passed, "\n".join(rep.summary_lines())


def test_attempt_stream_rate():
    k = attempt_stream(100, 50.0, 5).size
    assert abs(k - 5000) < 5 * np.sqrt(5000)


def test_label_process_marginal_and_threshold():
    m = 4
    L = finite_label_process(m, 100_000, RngStream(6))
    mids = (np.arange(1, m + 1) - 0.5) / m
    freq = np.array([(L.labels == v).mean() for v in mids])
    assert np.allclose(freq, 1 / m, atol=0.01)
    # thresholding at k/m gives the k-class process with intensities 1/m each
    cls = L.threshold(2 / m)
    assert set(np.unique(cls)) <= {0, 1, 2}
    assert abs((cls == 1).mean() - 0.25) < 0.01 and abs((cls == 2).mean() - 0.25) < 0.01


def test_threshold_is_a_construction_prefix():
    # the same stream builds the first k classes identically
    m = 4
    F = construct_fixed_point(label_spec(m), 20_000, RngStream(7)).arrivals
    lab = F.labels()
    L = finite_label_process(m, 20_000, RngStream(7))
    assert np.array_equal(L.threshold(2 / m), np.where(lab <= 2, lab, 0))


def test_label_validation():
    with pytest.raises(ValueError):
        LabelSequence(np.array([0.5, 1.5]))
    with pytest.raises(ValueError):
        finite_label_process(1, 100, 0)
    with pytest.raises(ValueError):
        LabelSequence(np.array([0.5])).threshold(0.5)


def test_repeat_statistics():
    L = finite_label_process(6, 200_000, RngStream(8))
    stats = repeat_statistics(L, 5)
    assert stats[0][1] == 1.0
    assert all(lo > 0 for _, _, lo, _ in stats)


def test_exact_m3_value():
    assert exact_adjacent_match_m3() == Fraction(10, 27)
    L = finite_label_process(3, 400_000, RngStream(9))
    _, est, lo, hi = repeat_statistics(L, 1)[1]
    assert abs(est - 10 / 27) < 0.01
