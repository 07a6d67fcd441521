import numpy as np
import pytest

from mqlab.fixed_points import (
    FamilyMismatch,
    FixedPointSpec,
    burke_check,
    claims_experiment,
    construct_fixed_point,
    restriction_consistency,
    slot_labels,
    verify_fixed_point,
)
from mqlab.multiclass import MulticlassWorkSequence, restrict_classes
from mqlab.procgen import BerGeomParams, FamilySpec, RngStream, sample_bergeom, solve_params
from mqlab.queue_kernel import WorkSequence, run_queue
from mqlab import stathub


BERN = FamilySpec.bernoulli()


def test_spec_validation():
    with pytest.raises(ValueError):
        FixedPointSpec(BERN, ())
    with pytest.raises(ValueError):
        FixedPointSpec(BERN, (0.2, 0.0))
    s = FixedPointSpec(BERN, (0.2, 0.1, 0.1))
    assert s.m == 3 and s.total == pytest.approx(0.4) and s.restrict(2).lambdas == (0.2, 0.1)
    assert s.stage_params(2).intensity() == pytest.approx(0.3) and s.stage_params(2).alpha == 1.0


def test_single_class_is_iid():
    sample = construct_fixed_point(FixedPointSpec(BERN, (0.3,)), 200_000, RngStream(1))
    v = sample.arrivals.values[0]
    assert v.max() <= 1
    _, p, _ = stathub.bergeom_gof(v, BerGeomParams(0.3, 1.0))
    assert p > 1e-3
    pairs = v[:-1:2] * 2 + v[1::2]
    exp = np.array([0.49, 0.21, 0.21, 0.09])
    _, p, _ = stathub.chi_square_gof(np.bincount(pairs, minlength=4), exp)
    assert p > 1e-3


def test_saturated_stages_have_no_unused_service():
    for fam in (BERN, FamilySpec.interior(1.0)):
        sample = construct_fixed_point(FixedPointSpec(fam, (0.2, 0.1, 0.1)), 50_000, RngStream(2))
        assert sample.saturation_violations == 0


def test_construction_prefix_is_smaller_construction():
    # the first m-1 classes of F_m come from exactly the F_{m-1} recursion under the same stream
    spec = FixedPointSpec(BERN, (0.2, 0.1, 0.1))
    a = construct_fixed_point(spec, 5000, RngStream(3), burn_in=2000)
    assert a.arrivals.m == 3
    tot = a.arrivals.values.sum(axis=0)
    assert tot.max() <= 1


def test_combined_process_law():
    spec = FixedPointSpec(FamilySpec.interior(1.0), (0.2, 0.1))
    sample = construct_fixed_point(spec, 200_000, RngStream(4))
    tot = sample.arrivals.total().values
    _, p, _ = stathub.bergeom_gof(tot, spec.stage_params(2))
    assert p > 1e-3


def test_small_intensity_collapses_to_one_class():
    spec = FixedPointSpec(BERN, (0.3, 1e-3))
    sample = construct_fixed_point(spec, 100_000, RngStream(5))
    est, se = stathub.estimate_intensity(sample.arrivals.values[1])
    assert est < 1e-3 + 6 * se
    _, p, _ = stathub.bergeom_gof(sample.arrivals.values[0], BerGeomParams(0.3, 1.0))
    assert p > 1e-3


def test_verify_fixed_point_small():
    spec = FixedPointSpec(BERN, (0.2, 0.1))
    rep = verify_fixed_point(spec, BerGeomParams(0.6, 1.0), 200_000, RngStream(6))
    assert rep.passed, "\n".join(rep.summary_lines())


def test_verify_saturated_server_is_exact():
    spec = FixedPointSpec(BERN, (0.2, 0.1))
    rep = verify_fixed_point(spec, BerGeomParams(0.3, 1.0), 50_000, RngStream(7))
    assert rep.passed, "\n".join(rep.summary_lines())


def test_family_mismatch():
    spec = FixedPointSpec(BERN, (0.2, 0.1))
    with pytest.raises(FamilyMismatch):
        verify_fixed_point(spec, BerGeomParams(0.3, 0.5), 1000, 0)
    with pytest.raises(FamilyMismatch):
        burke_check(BerGeomParams(0.2, 0.4), BerGeomParams(0.8, 1.0), 1000, 0)


def test_claims_small():
    spec = FixedPointSpec(BERN, (0.2, 0.1))
    rep = claims_experiment(spec, BerGeomParams(0.6, 1.0), None, 200_000, RngStream(8))
    assert rep.passed, "\n".join(rep.summary_lines())
    with pytest.raises(ValueError):
        claims_experiment(spec, BerGeomParams(0.3, 1.0), None, 1000, 0)


def test_restriction_consistency():
    rep = restriction_consistency(FixedPointSpec(BERN, (0.2, 0.1, 0.1)), 200_000, RngStream(9))
    assert rep.passed, "\n".join(rep.summary_lines())


def test_block_compare_detects_independent_classes():
    # relabelling F_2 slots at random destroys the clustering of class 2
    spec = FixedPointSpec(BERN, (0.2, 0.1))
    F = construct_fixed_point(spec, 300_000, RngStream(10)).arrivals
    gen = np.random.default_rng(0)
    lab = F.labels()
    busy = lab > 0
    lab = lab.copy()
    lab[busy] = gen.permutation(lab[busy])
    shuffled = MulticlassWorkSequence.from_labels(lab, 2)
    G = construct_fixed_point(spec, 300_000, RngStream(11)).arrivals
    stat, p, _ = stathub.batched_block_compare(slot_labels(shuffled), slot_labels(G), 3)
    assert p < 1e-6
    assert restrict_classes(shuffled, 1).values.sum() == restrict_classes(F, 1).values.sum()


def test_burke_small():
    fam = FamilySpec.interior(1 / 6)
    rep = burke_check(BerGeomParams(0.2, 0.4), solve_params(0.8, fam), 200_000, RngStream(12))
    assert rep.passed, "\n".join(rep.summary_lines())


def test_reversibility_detects_unmatched_server():
    # arrivals from the c = 1/6 family through a Bernoulli server: no Burke property
    A = sample_bergeom(BerGeomParams(0.2, 0.4), 200_000, 1)
    S = sample_bergeom(BerGeomParams(0.8, 1.0), 200_000, 2)
    D = run_queue(WorkSequence(0, A), WorkSequence(0, S)).D.values
    rev = stathub.reversibility_test(np.minimum(A[2000:], 4), np.minimum(D[2000:], 4))
    assert not rev.passed


def test_lagged_departures_stay_reversible():
    # a time shift of D keeps (A, D) and (D*, A*) equal in law, so it is no negative control
    A = sample_bergeom(BerGeomParams(0.4, 1.0), 200_000, 1)
    S = sample_bergeom(BerGeomParams(0.6, 1.0), 200_000, 2)
    D = run_queue(WorkSequence(0, A), WorkSequence(0, S)).D.values
    assert stathub.reversibility_test(A[1000:], np.roll(D, 1)[1000:]).passed
