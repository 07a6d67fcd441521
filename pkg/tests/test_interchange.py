import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mqlab.fixed_points import FamilyMismatch
from mqlab.interchange import (
    compare_orderings,
    coupled_tandems_agree,
    exact_output_laws,
    law_distance,
    make_coupled_pair_bernoulli,
    minplus_pair,
    minplus_table,
    replacement_counterexamples,
    replacement_invariance_check,
    reversed_replacement_check,
    second_replacement_check,
    transfer_pair,
    verify_interchangeability,
)
from mqlab.multiclass import MulticlassWorkSequence
from mqlab.procgen import BerGeomParams, FamilySpec, RngStream, solve_params
from mqlab.queue_kernel import WorkSequence, tandem


def pair(max_len=48, max_value=6):
    return st.integers(1, max_len).flatmap(lambda n: st.tuples(
        st.lists(st.integers(0, max_value), min_size=n, max_size=n),
        st.lists(st.integers(0, max_value), min_size=n, max_size=n)))


def test_minplus_examples():
    S1, S2 = WorkSequence.of([2, 2]), WorkSequence.of([1, 3])
    assert minplus_pair(S1, S2, 0, 2) == 4
    assert minplus_pair(S1, S2, 1, 1) == 0
    assert minplus_pair(WorkSequence.zeros(0, 2), S2, 0, 2) == 0
    with pytest.raises(ValueError):
        minplus_pair(S1, S2, 2, 1)


@given(pair(max_len=20))
def test_minplus_table_matches_literal(ab):
    S1, S2 = WorkSequence.of(ab[0]), WorkSequence.of(ab[1])
    T = minplus_table(S1.values, S2.values)
    n = len(S1)
    for s in range(n + 1):
        for t in range(s, n + 1):
            assert T[s, t] == minplus_pair(S1, S2, s, t)


@given(pair())
def test_replacement_invariance(ab):
    S1, S2 = WorkSequence.of(ab[0]), WorkSequence.of(ab[1])
    w = replacement_invariance_check(S1, S2)
    assert w.ok, w.to_json()


def test_replacement_trivial_cases():
    S1 = WorkSequence.of([9, 9, 9])
    S2 = WorkSequence.of([1, 2, 0])
    w = replacement_invariance_check(S1, S2)
    assert w.ok and w.S2t == w.S2


def test_replacement_batched_matches_single():
    gen = np.random.default_rng(2)
    S1 = gen.integers(0, 7, (200, 30))
    S2 = gen.integers(0, 7, (200, 30))
    assert replacement_counterexamples(S1, S2).size == 0
    # replacing S2 by anything other than the departures is detected
    ones = np.array([1, 1])
    assert (minplus_table(ones, ones) != minplus_table(ones, np.array([0, 1]))).any()


def test_witness_serializes():
    w = replacement_invariance_check(WorkSequence.of([1, 0]), WorkSequence.of([0, 1]))
    assert json.loads(w.to_json())["ok"] is True


def test_transfer_example():
    p = make_coupled_pair_bernoulli(WorkSequence.of([0]), WorkSequence.of([1]))
    assert p.S1t.values.tolist() == [1] and p.S2t.values.tolist() == [0]


def test_coupling_rejects_nonbinary_and_swaps():
    with pytest.raises(ValueError):
        make_coupled_pair_bernoulli(WorkSequence.of([2]), WorkSequence.of([1]))
    p = make_coupled_pair_bernoulli(WorkSequence.of([1, 1]), WorkSequence.of([0, 1]), intensities=(0.7, 0.4))
    assert p.swapped and p.S1 == WorkSequence.of([0, 1])


@given(pair(max_value=1), st.lists(st.lists(st.integers(0, 3), min_size=48, max_size=48), min_size=1, max_size=5))
def test_bernoulli_coupling_pathwise(ab, arrivals):
    S1, S2 = WorkSequence.of(ab[0]), WorkSequence.of(ab[1])
    p = make_coupled_pair_bernoulli(S1, S2)
    assert p.S1t + p.S2t == S1 + S2
    assert second_replacement_check(p)
    assert reversed_replacement_check(p).ok
    for a in arrivals:
        assert coupled_tandems_agree(p, WorkSequence.of(a[: len(S1)]))


def test_general_integer_transfer_is_not_pathwise():
    # the transfer conserves service for any integers but only couples tandems for 0/1 values
    gen = np.random.default_rng(5)
    fails = 0
    for _ in range(300):
        S1, S2 = (WorkSequence.of(gen.integers(0, 4, 20)) for _ in range(2))
        p = transfer_pair(S1, S2)
        assert p.S1t + p.S2t == S1 + S2
        A = WorkSequence.of(gen.integers(0, 4, 20))
        fails += not coupled_tandems_agree(p, A)
    assert fails > 0


def test_exact_laws_equal():
    la, lb = exact_output_laws(WorkSequence.of([2, 0, 1, 1]), 0.4, 0.7)
    assert sum(la.values()) == pytest.approx(1.0, abs=1e-12)
    assert law_distance(la, lb) < 1e-12


def test_exact_laws_equal_servers():
    A = MulticlassWorkSequence(0, np.array([[2, 0, 1]]))
    la, lb = exact_output_laws(A, 0.5, 0.5)
    assert la == lb


def test_family_mismatch_refused():
    with pytest.raises(FamilyMismatch):
        verify_interchangeability(BerGeomParams(0.3, 1.0), BerGeomParams(0.2, 0.4), WorkSequence.of([1, 0, 2]), 10, 0)


def test_order_test_passes_in_family_and_fails_across():
    A = WorkSequence.of([3, 0, 0, 2, 0, 1])
    fam = FamilySpec.interior(0.5)
    a, b = solve_params(0.4, fam), solve_params(0.7, fam)
    rep = verify_interchangeability(a, b, A, 20_000, RngStream(3))
    assert rep.passed
    # servers from different families are distinguishable by order
    rep = compare_orderings(BerGeomParams(0.5, 1.0), solve_params(0.7, FamilySpec.interior(0.2)), A, 20_000,
                            RngStream(4))
    assert not rep.passed


def test_multiclass_order_test():
    A = MulticlassWorkSequence(0, np.array([[1, 0, 1, 0, 0, 1], [1, 1, 0, 0, 1, 0]]))
    rep = verify_interchangeability(BerGeomParams(0.4, 1.0), BerGeomParams(0.7, 1.0), A, 20_000, RngStream(9))
    assert rep.passed
    assert any("classes 1..2" in t.name for t in rep.tests)


def test_tandem_identity_after_swap():
    S1, S2 = WorkSequence.of([1, 0, 1, 1]), WorkSequence.of([0, 1, 1, 0])
    p = make_coupled_pair_bernoulli(S1, S2)
    A = WorkSequence.of([1, 1, 0, 1])
    assert tandem(A, [p.S1t, p.S2t])[-1].D == tandem(A, [S1, S2])[-1].D
