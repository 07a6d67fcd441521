import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mqlab import stathub
from mqlab.procgen import (
    BerGeomParams,
    FamilyKind,
    FamilySpec,
    ParameterError,
    RngStream,
    c_value,
    family_of,
    sample_bergeom,
    sample_bergeom_process,
    solve_params,
)


def test_c_value_examples():
    assert c_value(BerGeomParams(0.5, 0.5)).value == pytest.approx(1.0)
    cv = c_value(BerGeomParams(0.5, 1.0))
    assert cv.kind is FamilyKind.BERNOULLI and cv.value == pytest.approx(1.0)
    assert c_value(BerGeomParams(0.2, 0.4)).value == pytest.approx(1 / 6, rel=1e-14)


def test_c_value_geometric_boundary_and_degenerate():
    cv = c_value(BerGeomParams(1.0, 0.5))
    assert cv.kind is FamilyKind.GEOMETRIC and cv.value == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        c_value(BerGeomParams(1.0, 1.0))


@pytest.mark.parametrize("p,a", [(-0.1, 0.5), (1.1, 0.5), (0.5, 0.0), (0.5, 1.5)])
def test_invalid_params(p, a):
    with pytest.raises(ParameterError):
        BerGeomParams(p, a)


def test_solve_examples():
    x = solve_params(1.0, FamilySpec.interior(1.0))
    assert x.p == pytest.approx(0.5, abs=1e-12) and x.alpha == pytest.approx(0.5, abs=1e-12)
    assert solve_params(0.3, FamilySpec.bernoulli()) == BerGeomParams(0.3, 1.0)
    x = solve_params(0.5, FamilySpec.interior(1 / 6))
    assert x.p == pytest.approx(0.2, abs=1e-12) and x.alpha == pytest.approx(0.4, abs=1e-12)
    assert solve_params(2.0, FamilySpec.geometric()) == BerGeomParams(1.0, 0.5)


def test_server_in_burke_family():
    # intensity 0.8 in the c = 1/6 family
    x = solve_params(0.8, FamilySpec.interior(1 / 6))
    assert x.intensity() == pytest.approx(0.8, rel=1e-12)
    assert x.c_value().value == pytest.approx(1 / 6, rel=1e-12)
    assert x.p == pytest.approx(0.258634, abs=1e-6)
    assert x.alpha == pytest.approx(0.323293, abs=1e-6)


def test_solve_errors():
    with pytest.raises(ParameterError):
        solve_params(1.5, FamilySpec.bernoulli())
    with pytest.raises(ParameterError):
        solve_params(0.5, FamilySpec.geometric())
    with pytest.raises(ParameterError):
        solve_params(0.0, FamilySpec.interior(1.0))


@given(st.floats(0.01, 0.98), st.floats(0.02, 0.98))
def test_solve_roundtrip(p, a):
    x = BerGeomParams(p, a)
    y = solve_params(x.intensity(), family_of(x))
    assert y.c_value().value == pytest.approx(x.c_value().value, rel=1e-12)
    assert y.intensity() == pytest.approx(x.intensity(), rel=1e-12)
    assert y.p == pytest.approx(p, rel=1e-9)


@given(st.floats(0.01, 0.98), st.floats(0.02, 0.98), st.floats(0.01, 0.98), st.floats(0.02, 0.98))
def test_family_membership_is_c_equality(p1, a1, p2, a2):
    x, y = BerGeomParams(p1, a1), BerGeomParams(p2, a2)
    same = math.isclose(x.c_value().value, y.c_value().value, rel_tol=1e-10)
    assert family_of(x).contains(y) == same


def test_boundary_families_contain_every_member():
    fam = FamilySpec.bernoulli()
    assert fam.contains(BerGeomParams(0.1, 1.0)) and fam.contains(BerGeomParams(0.9, 1.0))
    assert not fam.contains(BerGeomParams(0.5, 0.5))
    assert FamilySpec.from_dict(FamilySpec.interior(0.25).to_dict()) == FamilySpec.interior(0.25)
    assert FamilySpec.from_dict(fam.to_dict()) == fam


def test_pmf_examples():
    x = BerGeomParams(0.5, 0.5)
    assert [x.pmf(k) for k in range(3)] == [0.5, 0.25, 0.125]
    assert BerGeomParams(0.2, 0.4).intensity() == pytest.approx(0.5)
    assert sum(x.pmf(k) for k in range(200)) == pytest.approx(1.0)
    assert x.sf(2) == pytest.approx(1 - x.pmf(0) - x.pmf(1))


def test_zero_p_gives_zeros():
    v = sample_bergeom_process(BerGeomParams(0.0, 0.3), (0, 100), 1)
    assert v.total() == 0


def test_sampling_reproducible():
    a = sample_bergeom(BerGeomParams(0.3, 0.6), 1000, RngStream(7, 3))
    b = sample_bergeom(BerGeomParams(0.3, 0.6), 1000, RngStream(7, 3))
    c = sample_bergeom(BerGeomParams(0.3, 0.6), 1000, RngStream(7, 4))
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert RngStream(7, 3).child(1) != RngStream(7, 3).child(2)


def test_sample_mean_and_gof():
    x = BerGeomParams(0.2, 0.4)
    v = sample_bergeom(x, 1_000_000, RngStream(11))
    se = math.sqrt(stats_var(x) / v.size)
    assert abs(v.mean() - 0.5) < 5 * se
    _, p, _ = stathub.bergeom_gof(v, x)
    assert p > 1e-3


def stats_var(x: BerGeomParams) -> float:
    m2 = x.p * (2 - x.alpha) / x.alpha**2
    return m2 - x.intensity() ** 2


def test_window_forms():
    w = sample_bergeom_process(BerGeomParams(0.5, 1.0), range(-5, 5), 0)
    assert w.start == -5 and len(w) == 10
    with pytest.raises(ValueError):
        sample_bergeom_process(BerGeomParams(0.5, 1.0), (3, 3), 0)
