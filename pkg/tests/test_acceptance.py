"""Acceptance criteria at full size.

Each test records one PASS/FAIL line (printed in the terminal summary) and
then asserts, so a failing criterion is both reported and counted.
Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import time

import pytest

from conftest import ACCEPTANCE_LINES
from mqlab import oracles
from mqlab.calibration import calibration_suite
from mqlab.continuum import clustering_experiment, local_time_experiment
from mqlab.fixed_points import FixedPointSpec, burke_check, claims_experiment, verify_fixed_point
from mqlab.particle_bridge import exact_adjacent_match_m3, label_clustering, stationarity_check
from mqlab.procgen import BerGeomParams, FamilySpec, RngStream, solve_params
from mqlab.queue_kernel import WorkSequence

pytestmark = pytest.mark.slow

SEED = 20261014


def stream(i: int) -> RngStream:
    return RngStream(SEED, i)


def record(name: str, ok: bool, detail: str, elapsed: float, limit: float | None = None) -> bool:
    in_time = limit is None or elapsed < limit
    budget = f"{elapsed:.1f}s" + (f" / {limit:.0f}s" if limit is not None else "")
    status = "PASS" if ok and in_time else "FAIL"
    line = f"[{status}] {name}: {detail} ({budget})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok and in_time


def failures(rep) -> str:
    bad = [t.line() for t in rep.tests if not t.passed]
    return "; ".join(bad) if bad else "all sub-tests pass"


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def test_tandem_minplus_oracle():
    rep, dt = timed(oracles.tandem_minplus_battery, 10_000, stream(1), max_window=50, max_value=6)
    t = rep.tests[0]
    assert record("two-queue min-plus formula vs simulated tandem, 10^4 instances",
                  rep.passed, f"counterexamples={t.detail['counterexamples']}", dt, 10)


def test_replacement_invariance():
    rep, dt = timed(oracles.replacement_battery, 10_000, stream(2), max_window=48, max_value=6)
    detail = ", ".join(f"{t.name.split(':')[0]}={t.detail['counterexamples']}" for t in rep.tests)
    assert record("unused-service replacement invariance incl. reverse-time side, 10^4 instances",
                  rep.passed, detail, dt, 30)


def test_truncation_stabilization():
    rep, dt = timed(oracles.truncation_battery, 1000, stream(3), probes=5)
    detail = ", ".join(f"{t.name}: {t.detail['counterexamples']} bad of {t.n}" for t in rep.tests)
    assert record("tandem output stabilizes under truncation, 10^3 instances x 5 probes", rep.passed, detail, dt, 10)


def test_bernoulli_coupling():
    rep, dt = timed(oracles.coupling_battery, 1000, stream(4), arrivals_per_pair=10)
    assert record("Bernoulli transfer coupling, 10^3 pairs x 10 arrival sequences", rep.passed,
                  f"counterexamples={rep.tests[0].detail['counterexamples']}", dt, 10)


def test_multiclass_coupling():
    rep, dt = timed(oracles.multiclass_battery, 10_000, stream(5), max_classes=4)
    detail = ", ".join(f"{t.detail['counterexamples']} bad" for t in rep.tests)
    assert record("multiclass coupling identity and class restriction, 10^4 instances", rep.passed, detail, dt)


def test_exact_interchangeability():
    A = WorkSequence.of([2, 0, 1, 1])
    rep, dt = timed(oracles.exact_order_battery, A, 0.4, 0.7, 1e-12)
    d = rep.tests[0].statistic
    assert record("exhaustive 2^8 service enumeration, both orders", rep.passed,
                  f"max probability difference={d:.3g} over {rep.tests[0].n} outcomes", dt)


def test_burke_reversibility():
    arrival = BerGeomParams(0.2, 0.4)
    server = solve_params(0.8, FamilySpec.interior(1 / 6))
    rep, dt = timed(burke_check, arrival, server, 1_000_000, stream(7), 3)
    ps = ", ".join(f"p={t.p_value:.3g}" for t in rep.tests)
    assert record("Ber-Geom c=1/6 queue: A vs D block law and reversibility, 10^6 slots", rep.passed,
                  f"{ps}; {failures(rep)}", dt, 60)


@pytest.mark.parametrize("lambdas", [(0.2, 0.1), (0.2, 0.1, 0.1)])
def test_multitype_fixed_point(lambdas):
    spec = FixedPointSpec(FamilySpec.bernoulli(), lambdas)
    server = BerGeomParams(0.6, 1.0)
    t0 = time.perf_counter()
    rep = verify_fixed_point(spec, server, 1_000_000, stream(8 + len(lambdas)), 3)
    rep.extend(claims_experiment(spec, server, None, 1_000_000, stream(18 + len(lambdas)), 3), "claims: ")
    dt = time.perf_counter() - t0
    assert record(f"m={len(lambdas)} fixed point under mu=0.6 with both tandem orderings, 10^6 slots",
                  rep.passed, f"{sum(t.passed for t in rep.tests)}/{len(rep.tests)} sub-tests; {failures(rep)}",
                  dt, 300)


def test_second_class_clustering():
    rep, dt = timed(clustering_experiment, 0.5, 0.05, 0.01, 4_000_000.0, stream(10))
    est, z = rep.tests[0].statistic, rep.tests[1].statistic
    assert record("class-2 conditional rate within eps=0.01 vs lambda1+lambda2=0.55", rep.passed,
                  f"estimate={est:.4f}, {z:.1f} sigma above lambda2", dt, 120)


def test_brownian_queue():
    rep, dt = timed(local_time_experiment, 0.0, 1.0, 1e-3, 1e4, rng=stream(11))
    summary = "; ".join(t.line() for t in rep.tests)
    assert record("Brownian queue: content law, unused-service slope, singular growth", rep.passed, summary, dt, 120)


def test_tasep_stationarity():
    spec = FixedPointSpec(FamilySpec.bernoulli(), (0.3, 0.2))
    rep, dt = timed(stationarity_check, spec, 1000, 1000.0, 50, stream(12))
    worst = max(abs(t.statistic) for t in rep.tests if "drift within" in t.name)
    ctrl = [t for t in rep.tests if t.name.startswith("control")][-1]
    assert record("TASEP ring 10^3, T=10^3, 50 replications: fixed point static, control drifts", rep.passed,
                  f"max |z| fixed point={worst:.2f}, control z={ctrl.statistic:.1f}; {failures(rep)}", dt, 600)


def test_label_clustering_constant():
    rep, dt = timed(label_clustering, (6, 12, 24), 1_000_000, stream(13))
    exact3 = float(exact_adjacent_match_m3())
    ests = [t.statistic for t in rep.tests[:3]]
    chain = [exact3] + ests
    monotone = all(abs(b - 1 / 6) < abs(a - 1 / 6) for a, b in zip(chain, chain[1:]))
    final = abs(ests[-1] - 1 / 6) <= 0.01
    extra = rep.tests[-1].statistic
    detail = (f"m=3 exact {exact3:.4f}, m=6/12/24 estimates {ests[0]:.4f}/{ests[1]:.4f}/{ests[2]:.4f}, "
              f"monotone={monotone}, m=24 error={abs(ests[-1] - 1 / 6):.4f} (bound 0.01), "
              f"1/m extrapolation {extra:.4f}")
    assert record("finite-m label process: P(L(0)=L(1)) tends to 1/6", monotone and final, detail, dt, 300)


def test_null_calibration():
    rep, dt = timed(calibration_suite, 1000, stream(14))
    detail = ", ".join(f"{t.name.split(':')[0]}={t.statistic:.3g}" for t in rep.tests)
    assert record("null rejection rate at alpha=1e-3 over 10^3 trials <= 2e-3, every test", rep.passed, detail, dt)
