"""Continuous-time queues: event-driven M/M/1 with priorities, and the Brownian queue on a grid.

An M/M/1 run is a merged stream of arrival and service events.  Every event
occupies its own "slot", so the discrete batch kernel runs the multi-class
queue exactly on the embedded event sequence; the event loop ``mm1_run`` is
the direct reference implementation.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import stats

from mqlab import stathub
from mqlab.multiclass import multiclass_departures
from mqlab.procgen import RngStream, as_generator
from mqlab.queue_kernel import EMPTY, InitialCondition, lindley
from mqlab.stathub import TestReport


class TimeCollision(ValueError):
    pass


class GridMismatch(ValueError):
    pass


# ---------------------------------------------------------------- point processes


@dataclass(frozen=True, eq=False)
class MarkedPointProcess:
    """Sorted event times with class marks (1 = highest priority) on ``horizon``."""

    times: np.ndarray
    classes: np.ndarray
    horizon: tuple[float, float]

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        c = np.asarray(self.classes, dtype=np.int64)
        if t.shape != c.shape or t.ndim != 1:
            raise ValueError("times and classes must be matching 1-d arrays")
        lo, hi = (float(x) for x in self.horizon)
        if hi < lo:
            raise ValueError("horizon must be increasing")
        if t.size:
            if np.any(np.diff(t) <= 0):
                raise TimeCollision("event times must be strictly increasing")
            if t[0] < lo or t[-1] > hi:
                raise ValueError("events outside the horizon")
            if c.min() < 1:
                raise ValueError("classes are numbered from 1")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "classes", c)
        object.__setattr__(self, "horizon", (lo, hi))

    def __len__(self) -> int:
        return self.times.size

    @property
    def m(self) -> int:
        return int(self.classes.max()) if self.classes.size else 0

    @property
    def span(self) -> float:
        return self.horizon[1] - self.horizon[0]

    def of_class(self, r: int) -> np.ndarray:
        return self.times[self.classes == r]

    def restrict_time(self, lo: float, hi: float) -> "MarkedPointProcess":
        keep = (self.times >= lo) & (self.times <= hi)
        return MarkedPointProcess(self.times[keep], self.classes[keep], (lo, hi))

    def restrict_classes(self, r: int) -> "MarkedPointProcess":
        keep = self.classes <= r
        return MarkedPointProcess(self.times[keep], self.classes[keep], self.horizon)

    def relabel(self, cls: int) -> "MarkedPointProcess":
        return MarkedPointProcess(self.times, np.full(self.times.size, cls), self.horizon)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "class"])
            for t, c in zip(self.times.tolist(), self.classes.tolist()):
                w.writerow([repr(t), c])

    @classmethod
    def read_csv(cls, path, horizon: tuple[float, float] | None = None) -> "MarkedPointProcess":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        t = np.array([float(r["time"]) for r in rows])
        c = np.array([int(r["class"]) for r in rows], dtype=np.int64)
        if horizon is None:
            horizon = (float(t[0]), float(t[-1])) if t.size else (0.0, 0.0)
        return cls(t, c, horizon)


def poisson_process(rate: float, horizon: tuple[float, float], rng, cls: int = 1) -> MarkedPointProcess:
    gen = as_generator(rng)
    lo, hi = horizon
    n = gen.poisson(rate * (hi - lo))
    t = np.sort(gen.uniform(lo, hi, n))
    return MarkedPointProcess(t, np.full(n, cls), (lo, hi))


def superpose(*procs: MarkedPointProcess) -> MarkedPointProcess:
    t = np.concatenate([p.times for p in procs])
    c = np.concatenate([p.classes for p in procs])
    order = np.argsort(t, kind="stable")
    return MarkedPointProcess(t[order], c[order], procs[0].horizon)


# ---------------------------------------------------------------- M/M/1


def _initial_backlog(init, m: int) -> list[float]:
    if isinstance(init, InitialCondition):
        if init.saturated:
            return [0.0] * m + [math.inf]
        return [float(init.x0)] + [0.0] * (m - 1)
    backlog = [float(x) for x in init]
    if len(backlog) < m:
        raise ValueError(f"need at least {m} per-class contents, got {len(backlog)}")
    return backlog


def mm1_run(
    A: MarkedPointProcess,
    S: MarkedPointProcess,
    init: InitialCondition | Sequence[float] = EMPTY,
) -> tuple[MarkedPointProcess, MarkedPointProcess]:
    """Event-driven priority queue: each service event takes the best-ranked waiting customer.

    ``init`` is an InitialCondition (finite content counted as class 1;
    Saturated puts infinitely many class m+1 customers behind everything) or
    per-class contents (one entry per class, at least as many as appear in A;
    the last may be infinite).
    Unused service events carry class 1 in the returned U.
    """
    if A.horizon != S.horizon:
        raise ValueError("arrival and service horizons differ")
    if np.intersect1d(A.times, S.times).size:
        raise TimeCollision("an arrival and a service share a time")
    m = max(A.m, 1)
    backlog = _initial_backlog(init, m)
    events = sorted([(t, 0, c) for t, c in zip(A.times.tolist(), A.classes.tolist())]
                    + [(t, 1, 0) for t in S.times.tolist()])
    dt, dc, ut = [], [], []
    for t, kind, c in events:
        if kind == 0:
            if c > len(backlog):
                backlog.extend([0.0] * (c - len(backlog)))
            backlog[c - 1] += 1
            continue
        for r, b in enumerate(backlog):
            if b > 0:
                backlog[r] = b - 1
                dt.append(t)
                dc.append(r + 1)
                break
        else:
            ut.append(t)
    D = MarkedPointProcess(np.array(dt), np.array(dc, dtype=np.int64), A.horizon)
    U = MarkedPointProcess(np.array(ut), np.ones(len(ut), dtype=np.int64), A.horizon)
    return D, U


def mm1_run_fast(A: MarkedPointProcess, S: MarkedPointProcess, saturated: bool = False,
                 m: int | None = None) -> tuple[MarkedPointProcess, MarkedPointProcess]:
    """Same as ``mm1_run`` from an empty (or saturated) start, via cumulative queues on the event sequence.

    With ``saturated`` the unused services become departures of class m+1.
    """
    if A.horizon != S.horizon:
        raise ValueError("arrival and service horizons differ")
    m = max(A.m, 1) if m is None else m
    t = np.concatenate([A.times, S.times])
    order = np.argsort(t, kind="stable")
    t = t[order]
    if np.any(np.diff(t) <= 0):
        raise TimeCollision("events must have distinct times")
    n = t.size
    is_service = np.zeros(n, dtype=bool)
    is_service[np.flatnonzero(order >= A.times.size)] = True
    cls = np.concatenate([A.classes, np.zeros(S.times.size, dtype=np.int64)])[order]
    width = m + 1 if saturated else m
    arr = np.zeros((width, n), dtype=np.int64)
    arr[cls[~is_service] - 1, np.flatnonzero(~is_service)] = 1
    Dm = multiclass_departures(np.cumsum(arr, axis=0), is_service.astype(np.int64), saturated_top=saturated)
    served = Dm.sum(axis=0) > 0
    dep_idx = np.flatnonzero(served)
    dep_cls = Dm[:, dep_idx].argmax(axis=0) + 1
    unused = np.flatnonzero(is_service & ~served)
    D = MarkedPointProcess(t[dep_idx], dep_cls, A.horizon)
    U = MarkedPointProcess(t[unused], np.ones(unused.size, dtype=np.int64), A.horizon)
    return D, U


def mm1_burn_in(lam: float, mu: float, factor: float = 10.0) -> float:
    """Relaxation allowance (time units) for an M/M/1 queue: diffusive time var/gap^2."""
    if mu <= lam:
        raise ValueError("burn-in needs a stable queue")
    gap = mu - lam
    return max(factor / gap, factor * (lam + mu) / gap**2, 100.0)


def mm1_fixed_point(lambdas: Sequence[float], horizon: tuple[float, float], rng,
                    burn_in: float | None = None) -> MarkedPointProcess:
    """Multi-type M/M/1 fixed point on ``horizon``.

    Stage k serves the stage k-1 output at rate lambda_1 + ... + lambda_k with an
    infinite backlog of class k behind it, so its unused service becomes class k.
    """
    lam = [float(x) for x in lambdas]
    if not lam or any(not x > 0 for x in lam):
        raise ValueError("class rates must be positive")
    gen = as_generator(rng)
    cum = np.cumsum(lam)
    if burn_in is None:
        burn_in = sum(mm1_burn_in(cum[k - 1], cum[k]) for k in range(1, len(lam)))
    lo, hi = horizon
    wide = (lo - burn_in, hi)
    F = poisson_process(lam[0], wide, gen)
    for k in range(1, len(lam)):
        S = poisson_process(cum[k], wide, gen)
        F, _ = mm1_run_fast(F, S, saturated=True, m=k)
    return F.restrict_time(lo, hi)


def interevent_times(P: MarkedPointProcess, r: int | None = None) -> np.ndarray:
    t = P.times if r is None else P.of_class(r)
    return np.diff(t)


def _gap_symbols(gaps: np.ndarray, edges: np.ndarray) -> np.ndarray:
    return np.searchsorted(edges, gaps)


def mm1_verify(lambdas: Sequence[float], mu: float, horizon: float, rng,
               L: int = 3, alpha: float = stathub.DEFAULT_ALPHA) -> TestReport:
    """Feed a multi-type fixed point through a rate-mu server; compare input and output laws.

    Serially correlated statistics (lower-class gaps, label blocks) are compared
    with batch means against an independent reference sample.
    """
    lam = [float(x) for x in lambdas]
    total = float(sum(lam))
    if not mu > total:
        raise ValueError(f"service rate {mu} must exceed the load {total}")
    gen = as_generator(rng)
    warm = mm1_burn_in(total, mu)
    F = mm1_fixed_point(lam, (-warm, horizon), gen)
    Fref = mm1_fixed_point(lam, (0.0, horizon), gen)
    S = poisson_process(mu, (-warm, horizon), gen)
    D, _ = mm1_run_fast(F, S, m=len(lam))
    D = D.restrict_time(0.0, horizon)
    rep = TestReport(f"M/M/1 fixed point m={len(lam)}", alpha, metadata={
        "lambdas": lam, "mu": mu, "horizon": horizon, "burn_in": warm, "block_length": L,
        "seed": rng.to_dict() if isinstance(rng, RngStream) else repr(rng),
    })
    gaps = interevent_times(D)
    st, p = stathub.ks_test(gaps, stats.expon(scale=1 / total))
    rep.null(f"departures, all classes: gaps ~ Exp({total:g})", st, p, n=gaps.size)
    g1 = interevent_times(D, 1)
    st, p = stathub.ks_test(g1, stats.expon(scale=1 / lam[0]))
    rep.null(f"departures, class 1: gaps ~ Exp({lam[0]:g})", st, p, n=g1.size)
    for r in range(2, len(lam) + 1):
        ga, gb = interevent_times(Fref, r), interevent_times(D, r)
        edges = np.quantile(ga, np.linspace(0, 1, 11)[1:-1])
        b = max(10, min(200, min(ga.size, gb.size) // 200))
        st, p, (k, dof2) = stathub.batched_block_compare(_gap_symbols(ga, edges), _gap_symbols(gb, edges), 1, batches=b)
        rep.null(f"class {r} gap law, departures vs reference", st, p, k, n=gb.size, dof2=dof2, batches=b)
    if len(lam) > 1:
        b = max(10, min(200, min(len(D), len(Fref)) // (50 * L)))
        st, p, (k, dof2) = stathub.batched_block_compare(Fref.classes, D.classes, L, batches=b)
        rep.null(f"class label blocks (L={L}), departures vs reference", st, p, k, n=len(D) // L, dof2=dof2, batches=b)
    bins = np.arange(0.0, horizon + 1.0, 1.0)
    for r in range(1, len(lam) + 1):
        per_unit = np.histogram(D.of_class(r), bins)[0]
        est, se = stathub.estimate_intensity(per_unit)
        rep.tolerance(f"class {r} departure rate", est, lam[r - 1], 6 * se, n=D.of_class(r).size)
    return rep


def clustering_intensity(P: MarkedPointProcess, r: int, eps: float) -> tuple[float, float, int]:
    """Conditional rate of class-r events in (t, t+eps] given a class-r event at t.

    Returns (estimate, standard error, number of conditioning events).  The
    error treats the window counts as independent, which they nearly are once
    eps is small against the cluster spacing.
    """
    t = P.of_class(r)
    t = t[t <= P.horizon[1] - eps]
    if t.size == 0:
        return 0.0, math.inf, 0
    all_t = P.of_class(r)
    counts = np.searchsorted(all_t, t + eps, side="right") - np.searchsorted(all_t, t, side="right")
    est = counts.mean() / eps
    se = counts.std(ddof=1) / math.sqrt(t.size) / eps if t.size > 1 else math.inf
    return float(est), float(se), int(t.size)


def clustering_experiment(lambda1: float, lambda2: float, eps: float, horizon: float, rng,
                          rel_tol: float = 0.15, sigmas: float = 5.0) -> TestReport:
    F = mm1_fixed_point([lambda1, lambda2], (0.0, horizon), rng)
    est, se, n = clustering_intensity(F, 2, eps)
    rep = TestReport("class-2 clustering", metadata={"lambda1": lambda1, "lambda2": lambda2, "eps": eps,
                                                     "horizon": horizon, "standard_error": se})
    target = lambda1 + lambda2
    rep.tolerance(f"conditional class-2 rate within {rel_tol:.0%} of lambda1+lambda2", est, target, rel_tol,
                  n=n, relative=True)
    z = (est - lambda2) / se
    rep.check(f"conditional rate exceeds lambda2 by more than {sigmas:g} sigma", z > sigmas, value=z, n=n)
    return rep


# ---------------------------------------------------------------- Brownian queue


@dataclass(frozen=True, eq=False)
class BrownianGridPath:
    """Cumulative levels on a grid: ``values[k]`` is the level at time k*dt."""

    dt: float
    values: np.ndarray
    drift: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def __len__(self) -> int:
        return self.values.size

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def k_step_increments(self, k: int, spacing: int | None = None) -> np.ndarray:
        """Increments over k steps, taken every ``spacing`` steps (default: non-overlapping)."""
        spacing = k if spacing is None else spacing
        starts = np.arange(0, self.values.size - k, spacing)
        return self.values[starts + k] - self.values[starts]


def brownian_motion(drift: float, n_steps: int, dt: float, rng, variance: float = 1.0) -> BrownianGridPath:
    gen = as_generator(rng)
    inc = drift * dt + math.sqrt(variance * dt) * gen.standard_normal(n_steps)
    return BrownianGridPath(dt, np.concatenate([[0.0], np.cumsum(inc)]), drift, variance)


def _check_grid(*paths: BrownianGridPath) -> None:
    for p in paths[1:]:
        if p.dt != paths[0].dt or len(p) != len(paths[0]):
            raise GridMismatch("paths must share the grid")


def stationary_rate(A: BrownianGridPath, S: BrownianGridPath) -> float:
    """Rate of the exponential stationary content of the reflected A - S."""
    gap = S.drift - A.drift
    if not gap > 0:
        raise ValueError("the queue needs service drift above arrival drift")
    return 2.0 * gap / (A.variance + S.variance)


def reflect(net: np.ndarray, q0) -> np.ndarray:
    """Q_{k+1} = max(Q_k + net_k, 0) from Q_0 = q0, as W - min(-q0, running min of W)."""
    W = np.concatenate([[0.0], np.cumsum(net)])
    return W - np.minimum(np.minimum.accumulate(W), -q0)


def brownian_queue(A: BrownianGridPath, S: BrownianGridPath, rng=None, q0: float | None = None):
    """Grid reflection of A - S; Q_0 is drawn from the stationary exponential law unless given."""
    _check_grid(A, S)
    rate = stationary_rate(A, S)
    if q0 is None:
        q0 = float(as_generator(rng).exponential(1 / rate)) if rng is not None else 0.0
    a, s = A.values - A.values[0], S.values - S.values[0]
    W = a - s
    # U is read off the running minimum so its flat stretches are exactly flat
    U = np.maximum(0.0, -q0 - np.minimum.accumulate(W))
    Q = W + q0 + U
    D = s - U
    mk = lambda v, d: BrownianGridPath(A.dt, v, d, 0.0)
    return mk(Q, 0.0), BrownianGridPath(A.dt, D, A.drift, A.variance), mk(U, S.drift - A.drift)


def brownian_queue_stats(lam: float, mu: float, dt: float, horizon: float, rng,
                         sample_every: float = 10.0, alpha: float = stathub.DEFAULT_ALPHA) -> TestReport:
    """Stationary content vs Exp(mu - lam) on widely spaced grid points, plus reflection invariants."""
    gen = as_generator(rng)
    n = int(round(horizon / dt))
    A = brownian_motion(lam, n, dt, gen)
    S = brownian_motion(mu, n, dt, gen)
    Q, D, U = brownian_queue(A, S, gen)
    rate = stationary_rate(A, S)
    step = max(1, int(round(sample_every / dt)))
    sample = Q.values[::step]
    rep = TestReport("Brownian queue", alpha, metadata={"lambda": lam, "mu": mu, "dt": dt, "horizon": horizon,
                                                        "sample_every": sample_every})
    st, p = stathub.ks_test(sample, stats.expon(scale=1 / rate))
    rep.null(f"content ~ Exp({rate:g})", st, p, n=sample.size)
    rep.exact("content nonnegative", bool(Q.values.min() >= 0), n=len(Q))
    rep.exact("unused service nondecreasing", bool(np.all(np.diff(U.values) >= -1e-9)), n=len(U))
    return rep


def unused_slope(lam: float, mu: float, dt: float, horizon: float, rng, chunk: int = 2_000_000) -> float:
    """U(horizon)/horizon from a stationary start, simulated in chunks so long horizons fit in memory."""
    gen = as_generator(rng)
    n = int(round(horizon / dt))
    gap = mu - lam
    q = float(gen.exponential(1 / gap))
    u = 0.0
    done = 0
    while done < n:
        k = min(chunk, n - done)
        net = (lam - mu) * dt + math.sqrt(2 * dt) * gen.standard_normal(k)
        W = np.cumsum(net)
        low = W.min()
        # U grows by how far the free walk dips below -q
        u += max(0.0, -q - low)
        q = float(W[-1] - min(low, -q))
        done += k
    return u / horizon


def unused_increase_fraction(lam: float, mu: float, dt: float, horizon: float, rng) -> float:
    """Fraction of grid steps on which the unused-service process strictly increases."""
    gen = as_generator(rng)
    n = int(round(horizon / dt))
    A = brownian_motion(lam, n, dt, gen)
    S = brownian_motion(mu, n, dt, gen)
    _, _, U = brownian_queue(A, S, gen)
    return float(np.mean(np.diff(U.values) > 0))


def local_time_experiment(lam: float = 0.0, mu: float = 1.0, dt: float = 1e-3, horizon: float = 1e4,
                          slope_dt: float = 1e-2, slope_horizon: float = 1e5,
                          dts: Sequence[float] = (1e-2, 1e-3, 1e-4), fraction_horizon: float = 1e3,
                          rng=0, slope_tol: float = 0.02, alpha: float = stathub.DEFAULT_ALPHA) -> TestReport:
    gen = as_generator(rng)
    rep = brownian_queue_stats(lam, mu, dt, horizon, gen, alpha=alpha)
    slope = unused_slope(lam, mu, slope_dt, slope_horizon, gen)
    rep.tolerance(f"unused service slope within {slope_tol:.0%} of mu - lambda", slope, mu - lam, slope_tol,
                  relative=True, dt=slope_dt, horizon=slope_horizon)
    fr = [unused_increase_fraction(lam, mu, h, fraction_horizon, gen) for h in dts]
    rep.check("fraction of steps with increasing unused service falls as dt shrinks",
              all(b < a for a, b in zip(fr, fr[1:])), dts=list(dts), fractions=fr)
    return rep


def two_type_queue(A1: BrownianGridPath, A2: BrownianGridPath, S: BrownianGridPath):
    """Priority Brownian queue from empty: type 1 alone, then both types together."""
    _check_grid(A1, A2, S)
    Q1 = reflect(np.diff(A1.values - S.values), 0.0)
    Q12 = reflect(np.diff(A1.values + A2.values - S.values), 0.0)
    D1 = A1.values - A1.values[0] - Q1
    D12 = A1.values + A2.values - A1.values[0] - A2.values[0] - Q12
    return BrownianGridPath(S.dt, D1), BrownianGridPath(S.dt, D12 - D1)


def brownian_two_type(lambda1: float, lambda2: float, mu: float, dt: float, horizon: float, rng,
                      k: int | None = None, spacing: float = 25.0, literal_service_drift: bool = False,
                      alpha: float = stathub.DEFAULT_ALPHA) -> TestReport:
    """Two-type Brownian fixed point (D, U) pushed through a drift-mu server.

    The construction queue has arrival drift lambda1 and service drift
    lambda1 + lambda2; ``literal_service_drift`` uses lambda2 instead.
    """
    service_drift = lambda2 if literal_service_drift else lambda1 + lambda2
    if not (0 < lambda2 and lambda1 < service_drift < mu):
        raise ValueError("need lambda1 < service drift < mu and lambda2 > 0")
    gen = as_generator(rng)
    n = int(round(horizon / dt))
    A = brownian_motion(lambda1, n, dt, gen)
    S0 = brownian_motion(service_drift, n, dt, gen)
    _, D, U = brownian_queue(A, S0, gen)
    Smu = brownian_motion(mu, n, dt, gen)
    E1, E2 = two_type_queue(D, U, Smu)
    burn = int(round(10 * 2 / (mu - service_drift) ** 2 / dt))
    k = k or max(1, int(round(1.0 / dt)))
    gap = max(k, int(round(spacing / dt)))
    cut = lambda p: BrownianGridPath(dt, p.values[burn:])
    rep = TestReport("Brownian two-type fixed point", alpha, metadata={
        "lambda1": lambda1, "lambda2": lambda2, "mu": mu, "dt": dt, "horizon": horizon, "k": k,
        "service_drift": service_drift, "literal_service_drift": literal_service_drift, "burn_in_steps": burn,
    })
    inc = cut(E1).k_step_increments(k, gap)
    st, p = stathub.ks_test(inc, stats.norm(lambda1 * k * dt, math.sqrt(k * dt)))
    rep.null(f"type 1 departures: {k}-step increments ~ Normal", st, p, n=inc.size)
    u_in, u_out = cut(U).k_step_increments(k, gap), cut(E2).k_step_increments(k, gap)
    # the second-type stream has an atom at zero; differencing large levels leaves rounding noise on it
    u_in, u_out = (np.where(np.abs(v) < 1e-8, 0.0, v) for v in (u_in, u_out))
    st, p = stathub.ks_two_sample(u_in, u_out)
    rep.null(f"type 2: {k}-step increments, departures vs arrivals", st, p, n=u_out.size)
    mean2 = float(np.mean(u_out)) / (k * dt)
    se2 = float(np.std(u_out, ddof=1)) / math.sqrt(u_out.size) / (k * dt)
    rep.tolerance("type 2 departure drift", mean2, service_drift - lambda1, 6 * se2, n=u_out.size)
    rep.exact("type 2 arrivals nondecreasing", bool(np.all(np.diff(U.values) >= -1e-9)))
    rep.exact("type 1 arrivals change direction", bool(np.any(np.diff(D.values) < 0) and np.any(np.diff(D.values) > 0)))
    return rep


# ---------------------------------------------------------------- heavy traffic


def bernoulli_queue_law(p: float, q: float, kmax: int) -> np.ndarray:
    """Stationary content P(X = k), k < kmax, of a Bernoulli(p)/Bernoulli(q) slot queue.

    The content is a birth-death chain with up-probability p(1-q) and
    down-probability q(1-p), so the law is geometric with that ratio.
    """
    rho = p * (1 - q) / (q * (1 - p))
    if not rho < 1:
        raise ValueError("unstable queue")
    return (1 - rho) * rho ** np.arange(kmax)


def heavy_traffic_limit_rate(theta: float) -> float:
    """Limit rate of the rescaled content for rates 1/2 -/+ theta/sqrt(n), scaled by sqrt(n/2).

    Under that scaling both work processes converge to Brownian motions of
    variance 1/2 and drifts -/+ sqrt(2) theta, so the content limit is
    exponential with rate 2 * 2 sqrt(2) theta / (1/2 + 1/2).
    """
    return 4.0 * math.sqrt(2.0) * theta


def heavy_traffic_distance(theta: float, n: int) -> float:
    """Sup distance between the exact rescaled content cdf and its exponential limit."""
    p, q = 0.5 - theta / math.sqrt(n), 0.5 + theta / math.sqrt(n)
    scale = math.sqrt(n / 2)
    rho = p * (1 - q) / (q * (1 - p))
    kmax = int(math.ceil(40 / -math.log(rho)))
    cdf = np.cumsum(bernoulli_queue_law(p, q, kmax))
    x = np.arange(kmax) / scale
    rate = heavy_traffic_limit_rate(theta)
    lim = 1 - np.exp(-rate * x)
    # the discrete cdf jumps at each lattice point: compare both sides of each jump
    left = np.concatenate([[0.0], cdf[:-1]])
    return float(max(np.abs(cdf - lim).max(), np.abs(left - lim).max()))


def heavy_traffic_check(theta: float = 0.5, ns: Sequence[int] = (100, 10_000), samples: int = 1000,
                        rng=0, limit_tol: float = 0.05,
                        alpha: float = stathub.DEFAULT_ALPHA) -> TestReport:
    """Exact cdf distance to the limit shrinks with n; simulated content matches the exact law.

    The queue starts from its stationary law, so widely spaced samples need no burn-in.
    """
    gen = as_generator(rng)
    rep = TestReport("heavy traffic", alpha, metadata={"theta": theta, "ns": list(ns), "samples": samples,
                                                       "limit_rate": heavy_traffic_limit_rate(theta)})
    dist = [heavy_traffic_distance(theta, n) for n in ns]
    rep.check("distance to the exponential limit decreases in n", all(b < a for a, b in zip(dist, dist[1:])),
              ns=list(ns), distances=dist)
    rep.check(f"n={ns[-1]}: cdf within {limit_tol:g} of the limit", dist[-1] <= limit_tol, value=dist[-1])
    for n in ns:
        p, q = 0.5 - theta / math.sqrt(n), 0.5 + theta / math.sqrt(n)
        # content decorrelates over about var/gap^2 = n / (8 theta^2) slots; sample at twice that
        spacing = max(1, int(math.ceil(n / (4 * theta**2))))
        slots = samples * spacing
        A = (gen.random(slots) < p).astype(np.int64)
        S = (gen.random(slots) < q).astype(np.int64)
        rho = p * (1 - q) / (q * (1 - p))
        x0 = int(gen.geometric(1 - rho)) - 1
        X, _ = lindley(A, S, x0)
        sample = X[:-1:spacing]
        kmax = int(sample.max() + 2)
        law = bernoulli_queue_law(p, q, kmax)
        counts = np.bincount(sample, minlength=kmax)[:kmax].astype(float)
        st, pv, dof = stathub.chi_square_gof(counts, law)
        rep.null(f"n={n}: simulated content ~ exact geometric law", st, pv, dof, n=sample.size)
        scale = math.sqrt(n / 2)
        mean = rho / (1 - rho) / scale
        se = float(sample.std(ddof=1)) / scale / math.sqrt(sample.size)
        rep.tolerance(f"n={n}: rescaled mean content vs exact", float(sample.mean() / scale), mean, 6 * se,
                      n=sample.size, limit_mean=1 / heavy_traffic_limit_rate(theta))
    return rep
