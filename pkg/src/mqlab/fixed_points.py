"""Multi-type fixed points of Bernoulli-geometric servers.

F_1 is the Bernoulli-geometric process of intensity lambda_1 in the family.
F_k is built by feeding F_{k-1} to a server of intensity lambda_1 + ... + lambda_k
in the same family and relabelling that queue's unused service as class k.
Equivalently class k is an infinite backlog in front of the server, which is
how the stage is run here (saturated top cumulative queue, finite lower ones).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from mqlab.multiclass import (
    MulticlassWorkSequence,
    restrict_classes,
    run_multiclass,
    relabel_unused_as_class,
)
from mqlab.procgen import (
    BerGeomParams,
    FamilySpec,
    RngStream,
    as_generator,
    sample_bergeom,
    solve_params,
)
from mqlab.queue_kernel import EMPTY, SATURATED, WorkSequence, burn_in_slots, run_queue
from mqlab import stathub
from mqlab.stathub import TestReport


class FamilyMismatch(ValueError):
    pass


@dataclass(frozen=True)
class FixedPointSpec:
    family: FamilySpec
    lambdas: tuple[float, ...]

    def __post_init__(self):
        lam = tuple(float(x) for x in self.lambdas)
        if not lam:
            raise ValueError("need at least one class intensity")
        if any(not x > 0 for x in lam):
            raise ValueError(f"class intensities must be positive, got {lam}")
        object.__setattr__(self, "lambdas", lam)

    @property
    def m(self) -> int:
        return len(self.lambdas)

    @property
    def total(self) -> float:
        return float(sum(self.lambdas))

    def partial(self, k: int) -> float:
        return float(sum(self.lambdas[:k]))

    def stage_params(self, k: int) -> BerGeomParams:
        """Member of the family with intensity lambda_1 + ... + lambda_k."""
        return solve_params(self.partial(k), self.family)

    def restrict(self, k: int) -> "FixedPointSpec":
        return FixedPointSpec(self.family, self.lambdas[:k])

    def to_dict(self) -> dict:
        return {"family": self.family.to_dict(), "lambdas": list(self.lambdas)}


@dataclass(eq=False)
class FixedPointSample:
    arrivals: MulticlassWorkSequence
    spec: FixedPointSpec
    seed: dict
    burn_in: int
    saturation_violations: int = 0
    stage_params: list = field(default_factory=list)


def bergeom_variance(params: BerGeomParams) -> float:
    p, a = params.p, params.alpha
    return p * (2.0 - a) / a**2 - (p / a) ** 2


def construction_burn_in(spec: FixedPointSpec) -> int:
    """Sum of the relaxation allowances of the construction stages."""
    total = 0
    for k in range(2, spec.m + 1):
        lo, hi = spec.stage_params(k - 1), spec.stage_params(k)
        var = bergeom_variance(lo) + bergeom_variance(hi)
        total += burn_in_slots(lo.intensity(), hi.intensity(), var)
    return max(total, 1000)


def server_burn_in(spec: FixedPointSpec, server: BerGeomParams) -> int:
    load = spec.stage_params(spec.m)
    if server.intensity() <= load.intensity() * (1 + 1e-12):
        return 0
    var = bergeom_variance(load) + bergeom_variance(server)
    return burn_in_slots(load.intensity(), server.intensity(), var)


def construct_fixed_point(
    spec: FixedPointSpec,
    n_slots: int,
    rng,
    burn_in: int | None = None,
    start: int = 0,
) -> FixedPointSample:
    """Sample F_m on ``n_slots`` slots starting at ``start``, after discarding the construction transient."""
    gen = as_generator(rng)
    seed = rng.to_dict() if isinstance(rng, RngStream) else {"seed": repr(rng)}
    if burn_in is None:
        burn_in = construction_burn_in(spec) if spec.m > 1 else 0
    if n_slots < 1:
        raise ValueError("need at least one slot")
    n = burn_in + n_slots
    stage = [spec.stage_params(1)]
    cur = MulticlassWorkSequence(start - burn_in, sample_bergeom(stage[0], n, gen)[None, :])
    violations = 0
    for k in range(2, spec.m + 1):
        params = spec.stage_params(k)
        stage.append(params)
        S = WorkSequence(cur.start, sample_bergeom(params, n, gen))
        padded = MulticlassWorkSequence(cur.start, np.vstack([cur.values, np.zeros((1, n), np.int64)]))
        path = run_multiclass(padded, S, [EMPTY] * (k - 1) + [SATURATED])
        violations += int(np.count_nonzero(path.U.values))
        cur = path.departures
    window = cur.slice(start, start + n_slots)
    return FixedPointSample(window, spec, seed, burn_in, violations, stage)


# ---------------------------------------------------------------- symbols


def slot_labels(A: MulticlassWorkSequence, cap: int = 3) -> np.ndarray:
    """Per-slot symbols: the class label when at most one customer per slot, else capped counts."""
    tot = A.values.sum(axis=0)
    if tot.size == 0 or tot.max() <= 1:
        return A.labels()[:, None]
    return np.minimum(A.values.T, cap)


def compare_blocks(rep: TestReport, name: str, X: MulticlassWorkSequence, Y: MulticlassWorkSequence,
                   L: int, paired: bool = False, batches: int = 200):
    """Batch-means block-law comparison recorded as a null test in ``rep``."""
    n_blocks = min(len(X), len(Y)) // L
    b = max(10, min(batches, n_blocks // 50))
    stat, p, (k, dof2) = stathub.batched_block_compare(slot_labels(X), slot_labels(Y), L, batches=b, paired=paired)
    return rep.null(name, stat, p, k, n=n_blocks, dof2=dof2, batches=b, paired=paired, L=L)


def _same_family(spec: FixedPointSpec, server: BerGeomParams) -> None:
    if not spec.family.contains(server):
        raise FamilyMismatch(
            f"server {server} is not in family {spec.family.to_dict()}; the fixed-point premises fail"
        )


def _gof_pairs(total: np.ndarray, params: BerGeomParams, cap: int = 4):
    """Chi-square of non-overlapping (X(n), X(n+1)) pairs against the product law."""
    x = np.minimum(np.asarray(total), cap)
    n2 = len(x) // 2
    pairs = x[: 2 * n2].reshape(n2, 2)
    marg = np.array([params.pmf(k) for k in range(cap)] + [params.sf(cap)])
    probs = np.outer(marg, marg).ravel()
    counts = np.bincount(pairs[:, 0] * (cap + 1) + pairs[:, 1], minlength=(cap + 1) ** 2)
    return stathub.chi_square_gof(counts.astype(float), probs)


def verify_fixed_point(
    spec: FixedPointSpec,
    server: BerGeomParams,
    n_slots: int,
    rng,
    L: int = 3,
    alpha: float = stathub.DEFAULT_ALPHA,
) -> TestReport:
    """Feed a constructed F_m through ``server`` and compare arrival and departure laws."""
    _same_family(spec, server)
    mu, load = server.intensity(), spec.total
    if mu < load * (1 - 1e-12):
        raise ValueError(f"server intensity {mu} below the load {load}")
    gen = as_generator(rng)
    rep = TestReport(f"fixed point m={spec.m}", alpha, metadata={
        "spec": spec.to_dict(), "server": {"p": server.p, "alpha": server.alpha},
        "n_slots": n_slots, "block_length": L,
        "seed": rng.to_dict() if isinstance(rng, RngStream) else repr(rng),
    })
    saturated = math.isclose(mu, load, rel_tol=1e-12)
    warm = server_burn_in(spec, server)
    sample = construct_fixed_point(spec, warm + n_slots, gen)
    F = sample.arrivals
    S = WorkSequence(F.start, sample_bergeom(server, len(F), gen))
    rep.metadata["burn_in"] = {"construction": sample.burn_in, "server": warm}
    rep.exact("construction: no unused service past the saturated stages", sample.saturation_violations == 0,
              n=len(F) * max(spec.m - 1, 0), violations=sample.saturation_violations)

    if saturated:
        # equality case: the server is the last construction stage itself
        path = run_multiclass(F, S, [EMPTY] * (spec.m - 1) + [SATURATED]) if spec.m > 1 else None
        if spec.m == 1:
            rep.exact("saturated server: D = S", True, n=len(F))
            return rep
        rebuilt = relabel_unused_as_class(run_multiclass(restrict_classes(F, spec.m - 1), S), spec.m)
        rep.exact("saturated server: departures = relabelled construction",
                  path.departures == rebuilt, n=len(F))
        dep = path.departures.slice(F.start + warm, F.stop)
    else:
        path = run_multiclass(F, S)
        dep = path.departures.slice(F.start + warm, F.stop)
    arr = F.slice(F.start + warm, F.stop)

    compare_blocks(rep, f"block law arrivals vs departures (L={L})", arr, dep, L, paired=True)
    for r in range(1, spec.m + 1):
        ea = stathub.estimate_intensity(arr.values[r - 1])
        ed = stathub.estimate_intensity(dep.values[r - 1])
        rep.check(f"class {r} intensity", abs(ed[0] - spec.lambdas[r - 1]) <= 6 * max(ed[1], 1e-12) + 1e-12,
                  value=ed[0], target=spec.lambdas[r - 1], arrivals=ea[0], se=ed[1])
    p1 = spec.stage_params(1)
    stat, p, dof = stathub.bergeom_gof(dep.values[0], p1)
    rep.null("class 1 departures marginal ~ Ber-Geom(lambda_1)", stat, p, dof, n=len(dep))
    tot = dep.total().values
    stat, p, dof = stathub.bergeom_gof(tot, spec.stage_params(spec.m))
    rep.null("combined departures marginal ~ Ber-Geom(sum lambda)", stat, p, dof, n=len(dep))
    return rep


def claims_experiment(
    spec: FixedPointSpec,
    mu_server: BerGeomParams,
    saturated_server: BerGeomParams | None,
    n_slots: int,
    rng,
    L: int = 3,
    alpha: float = stathub.DEFAULT_ALPHA,
) -> TestReport:
    """Both tandem orderings of S_mu and S_{sum lambda} fed by F_m.

    Line 1: F -> S_mu -> G -> S_sum -> H.   Line 2: F -> S_sum -> J -> S_mu -> K.
    """
    _same_family(spec, mu_server)
    if saturated_server is None:
        saturated_server = spec.stage_params(spec.m)
    _same_family(spec, saturated_server)
    if not mu_server.intensity() > spec.total:
        raise ValueError("the first server needs mu > sum of lambdas")
    if not math.isclose(saturated_server.intensity(), spec.total, rel_tol=1e-9):
        raise ValueError("the second server must have intensity equal to the load")
    gen = as_generator(rng)
    m = spec.m
    warm = server_burn_in(spec, mu_server)
    n = 2 * warm + n_slots
    # independent inputs for the two lines and for the reference sample
    F1 = construct_fixed_point(spec, n, gen).arrivals
    F2 = construct_fixed_point(spec, n, gen).arrivals
    Fref = construct_fixed_point(spec, n_slots, gen).arrivals
    top = [EMPTY] * (m - 1) + [SATURATED]

    def draw(params):
        return WorkSequence(F1.start, sample_bergeom(params, n, gen))

    G = run_multiclass(F1, draw(mu_server)).departures
    H = run_multiclass(G, draw(saturated_server), top).departures
    J = run_multiclass(F2, draw(saturated_server), top).departures
    K = run_multiclass(J, draw(mu_server)).departures
    lo = F1.start + 2 * warm

    def cut(x: MulticlassWorkSequence) -> MulticlassWorkSequence:
        return x.slice(lo, lo + n_slots)

    G, H, J, K = cut(G), cut(H), cut(J), cut(K)
    rep = TestReport(f"claims m={m}", alpha, metadata={
        "spec": spec.to_dict(), "mu_server": {"p": mu_server.p, "alpha": mu_server.alpha},
        "saturated_server": {"p": saturated_server.p, "alpha": saturated_server.alpha},
        "n_slots": n_slots, "block_length": L, "burn_in": warm,
        "seed": rng.to_dict() if isinstance(rng, RngStream) else repr(rng),
    })

    def cmp(name, X, Y):
        compare_blocks(rep, name, X, Y, L)

    if m > 1:
        cmp(f"line1 mid: G restricted to {m - 1} classes vs F_{m - 1}", restrict_classes(G, m - 1),
            restrict_classes(Fref, m - 1))
    total = G.total().values
    stat, p, dof = stathub.bergeom_gof(total, saturated_server)
    rep.null("line1 mid: G combined marginal ~ saturated server law", stat, p, dof, n=len(total))
    stat, p, dof = _gof_pairs(total, saturated_server)
    rep.null("line1 mid: G combined lag-1 pairs ~ product law", stat, p, dof, n=len(total) // 2)
    cmp("line outputs: H vs K", H, K)
    cmp("line outputs: H vs F", H, Fref)
    cmp("line outputs: K vs F", K, Fref)
    cmp("saturated-server output: J vs F", J, Fref)
    return rep


def restriction_consistency(spec: FixedPointSpec, n_slots: int, rng, L: int = 3,
                            alpha: float = stathub.DEFAULT_ALPHA) -> TestReport:
    """Dropping class m from F_m against an independently built F_{m-1}."""
    if spec.m < 2:
        raise ValueError("need m >= 2")
    gen = as_generator(rng)
    full = construct_fixed_point(spec, n_slots, gen).arrivals
    sub = construct_fixed_point(spec.restrict(spec.m - 1), n_slots, gen).arrivals
    rep = TestReport(f"restriction m={spec.m}", alpha)
    compare_blocks(rep, f"F_{spec.m} minus class {spec.m} vs F_{spec.m - 1}", restrict_classes(full, spec.m - 1), sub, L)
    return rep


def burke_check(arrival: BerGeomParams, server: BerGeomParams, n_slots: int, rng, L: int = 3,
                alpha: float = stathub.DEFAULT_ALPHA, cap: int = 4) -> TestReport:
    """One-class fixed point: Ber-Geom arrivals through a matched Ber-Geom server."""
    if not server.family().contains(arrival) and not arrival.family().contains(server):
        raise FamilyMismatch("arrival and server must share the family value c")
    lam, mu = arrival.intensity(), server.intensity()
    if not lam < mu:
        raise ValueError("need arrival intensity below service intensity")
    gen = as_generator(rng)
    warm = burn_in_slots(lam, mu, bergeom_variance(arrival) + bergeom_variance(server))
    n = warm + n_slots
    A = WorkSequence(0, sample_bergeom(arrival, n, gen))
    S = WorkSequence(0, sample_bergeom(server, n, gen))
    path = run_queue(A, S)
    a = np.minimum(A.values[warm:], cap)
    d = np.minimum(path.D.values[warm:], cap)
    rep = TestReport("burke", alpha, metadata={
        "arrival": {"p": arrival.p, "alpha": arrival.alpha},
        "server": {"p": server.p, "alpha": server.alpha},
        "family": arrival.family().to_dict(), "n_slots": n_slots, "burn_in": warm,
        "block_length": L, "cap": cap,
        "seed": rng.to_dict() if isinstance(rng, RngStream) else repr(rng),
    })
    stat, p, dof = stathub.block_law_compare(a, d, L)
    rep.null(f"block law A vs D (L={L}, counts capped at {cap})", stat, p, dof, n=len(a) // L)
    rev = stathub.reversibility_test(a, d, L)
    rep.extend(rev)
    stat, p, dof = stathub.bergeom_gof(path.D.values[warm:], arrival)
    rep.null("D marginal ~ arrival law", stat, p, dof, n=len(d))
    return rep
