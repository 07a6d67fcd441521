"""Interchangeable servers: min-plus identities, the Bernoulli coupling, and order tests.

Two servers are interchangeable when a tandem of the two produces the same
departure law in either order, whatever the arrival process.  The pathwise
tools here work on finite windows with empty queues at the left edge.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from mqlab import stathub
from mqlab.fixed_points import FamilyMismatch
from mqlab.multiclass import MulticlassWorkSequence, multiclass_departures
from mqlab.procgen import BerGeomParams, RngStream, as_generator, sample_bergeom
from mqlab.queue_kernel import EMPTY, WindowMismatch, WorkSequence, lindley, run_queue, tandem
from mqlab.stathub import TestReport


# ---------------------------------------------------------------- min-plus pair


def minplus_pair(S1: WorkSequence, S2: WorkSequence, s: int, t: int) -> int:
    """min over s <= u <= t of S1 summed over [s, u) plus S2 summed over [u, t)."""
    if S1.start != S2.start or len(S1) != len(S2):
        raise WindowMismatch("S1 and S2 must share a window")
    if not (S1.start <= s <= t <= S1.stop):
        raise ValueError(f"need {S1.start} <= s <= t <= {S1.stop}, got s={s}, t={t}")
    best = None
    for u in range(s, t + 1):
        v = int(S1.values[s - S1.start : u - S1.start].sum() + S2.values[u - S1.start : t - S1.start].sum())
        best = v if best is None else min(best, v)
    return best


def minplus_table(S1: np.ndarray, S2: np.ndarray) -> np.ndarray:
    """All minplus_pair values at once: entry [..., s, t] for window offsets s <= t (else a large sentinel).

    Uses min_u (C1[u] - C2[u]) over [s, t], a running minimum along t per row s.
    """
    S1 = np.asarray(S1, dtype=np.int64)
    S2 = np.asarray(S2, dtype=np.int64)
    zero = np.zeros(S1.shape[:-1] + (1,), dtype=np.int64)
    C1 = np.concatenate([zero, np.cumsum(S1, axis=-1)], axis=-1)
    C2 = np.concatenate([zero, np.cumsum(S2, axis=-1)], axis=-1)
    n1 = C1.shape[-1]
    big = np.iinfo(np.int64).max // 4
    g = C1 - C2
    tri = np.triu(np.ones((n1, n1), dtype=bool))
    G = np.where(tri, g[..., None, :], big)
    G = np.minimum.accumulate(G, axis=-1)
    out = G - C1[..., :, None] + C2[..., None, :]
    return np.where(tri, out, big)


@dataclass
class InvarianceWitness:
    """Outcome of a replacement check; ``s``/``t`` locate the first counterexample (window offsets)."""

    ok: bool
    S1: list
    S2: list
    S2t: list
    start: int = 0
    s: int | None = None
    t: int | None = None
    lhs: int | None = None
    rhs: int | None = None

    def to_json(self) -> str:
        return json.dumps(self.__dict__)


def replacement_invariance_check(S1: WorkSequence, S2: WorkSequence) -> InvarianceWitness:
    """Check that removing the unused service of the queue (S1 -> S2) leaves every min-plus pair unchanged."""
    if S1.start != S2.start or len(S1) != len(S2):
        raise WindowMismatch("S1 and S2 must share a window")
    path = run_queue(S1, S2, EMPTY)
    S2t = path.D
    lhs = minplus_table(S1.values, S2.values)
    rhs = minplus_table(S1.values, S2t.values)
    bad = np.argwhere(lhs != rhs)
    w = InvarianceWitness(not len(bad), S1.values.tolist(), S2.values.tolist(), S2t.values.tolist(), S1.start)
    if len(bad):
        s, t = (int(x) for x in bad[0])
        w.s, w.t, w.lhs, w.rhs = S1.start + s, S1.start + t, int(lhs[s, t]), int(rhs[s, t])
    return w


def replacement_counterexamples(S1: np.ndarray, S2: np.ndarray) -> np.ndarray:
    """Batched replacement check over rows of (N, n) arrays; returns the failing row indices."""
    _, D = lindley(S1, S2)
    bad = (minplus_table(S1, S2) != minplus_table(S1, D)).any(axis=(-1, -2))
    return np.flatnonzero(bad)


# ---------------------------------------------------------------- Bernoulli coupling


@dataclass(frozen=True, eq=False)
class CoupledServicePair:
    S1: WorkSequence
    S2: WorkSequence
    S1t: WorkSequence
    S2t: WorkSequence
    swapped: bool = False


def make_coupled_pair_bernoulli(
    S1: WorkSequence, S2: WorkSequence, intensities: tuple[float, float] | None = None
) -> CoupledServicePair:
    """Move the unused service of the queue (S1 -> S2) from S2 over to S1.

    With ``intensities`` given and the first not smaller than the second, the two
    processes are swapped first so that S1 is the slower one; ``swapped`` records it.
    """
    for nm, s in (("S1", S1), ("S2", S2)):
        if s.values.size and s.values.max() > 1:
            raise ValueError(f"{nm} must take values in {{0, 1}} for the Bernoulli coupling")
    swapped = False
    if intensities is not None and intensities[0] > intensities[1]:
        S1, S2, swapped = S2, S1, True
    path = run_queue(S1, S2, EMPTY)
    return CoupledServicePair(S1, S2, S1 + path.U, path.D, swapped)


def second_replacement_check(pair: CoupledServicePair) -> bool:
    """Replacing S1 by S1t against S2t leaves every min-plus pair unchanged."""
    a = minplus_table(pair.S1.values, pair.S2t.values)
    b = minplus_table(pair.S1t.values, pair.S2t.values)
    return bool(np.array_equal(a, b))


def transfer_pair(S1: WorkSequence, S2: WorkSequence) -> CoupledServicePair:
    """The unused-service transfer for arbitrary integer sequences (pathwise exact only for 0/1 values)."""
    path = run_queue(S1, S2, EMPTY)
    return CoupledServicePair(S1, S2, S1 + path.U, path.D)


def reversed_replacement_check(pair: CoupledServicePair) -> InvarianceWitness:
    """The replacement check for the reverse-time queue fed S2t* and served by S1t*."""
    return replacement_invariance_check(pair.S2t.reversed(), pair.S1t.reversed())


def coupled_tandems_agree(pair: CoupledServicePair, A: WorkSequence) -> bool:
    """Final departures of (A -> S1 -> S2) and (A -> S1t -> S2t) coincide slot by slot."""
    one = tandem(A, [pair.S1, pair.S2])[-1].D
    two = tandem(A, [pair.S1t, pair.S2t])[-1].D
    return one == two


# ---------------------------------------------------------------- truncation


def truncation_profile(A: WorkSequence, S1: WorkSequence, S2: WorkSequence, n: int) -> np.ndarray:
    """Tandem departures at slot n with arrivals zeroed before -s, for s = -n .. -A.start."""
    depths = np.arange(-n, -A.start + 1)
    slots = np.arange(A.start, A.stop)
    rows = np.where(slots[None, :] >= -depths[:, None], A.values[None, :], 0)
    _, D1 = lindley(rows, S1.values[None, :])
    _, D2 = lindley(D1, S2.values[None, :])
    return D2[:, n - A.start]


def _latest_argmax_tail(A: np.ndarray, S: np.ndarray, i: int) -> tuple[int, int]:
    """(value, latest u) of max over u <= i of sum_{r=u}^{i-1} (A - S) on window offsets."""
    tail = np.concatenate([np.cumsum((A[:i] - S[:i])[::-1])[::-1], [0]])
    best = tail.max()
    return int(best), int(np.flatnonzero(tail == best)[-1])


def predicted_stabilization(A: WorkSequence, S1: WorkSequence, S2: WorkSequence, n: int) -> int:
    """Truncation depth from which the tandem output at slot n can no longer change.

    Follows the attaining indices of the two sup formulas: the second queue's sup
    at n is attained at some u2, and every first-stage departure on [u2, n] is
    fixed once the truncation reaches its own attaining index.
    """
    a, s1, s2 = A.values, S1.values, S2.values
    i = n - A.start
    D1 = run_queue(A, S1).D.values
    _, u2 = _latest_argmax_tail(D1, s2, i)
    deepest = i
    for r in range(u2, i + 1):
        _, u1 = _latest_argmax_tail(a, s1, r)
        deepest = min(deepest, u1)
    return -(A.start + deepest)


# ---------------------------------------------------------------- order tests


def _arrival_array(A, reps: int, gen) -> np.ndarray:
    """Arrivals as a (reps, m, n) array."""
    if callable(A):
        arr = np.asarray(A(gen, reps), dtype=np.int64)
        return arr[:, None, :] if arr.ndim == 2 else arr
    if isinstance(A, MulticlassWorkSequence):
        v = A.values
    elif isinstance(A, WorkSequence):
        v = A.values[None, :]
    else:
        v = np.asarray(A, dtype=np.int64)
        v = v[None, :] if v.ndim == 1 else v
    return np.broadcast_to(v, (reps,) + v.shape)


def two_stage_output(A: np.ndarray, S1: np.ndarray, S2: np.ndarray) -> np.ndarray:
    """Per-class departures of the priority tandem A -> S1 -> S2, all queues empty at the edge."""
    D1 = multiclass_departures(np.cumsum(A, axis=-2), S1)
    return multiclass_departures(np.cumsum(D1, axis=-2), S2)


def compare_orderings(
    dist1: BerGeomParams,
    dist2: BerGeomParams,
    A,
    reps: int,
    rng,
    L: int = 3,
    cap: int = 3,
    alpha: float = stathub.DEFAULT_ALPHA,
    name: str = "interchange",
) -> TestReport:
    """Two independent Monte Carlo samples of the tandem output, one per service order."""
    gen = as_generator(rng)
    rep = TestReport(name, alpha)
    outs = []
    for first, second in ((dist1, dist2), (dist2, dist1)):
        arr = _arrival_array(A, reps, gen)
        n = arr.shape[-1]
        S1 = sample_bergeom(first, (reps, n), gen)
        S2 = sample_bergeom(second, (reps, n), gen)
        outs.append(two_stage_output(arr, S1, S2))
    x, y = outs
    m, n = x.shape[-2:]
    for j in range(n // L):
        bx = np.minimum(x[..., j * L : (j + 1) * L], cap).reshape(reps, -1)
        by = np.minimum(y[..., j * L : (j + 1) * L], cap).reshape(reps, -1)
        stat, p, dof = stathub.two_sample_chi2(bx, by)
        rep.null(f"block {j} (slots {j * L}..{(j + 1) * L - 1}) law", stat, p, dof, n=reps)
    cx, cy = np.cumsum(x, axis=-2).sum(axis=-1), np.cumsum(y, axis=-2).sum(axis=-1)
    for r in range(m):
        stat, p, dof = stathub.two_sample_chi2(cx[:, r : r + 1], cy[:, r : r + 1])
        rep.null(f"total departures of classes 1..{r + 1}", stat, p, dof, n=reps)
    return rep


def verify_interchangeability(
    dist1: BerGeomParams,
    dist2: BerGeomParams,
    A,
    reps: int,
    rng,
    L: int = 3,
    alpha: float = stathub.DEFAULT_ALPHA,
) -> TestReport:
    """Monte Carlo order test for two servers of one family.

    ``A`` is a fixed WorkSequence / MulticlassWorkSequence / array, or a callable
    ``(generator, reps) -> (reps, [m,] n)`` drawing independent arrival windows.
    """
    fam = dist1.family()
    if not fam.contains(dist2):
        raise FamilyMismatch(f"{dist1} and {dist2} lie in different families; they are not interchangeable")
    rep = compare_orderings(dist1, dist2, A, reps, rng, L, alpha=alpha, name="interchangeability")
    rep.metadata.update({
        "dist1": {"p": dist1.p, "alpha": dist1.alpha},
        "dist2": {"p": dist2.p, "alpha": dist2.alpha},
        "family": fam.to_dict(), "replications": reps, "block_length": L,
        "seed": rng.to_dict() if isinstance(rng, RngStream) else repr(rng),
        "arrivals": "sampler" if callable(A) else _arrival_array(A, 1, None)[0].tolist(),
    })
    return rep


def exact_output_laws(A, q1: float, q2: float) -> tuple[dict, dict]:
    """Exact laws of the tandem output in both orders for Bernoulli(q1), Bernoulli(q2) services.

    Enumerates all 2^(2n) service outcomes on the n-slot window of ``A``.
    """
    arr = _arrival_array(A, 1, None)[0]
    n = arr.shape[-1]
    bits = np.array(list(itertools.product((0, 1), repeat=2 * n)), dtype=np.int64)
    Sa, Sb = bits[:, :n], bits[:, n:]

    def prob(S, q):
        return np.prod(np.where(S == 1, q, 1.0 - q), axis=1)

    laws = []
    for qa, qb in ((q1, q2), (q2, q1)):
        w = prob(Sa, qa) * prob(Sb, qb)
        out = two_stage_output(np.broadcast_to(arr, (len(bits),) + arr.shape), Sa, Sb)
        law: dict = {}
        for key, pr in zip(map(lambda r: tuple(r.ravel().tolist()), out), w):
            law[key] = law.get(key, 0.0) + float(pr)
        laws.append(law)
    return laws[0], laws[1]


def law_distance(p: dict, q: dict) -> float:
    """Largest pointwise probability difference."""
    return max(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in set(p) | set(q))
