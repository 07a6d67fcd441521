"""Multi-type TASEP on a ring and the finite-class label process.

Slot n of an arrival window becomes site n of the ring: a class-r arrival is
a type-r particle, an empty slot is a hole.  Each site rings at rate 1; a
type-r particle at site i swaps with site i-1 when that site holds a hole or
a particle of larger type.  Clocks belong to sites, so one attempt stream
drives the full system and every class projection of it at once.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from mqlab import stathub
from mqlab.fixed_points import FixedPointSpec, construct_fixed_point
from mqlab.multiclass import MulticlassWorkSequence
from mqlab.procgen import FamilyKind, FamilySpec, RngStream, as_generator
from mqlab.stathub import TestReport

HOLE = np.iinfo(np.int32).max


@dataclass(frozen=True, eq=False)
class TasepConfig:
    """Ring of site values in 1..m, with HOLE for empty sites."""

    sites: np.ndarray
    m: int

    def __post_init__(self):
        s = np.asarray(self.sites, dtype=np.int64)
        if s.ndim != 1 or s.size < 2:
            raise ValueError("a ring needs at least two sites")
        part = s[s != HOLE]
        if part.size and (part.min() < 1 or part.max() > self.m):
            raise ValueError(f"particle types must lie in 1..{self.m}")
        object.__setattr__(self, "sites", s)

    def __len__(self) -> int:
        return self.sites.size

    def __eq__(self, other) -> bool:
        return isinstance(other, TasepConfig) and self.m == other.m and np.array_equal(self.sites, other.sites)

    def counts(self) -> np.ndarray:
        """Particles per type, then holes."""
        return np.array([np.count_nonzero(self.sites == r) for r in range(1, self.m + 1)]
                        + [np.count_nonzero(self.sites == HOLE)])

    def project(self, r: int) -> "TasepConfig":
        """Types above r become holes."""
        return TasepConfig(np.where(self.sites > r, HOLE, self.sites), r)

    def to_row(self) -> list[str]:
        return ["inf" if v == HOLE else str(int(v)) for v in self.sites]

    @classmethod
    def from_row(cls, row, m: int | None = None) -> "TasepConfig":
        vals = np.array([HOLE if str(v).strip() in ("inf", "hole") else int(v) for v in row], dtype=np.int64)
        part = vals[vals != HOLE]
        return cls(vals, m if m is not None else int(part.max(initial=1)))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerow(self.to_row())

    @classmethod
    def read_csv(cls, path, m: int | None = None) -> "TasepConfig":
        with open(path, newline="") as fh:
            return cls.from_row(next(csv.reader(fh)), m)


def arrivals_to_config(A: MulticlassWorkSequence) -> TasepConfig:
    """Slot n with a class-r arrival -> type r at site n - start; empty slots -> holes."""
    tot = A.values.sum(axis=0)
    if tot.size and tot.max() > 1:
        raise ValueError("each slot may carry at most one customer")
    lab = A.labels()
    return TasepConfig(np.where(lab == 0, HOLE, lab), A.m)


def apply_attempts(config: TasepConfig, sites: np.ndarray) -> TasepConfig:
    """Process jump attempts at the given sites in order (reference loop)."""
    s = config.sites.copy()
    n = s.size
    for i in np.asarray(sites).tolist():
        v = s[i]
        j = i - 1 if i else n - 1
        if v != HOLE and s[j] > v:
            s[i], s[j] = s[j], v
    return TasepConfig(s, config.m)


def apply_attempts_batch(rings: np.ndarray, sites: np.ndarray, active: np.ndarray | None = None) -> np.ndarray:
    """Attempts for many rings in lockstep: ``sites[:, k]`` is ring i's k-th attempt.

    ``active[:, k]`` masks attempts past each ring's own Poisson count.
    """
    rings = rings.copy()
    R, n = rings.shape
    idx = np.arange(R)
    for k in range(sites.shape[1]):
        i = sites[:, k]
        j = np.where(i == 0, n - 1, i - 1)
        v, w = rings[idx, i], rings[idx, j]
        go = (v != HOLE) & (w > v)
        if active is not None:
            go &= active[:, k]
        if go.any():
            g = idx[go]
            rings[g, i[go]] = w[go]
            rings[g, j[go]] = v[go]
    return rings


def attempt_stream(n_sites: int, duration: float, rng) -> np.ndarray:
    """Sites of the jump attempts in [0, duration): Poisson(n_sites * duration) uniform picks."""
    gen = as_generator(rng)
    k = gen.poisson(n_sites * duration)
    return gen.integers(0, n_sites, k)


def tasep_step_continuous(config: TasepConfig, duration: float, rng) -> TasepConfig:
    return apply_attempts(config, attempt_stream(len(config), duration, rng))


def evolve_rings(rings: np.ndarray, duration: float, rng, chunk: int = 50_000) -> np.ndarray:
    """Run independent rings (rows) for ``duration``, each with its own attempt count."""
    gen = as_generator(rng)
    R, n = rings.shape
    counts = gen.poisson(n * duration, R)
    done = 0
    total = int(counts.max(initial=0))
    while done < total:
        k = min(chunk, total - done)
        sites = gen.integers(0, n, (R, k))
        active = (done + np.arange(k))[None, :] < counts[:, None]
        rings = apply_attempts_batch(rings, sites, active)
        done += k
    return rings


# ---------------------------------------------------------------- statistics


def pair_frequencies(rings: np.ndarray, m: int) -> np.ndarray:
    """Per ring, the fraction of cyclically adjacent site pairs (i, i+1) in each (a, b) state."""
    code = np.where(rings == HOLE, 0, rings)
    nxt = np.roll(code, -1, axis=1)
    k = m + 1
    flat = code * k + nxt
    return np.stack([np.bincount(row, minlength=k * k) for row in flat]) / rings.shape[1]


def densities(rings: np.ndarray, m: int) -> np.ndarray:
    return np.stack([(rings == r).mean(axis=1) for r in range(1, m + 1)], axis=1)


def _state_names(m: int) -> list[str]:
    return ["hole"] + [str(r) for r in range(1, m + 1)]


def drift_z_scores(before: np.ndarray, after: np.ndarray) -> np.ndarray:
    """Mean change over replications in units of its standard error (0 where nothing changed)."""
    d = after - before
    mean = d.mean(axis=0)
    se = d.std(axis=0, ddof=1) / math.sqrt(d.shape[0])
    return np.divide(mean, se, out=np.zeros_like(mean), where=se > 0)


def independent_rings(lambdas, n_sites: int, reps: int, rng) -> np.ndarray:
    """i.i.d. sites with the given type densities (the negative-control law)."""
    gen = as_generator(rng)
    lam = np.asarray(lambdas, dtype=float)
    probs = np.concatenate([lam, [1 - lam.sum()]])
    draw = gen.choice(len(probs), size=(reps, n_sites), p=probs)
    return np.where(draw == len(lam), HOLE, draw + 1)


def fixed_point_rings(spec: FixedPointSpec, n_sites: int, reps: int, rng) -> np.ndarray:
    gen = as_generator(rng)
    return np.stack([arrivals_to_config(construct_fixed_point(spec, n_sites, gen).arrivals).sites
                     for _ in range(reps)])


def stationarity_check(spec: FixedPointSpec, n_sites: int, duration: float, reps: int, rng,
                       sigmas: float = 3.0, control_sigmas: float = 5.0, control: bool = True) -> TestReport:
    """Densities and adjacent-pair frequencies before and after running the dynamics.

    Rings start from fixed-point windows wrapped at the seam.  The negative
    control starts from independent sites with the same densities.
    """
    if spec.family.kind is not FamilyKind.BERNOULLI:
        raise ValueError("ring configurations need the Bernoulli family (one customer per slot)")
    if not spec.total < 1:
        raise ValueError("total density must stay below 1")
    gen = as_generator(rng)
    m = spec.m
    rep = TestReport(f"TASEP stationarity m={m}", metadata={
        "spec": spec.to_dict(), "ring": n_sites, "duration": duration, "replications": reps,
        "seed": rng.to_dict() if isinstance(rng, RngStream) else repr(rng),
    })
    names = _state_names(m)
    k = m + 1

    def battery(rings0, label):
        rings1 = evolve_rings(rings0, duration, gen)
        rep.exact(f"{label}: particle counts conserved", bool(np.array_equal(np.sort(rings0, 1), np.sort(rings1, 1))))
        zd = drift_z_scores(densities(rings0, m), densities(rings1, m))
        zp = drift_z_scores(pair_frequencies(rings0, m), pair_frequencies(rings1, m))
        return zd, zp

    zd, zp = battery(fixed_point_rings(spec, n_sites, reps, gen), "fixed point")
    for r in range(m):
        rep.check(f"type {r + 1} density drift within {sigmas:g} sigma", abs(zd[r]) <= sigmas, value=zd[r])
    for c in range(k * k):
        a, b = divmod(c, k)
        rep.check(f"pair ({names[a]},{names[b]}) drift within {sigmas:g} sigma", abs(zp[c]) <= sigmas, value=zp[c])
    if control:
        _, zc = battery(independent_rings(spec.lambdas, n_sites, reps, gen), "control")
        worst = int(np.argmax(np.abs(zc)))
        a, b = divmod(worst, k)
        rep.check(f"control: independent types drift by more than {control_sigmas:g} sigma",
                  abs(zc[worst]) > control_sigmas, value=float(zc[worst]), pair=[names[a], names[b]])
    return rep


# ---------------------------------------------------------------- label process


@dataclass(frozen=True, eq=False)
class LabelSequence:
    labels: np.ndarray
    m: int | None = None

    def __post_init__(self):
        v = np.asarray(self.labels, dtype=float)
        if v.size and (v.min() < 0 or v.max() > 1):
            raise ValueError("labels lie in [0, 1]")
        object.__setattr__(self, "labels", v)

    def __len__(self) -> int:
        return self.labels.size

    def threshold(self, lam: float) -> np.ndarray:
        """Class index (1-based, among labels <= lam) or 0 for no customer, on the m-point grid."""
        if self.m is None:
            raise ValueError("thresholding to classes needs the class count")
        r = np.rint(self.labels * self.m + 0.5).astype(np.int64)
        return np.where(self.labels <= lam, r, 0)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["slot", "label"])
            for i, v in enumerate(self.labels.tolist()):
                w.writerow([i, repr(v)])


def label_spec(m: int) -> FixedPointSpec:
    return FixedPointSpec(FamilySpec.bernoulli(), tuple([1.0 / m] * m))


def finite_label_process(m: int, n_slots: int, rng) -> LabelSequence:
    """m classes of intensity 1/m each; the last stage fills every slot, so every slot gets a label."""
    if m < 2:
        raise ValueError("need at least two classes")
    F = construct_fixed_point(label_spec(m), n_slots, rng).arrivals
    lab = F.labels()
    if np.any(lab == 0):
        raise AssertionError("a slot was left without a class")
    return LabelSequence((lab - 0.5) / m, m)


def repeat_statistics(L: LabelSequence, max_lag: int, batches: int = 50) -> list[tuple[int, float, float, float]]:
    """(lag, P(L(0) = L(k)), ci_low, ci_high) with batch-means 95% intervals."""
    x = L.labels
    out = []
    for k in range(max_lag + 1):
        hit = (x[: x.size - k] == x[k:]).astype(float)
        est, se = stathub.estimate_intensity(hit, batches)
        out.append((k, est, est - 1.96 * se, est + 1.96 * se))
    return out


def exact_adjacent_match_m3() -> Fraction:
    """P(L(0) = L(1)) for three classes of intensity 1/3, by enumeration.

    Class 3 marks the empty slots of the two-class process, whose total is
    Bernoulli(2/3).  The two-class stage is a Bernoulli(1/3)/Bernoulli(2/3)
    queue started from its stationary geometric content (ratio 1/4); contents
    of 2 or more cannot empty within two slots, so they are lumped.
    """
    p, q = Fraction(1, 3), Fraction(2, 3)
    rho = p * (1 - q) / (q * (1 - p))
    init = {0: 1 - rho, 1: (1 - rho) * rho, 2: rho * rho}
    total = Fraction(0)
    for x0, px in init.items():
        for a0 in (0, 1):
            for s0 in (0, 1):
                for a1 in (0, 1):
                    for s1 in (0, 1):
                        pr = px
                        for v, pv in ((a0, p), (s0, q), (a1, p), (s1, q)):
                            pr *= pv if v else 1 - pv
                        labels = []
                        x = x0
                        for a, s in ((a0, s0), (a1, s1)):
                            if not s:
                                labels.append(3)  # no service: empty slot of the two-class process
                            elif x + a > 0:
                                labels.append(1)
                            else:
                                labels.append(2)
                            x = max(x + a - s, 0)
                        if labels[0] == labels[1]:
                            total += pr
    return total


def label_clustering(ms, n_slots: int, rng, target: float = 1 / 6, final_tol: float = 0.01) -> TestReport:
    gen = as_generator(rng)
    rep = TestReport("label clustering", metadata={"ms": list(ms), "n_slots": n_slots})
    ests = []
    for m in ms:
        L = finite_label_process(m, n_slots, gen)
        _, est, lo, hi = repeat_statistics(L, 1)[1]
        ests.append(est)
        rep.check(f"m={m}: P(L(0)=L(1)) estimate", True, value=est, ci=[lo, hi])
    rep.check("estimates move monotonically toward 1/6", all(abs(b - target) < abs(a - target)
                                                             for a, b in zip(ests, ests[1:])), estimates=ests)
    rep.tolerance(f"m={ms[-1]}: within {final_tol:g} of 1/6", ests[-1], target, final_tol)
    if len(ms) > 1:
        # the finite-m excess decays like 1/m; remove that term using the last two sizes
        m0, m1 = ms[-2], ms[-1]
        extra = (m1 * ests[-1] - m0 * ests[-2]) / (m1 - m0)
        rep.tolerance(f"1/m extrapolation from m={m0},{m1}: within {final_tol:g} of 1/6", extra, target, final_tol)
    return rep
