"""Bernoulli-geometric work processes.

A Bernoulli-geometric variable is ``B * G`` with ``B ~ Ber(p)`` and
``G ~ Geom(alpha)`` on {1, 2, ...}.  Two parameter pairs are interchangeable
(and share fixed points) iff they sit in the same family, i.e. share the value
of ``c(p, alpha) = p/(1-p) * alpha/(1-alpha)``.  The edges ``alpha = 1``
(Bernoulli batches) and ``p = 1`` (pure geometric batches) are one-parameter
families of their own and are tagged rather than mapped to ``c = inf``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

RNG_NAME = "numpy.random.Philox(SeedSequence(seed, spawn_key=(stream_id,)))"


class FamilyKind(str, enum.Enum):
    INTERIOR = "interior"
    BERNOULLI = "bernoulli"
    GEOMETRIC = "geometric"


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class BerGeomParams:
    p: float
    alpha: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise ParameterError(f"p must lie in [0, 1], got {self.p}")
        if not (0.0 < self.alpha <= 1.0):
            raise ParameterError(f"alpha must lie in (0, 1], got {self.alpha}")

    def intensity(self) -> float:
        return self.p / self.alpha

    def c_value(self) -> "CValue":
        return c_value(self)

    def family(self) -> "FamilySpec":
        return family_of(self)

    def pmf(self, k: int) -> float:
        if k < 0:
            return 0.0
        if k == 0:
            return 1.0 - self.p
        return self.p * self.alpha * (1.0 - self.alpha) ** (k - 1)

    def sf(self, k: int) -> float:
        """P(X >= k)."""
        if k <= 0:
            return 1.0
        return self.p * (1.0 - self.alpha) ** (k - 1)

    @property
    def kind(self) -> FamilyKind:
        if self.alpha == 1.0:
            return FamilyKind.BERNOULLI
        if self.p == 1.0:
            return FamilyKind.GEOMETRIC
        return FamilyKind.INTERIOR


class CValue(NamedTuple):
    """Value of the invariant c.

    For interior parameters ``value`` is c itself.  On a boundary, ``value`` is
    the factor that survives once the degenerate one is removed (p/(1-p) for
    Bernoulli batches, alpha/(1-alpha) for geometric ones).
    """

    kind: FamilyKind
    value: float


@dataclass(frozen=True)
class FamilySpec:
    kind: FamilyKind
    c: float = math.inf

    def __post_init__(self):
        if self.kind is FamilyKind.INTERIOR:
            if not (0.0 < self.c < math.inf):
                raise ParameterError(f"interior family needs 0 < c < inf, got {self.c}")
        elif self.c != math.inf:
            # every member of a boundary family is interchangeable with every other
            object.__setattr__(self, "c", math.inf)

    @classmethod
    def interior(cls, c: float) -> "FamilySpec":
        return cls(FamilyKind.INTERIOR, float(c))

    @classmethod
    def bernoulli(cls) -> "FamilySpec":
        return cls(FamilyKind.BERNOULLI)

    @classmethod
    def geometric(cls) -> "FamilySpec":
        return cls(FamilyKind.GEOMETRIC)

    def contains(self, params: BerGeomParams) -> bool:
        other = family_of(params)
        if self.kind is not other.kind:
            return False
        if self.kind is FamilyKind.INTERIOR:
            return math.isclose(self.c, other.c, rel_tol=1e-10)
        return True

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "c": None if self.c == math.inf else self.c}

    @classmethod
    def from_dict(cls, d: dict) -> "FamilySpec":
        kind = FamilyKind(d["kind"])
        if kind is FamilyKind.INTERIOR:
            return cls.interior(d["c"])
        return cls(kind)


def c_value(params: BerGeomParams) -> CValue:
    p, a = params.p, params.alpha
    if p == 1.0 and a == 1.0:
        raise ParameterError("p = alpha = 1 is the constant-1 server; it has no family")
    if a == 1.0:
        return CValue(FamilyKind.BERNOULLI, p / (1.0 - p))
    if p == 1.0:
        return CValue(FamilyKind.GEOMETRIC, a / (1.0 - a))
    return CValue(FamilyKind.INTERIOR, (p / (1.0 - p)) * (a / (1.0 - a)))


def family_of(params: BerGeomParams) -> FamilySpec:
    cv = c_value(params)
    if cv.kind is FamilyKind.INTERIOR:
        return FamilySpec.interior(cv.value)
    return FamilySpec(cv.kind)


def solve_params(intensity: float, family: FamilySpec) -> BerGeomParams:
    """The unique member of ``family`` with mean ``intensity``.

    Interior families are solved by bisection on p: with alpha = p/intensity the
    map p -> c(p, p/intensity) increases from 0 to inf on (0, min(1, intensity)).
    """
    if not intensity > 0:
        raise ParameterError(f"intensity must be positive, got {intensity}")
    if family.kind is FamilyKind.BERNOULLI:
        if intensity > 1.0:
            raise ParameterError(f"Bernoulli batches cannot carry intensity {intensity} > 1")
        return BerGeomParams(float(intensity), 1.0)
    if family.kind is FamilyKind.GEOMETRIC:
        if intensity < 1.0:
            raise ParameterError(f"geometric batches have intensity >= 1, got {intensity}")
        return BerGeomParams(1.0, 1.0 / intensity)

    lam, c = float(intensity), family.c

    def level(p: float) -> float:
        a = p / lam
        if p >= 1.0 or a >= 1.0:
            return math.inf
        return (p / (1.0 - p)) * (a / (1.0 - a))

    lo, hi = 0.0, min(1.0, lam)
    # fixed iteration count: enough to collapse the bracket to adjacent floats
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if level(mid) < c:
            lo = mid
        else:
            hi = mid
    p = lo if abs(level(lo) - c) <= abs(level(hi) - c) else hi
    params = BerGeomParams(p, p / lam)
    if not math.isclose(level(p), c, rel_tol=1e-9):
        raise ParameterError(f"no member of c={c} with intensity {intensity}")
    return params


@dataclass(frozen=True)
class RngStream:
    """Seed plus stream id; each pair names an independent Philox stream."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed) & (2**64 - 1), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, i: int) -> "RngStream":
        # streams are indexed by a flat integer; children interleave deterministically
        return RngStream(self.seed, self.stream_id * 1_000_003 + int(i) + 1)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "stream_id": self.stream_id, "rng": RNG_NAME}


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return RngStream(int(rng)).generator()


def sample_bergeom(params: BerGeomParams, size, rng) -> np.ndarray:
    """Raw i.i.d. Bernoulli-geometric draws (int64) of the given shape."""
    gen = as_generator(rng)
    if params.p == 0.0:
        return np.zeros(size, dtype=np.int64)
    on = gen.random(size) < params.p
    if params.alpha == 1.0:
        return on.astype(np.int64)
    g = gen.geometric(params.alpha, size=size).astype(np.int64)
    return np.where(on, g, 0)


def sample_bergeom_process(params: BerGeomParams, window, rng):
    """Sample a WorkSequence on ``window`` (a range, or a (start, stop) pair)."""
    from mqlab.queue_kernel import WorkSequence

    start, stop = _window_bounds(window)
    if stop <= start:
        raise ValueError("window must be nonempty")
    return WorkSequence(start, sample_bergeom(params, stop - start, rng))


def _window_bounds(window) -> tuple[int, int]:
    if isinstance(window, range):
        if window.step != 1:
            raise ValueError("window must be a contiguous range")
        return window.start, window.stop
    if isinstance(window, int):
        return 0, window
    start, stop = window
    return int(start), int(stop)
