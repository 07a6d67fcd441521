"""Single-class discrete-time batch queue.

Slot n: A(n) customers arrive, then S(n) units of service are offered.  X(n) is
the content before the arrival, so

    X(n+1) = [X(n) + A(n) - S(n)]+,   D(n) = min(X(n) + A(n), S(n)),   U = S - D.

The queue lives on a finite window with an explicit initial condition at its
left edge.  Empty at the edge is the sup formula restricted to the window;
Saturated is the X = inf regime where every unit of service is used.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAX_SLOT_VALUE = 2**32
MAX_WINDOW = 2**31


class WindowMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WorkSequence:
    """Nonnegative integer work per slot; ``values[i]`` is slot ``start + i``."""

    start: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1:
            raise ValueError("WorkSequence values must be one-dimensional")
        if v.size and not np.issubdtype(v.dtype, np.integer):
            if not np.all(v == np.round(v)):
                raise ValueError("work amounts must be integers")
        v = v.astype(np.int64, copy=False)
        if v.size:
            if v.min() < 0:
                raise ValueError("work amounts must be nonnegative")
            if v.max() > MAX_SLOT_VALUE:
                raise OverflowError(f"slot value exceeds {MAX_SLOT_VALUE}")
        if v.size > MAX_WINDOW:
            raise OverflowError("window too long for 64-bit cumulative sums")
        object.__setattr__(self, "start", int(self.start))
        object.__setattr__(self, "values", v)

    @classmethod
    def of(cls, values: Sequence[int], start: int = 0) -> "WorkSequence":
        return cls(start, np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.int64))

    @classmethod
    def zeros(cls, start: int, length: int) -> "WorkSequence":
        return cls(start, np.zeros(length, dtype=np.int64))

    @property
    def stop(self) -> int:
        return self.start + len(self.values)

    @property
    def window(self) -> range:
        return range(self.start, self.stop)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, n: int) -> int:
        if not self.start <= n < self.stop:
            raise IndexError(f"slot {n} outside window [{self.start}, {self.stop})")
        return int(self.values[n - self.start])

    def __eq__(self, other) -> bool:
        if not isinstance(other, WorkSequence):
            return NotImplemented
        return self.start == other.start and np.array_equal(self.values, other.values)

    def __add__(self, other: "WorkSequence") -> "WorkSequence":
        _check_window(self, other)
        return WorkSequence(self.start, self.values + other.values)

    def __repr__(self) -> str:
        body = np.array2string(self.values, threshold=12)
        return f"WorkSequence(start={self.start}, values={body})"

    def total(self) -> int:
        return int(self.values.sum())

    def slice(self, lo: int, hi: int) -> "WorkSequence":
        """Restriction to slots [lo, hi)."""
        lo, hi = max(lo, self.start), min(hi, self.stop)
        return WorkSequence(lo, self.values[lo - self.start : hi - self.start])

    def reversed(self) -> "WorkSequence":
        """Time reversal n -> -n, re-anchored so the window stays [start, stop)."""
        return WorkSequence(self.start, self.values[::-1].copy())

    def to_json(self) -> str:
        return json.dumps({"start": self.start, "values": self.values.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "WorkSequence":
        d = json.loads(text)
        return cls(d["start"], np.asarray(d["values"], dtype=np.int64))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["slot", "value"])
            for i, v in enumerate(self.values.tolist()):
                w.writerow([self.start + i, v])

    @classmethod
    def read_csv(cls, path) -> "WorkSequence":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: no rows")
        slots = [int(r["slot"]) for r in rows]
        if slots != list(range(slots[0], slots[0] + len(slots))):
            raise ValueError(f"{path}: slots must be contiguous and increasing")
        return cls(slots[0], np.asarray([int(r["value"]) for r in rows], dtype=np.int64))


@dataclass(frozen=True)
class InitialCondition:
    kind: str = "empty"
    x0: int = 0

    def __post_init__(self):
        if self.kind not in ("empty", "finite", "saturated"):
            raise ValueError(f"unknown initial condition {self.kind!r}")
        if self.kind == "finite" and self.x0 < 0:
            raise ValueError("initial content must be nonnegative")
        if self.kind != "finite" and self.x0 != 0:
            raise ValueError("x0 only applies to finite initial conditions")

    @classmethod
    def finite(cls, x0: int) -> "InitialCondition":
        x0 = int(x0)
        return cls("finite", x0) if x0 else EMPTY

    @property
    def saturated(self) -> bool:
        return self.kind == "saturated"

    @property
    def content(self) -> float:
        return math.inf if self.saturated else self.x0


EMPTY = InitialCondition("empty")
SATURATED = InitialCondition("saturated")


@dataclass(frozen=True, eq=False)
class QueuePath:
    """Trajectory of one queue on its window.

    ``X`` has one more entry than the window (content at each slot start and
    after the last slot); it is ``None`` for a saturated queue, whose content
    is infinite throughout.
    """

    A: WorkSequence
    S: WorkSequence
    X: np.ndarray | None
    D: WorkSequence
    U: WorkSequence

    @property
    def saturated(self) -> bool:
        return self.X is None

    def queue_length(self, n: int) -> float:
        if self.saturated:
            return math.inf
        return int(self.X[n - self.A.start])

    def cumulative_departures(self, t: int) -> int:
        """Departures in slots [start, t)."""
        return int(self.D.values[: t - self.D.start].sum())


def _check_window(*seqs: WorkSequence) -> None:
    first = seqs[0]
    for s in seqs[1:]:
        if s.start != first.start or len(s) != len(first):
            raise WindowMismatch(
                f"windows differ: [{first.start}, {first.stop}) vs [{s.start}, {s.stop})"
            )


def lindley(A: np.ndarray, S: np.ndarray, x0=0) -> tuple[np.ndarray, np.ndarray]:
    """X and D for arrays of shape (..., n); ``x0`` broadcasts over the leading axes.

    Unrolled recursion: with W the partial sums of A - S (W(0) = 0),
    X(k) = W(k) - min(-x0, min_{j<=k} W(j)).
    """
    A = np.asarray(A, dtype=np.int64)
    S = np.asarray(S, dtype=np.int64)
    W = np.cumsum(A - S, axis=-1)
    W = np.concatenate([np.zeros(W.shape[:-1] + (1,), dtype=np.int64), W], axis=-1)
    floor = np.minimum.accumulate(W, axis=-1)
    x0 = np.asarray(x0, dtype=np.int64)
    X = W - np.minimum(floor, -x0[..., None] if x0.ndim else -x0)
    D = X[..., :-1] + A - X[..., 1:]
    return X, D


def run_queue(A: WorkSequence, S: WorkSequence, init: InitialCondition = EMPTY) -> QueuePath:
    _check_window(A, S)
    if init.saturated:
        return saturated_path(S, A)
    X, D = lindley(A.values, S.values, init.x0)
    Dseq = WorkSequence(A.start, D)
    return QueuePath(A, S, X, Dseq, WorkSequence(A.start, S.values - D))


def saturated_path(S: WorkSequence, A: WorkSequence | None = None) -> QueuePath:
    """Infinite content: every unit of service is used."""
    if A is None:
        A = WorkSequence.zeros(S.start, len(S))
    _check_window(A, S)
    return QueuePath(A, S, None, S, WorkSequence.zeros(S.start, len(S)))


def queue_length_sup(A: WorkSequence, S: WorkSequence, n: int) -> int:
    """max over window-start <= m <= n of sum_{r=m}^{n-1} (A(r) - S(r))."""
    _check_window(A, S)
    if not A.start <= n <= A.stop:
        raise IndexError(f"slot {n} outside [{A.start}, {A.stop}]")
    best = 0
    run = 0
    # walk m downward from n, accumulating the tail sum
    for r in range(n - 1, A.start - 1, -1):
        run += A[r] - S[r]
        best = max(best, run)
    return int(best)


def tandem(
    A: WorkSequence,
    services: Sequence[WorkSequence],
    inits: Sequence[InitialCondition] | None = None,
) -> list[QueuePath]:
    if not services:
        raise ValueError("tandem needs at least one server")
    if inits is None:
        inits = [EMPTY] * len(services)
    if len(inits) != len(services):
        raise ValueError("one initial condition per stage")
    paths = []
    arrivals = A
    for S, init in zip(services, inits):
        path = run_queue(arrivals, S, init)
        paths.append(path)
        arrivals = path.D
    return paths


def variational_departures(A: WorkSequence, S1: WorkSequence, S2: WorkSequence, t: int) -> int:
    """Cumulative departures from a two-queue tandem over [0, t) as a min-plus triple sum.

    Requires A(n) = 0 for n < 0; both queues are then empty at time 0.
    """
    _check_window(A, S1, S2)
    if t < 1:
        raise ValueError("t must be at least 1")
    if A.start > 0 or A.stop < t:
        raise ValueError(f"window [{A.start}, {A.stop}) must cover [0, {t})")
    if A.start < 0 and np.any(A.values[: -A.start] != 0):
        raise ValueError("arrivals before time 0 must be zero")
    off = -A.start
    cA = np.concatenate([[0], np.cumsum(A.values[off : off + t])])
    c1 = np.concatenate([[0], np.cumsum(S1.values[off : off + t])])
    c2 = np.concatenate([[0], np.cumsum(S2.values[off : off + t])])
    u1 = np.arange(t + 1)[:, None]
    u2 = np.arange(t + 1)[None, :]
    total = cA[u1] + (c1[u2] - c1[u1]) + (c2[t] - c2[u2])
    total = np.where(u1 <= u2, total, np.iinfo(np.int64).max)
    return int(total.min())


def truncate_before(A: WorkSequence, s: int) -> WorkSequence:
    """Zero every slot n < -s."""
    v = A.values.copy()
    cut = min(max(-s - A.start, 0), len(v))
    v[:cut] = 0
    return WorkSequence(A.start, v)


def burn_in_slots(lam: float, mu: float, variance: float | None = None, factor: float = 10.0) -> int:
    """Transient to discard before treating a queue as stationary.

    ``factor / (mu - lam)`` with a floor of 1000 slots, raised to
    ``factor * variance / (mu - lam)**2`` when given the per-slot variance of
    A - S (the diffusive relaxation time, which dominates near capacity).
    """
    if mu <= lam:
        raise ValueError("burn-in is only defined for a stable queue")
    gap = mu - lam
    n = max(1000.0, factor / gap)
    if variance is not None:
        n = max(n, factor * variance / gap**2)
    return int(math.ceil(n))
