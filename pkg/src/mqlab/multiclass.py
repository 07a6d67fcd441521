"""Multi-class priority queue as a coupling of single-class queues.

Class 1 has the highest priority.  For every r the customers of classes 1..r
together form an ordinary queue fed by the cumulative arrivals A^{<=r} and the
shared service S; per-class quantities are differences of these.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from mqlab.queue_kernel import (
    EMPTY,
    SATURATED,
    InitialCondition,
    QueuePath,
    WindowMismatch,
    WorkSequence,
    lindley,
    run_queue,
)


@dataclass(frozen=True, eq=False)
class MulticlassWorkSequence:
    """``values[r-1]`` holds class r; all classes share the window."""

    start: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.int64)
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError("need an (m, n) array with m >= 1")
        if v.size and v.min() < 0:
            raise ValueError("work amounts must be nonnegative")
        object.__setattr__(self, "start", int(self.start))
        object.__setattr__(self, "values", v)

    @classmethod
    def from_classes(cls, seqs: Sequence[WorkSequence]) -> "MulticlassWorkSequence":
        if not seqs:
            raise ValueError("need at least one class")
        for s in seqs[1:]:
            if s.start != seqs[0].start or len(s) != len(seqs[0]):
                raise WindowMismatch("classes must share a window")
        return cls(seqs[0].start, np.stack([s.values for s in seqs]))

    @classmethod
    def from_labels(cls, labels: np.ndarray, m: int, start: int = 0) -> "MulticlassWorkSequence":
        """At most one customer per slot; label 0 is an empty slot."""
        labels = np.asarray(labels)
        if labels.min(initial=0) < 0 or labels.max(initial=0) > m:
            raise ValueError(f"labels must lie in 0..{m}")
        v = (labels[None, :] == np.arange(1, m + 1)[:, None]).astype(np.int64)
        return cls(start, v)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def stop(self) -> int:
        return self.start + self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, MulticlassWorkSequence):
            return NotImplemented
        return self.start == other.start and np.array_equal(self.values, other.values)

    def per_class(self, r: int) -> WorkSequence:
        self._check_class(r)
        return WorkSequence(self.start, self.values[r - 1])

    def cumulative(self, r: int) -> WorkSequence:
        """A^{<=r}; r = 0 gives the zero sequence."""
        if r == 0:
            return WorkSequence.zeros(self.start, len(self))
        self._check_class(r)
        return WorkSequence(self.start, self.values[:r].sum(axis=0))

    def cumulative_array(self) -> np.ndarray:
        return np.cumsum(self.values, axis=0)

    def total(self) -> WorkSequence:
        return self.cumulative(self.m)

    def slice(self, lo: int, hi: int) -> "MulticlassWorkSequence":
        lo, hi = max(lo, self.start), min(hi, self.stop)
        return MulticlassWorkSequence(lo, self.values[:, lo - self.start : hi - self.start])

    def labels(self) -> np.ndarray:
        """Per-slot class label (0 = empty slot) for processes with at most one customer per slot."""
        tot = self.values.sum(axis=0)
        if tot.size and tot.max() > 1:
            raise ValueError("labels need at most one customer per slot")
        return (self.values * np.arange(1, self.m + 1)[:, None]).sum(axis=0)

    def merge(self, r: int) -> "MulticlassWorkSequence":
        """Fold class r+1 into class r."""
        self._check_class(r)
        self._check_class(r + 1)
        v = np.delete(self.values, r, axis=0)
        v[r - 1] += self.values[r]
        return MulticlassWorkSequence(self.start, v)

    def write_csv(self, path, unused: WorkSequence | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            head = ["slot"] + [f"class_{r}" for r in range(1, self.m + 1)]
            w.writerow(head + (["unused"] if unused is not None else []))
            for i in range(len(self)):
                row = [self.start + i] + self.values[:, i].tolist()
                if unused is not None:
                    row.append(int(unused.values[i]))
                w.writerow(row)

    @classmethod
    def read_csv(cls, path) -> tuple["MulticlassWorkSequence", WorkSequence | None]:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            head = next(reader)
            rows = [list(map(int, r)) for r in reader]
        classes = [h for h in head if h.startswith("class_")]
        arr = np.asarray(rows, dtype=np.int64).reshape(len(rows), len(head))
        start = int(arr[0, 0]) if len(rows) else 0
        seq = cls(start, arr[:, 1 : 1 + len(classes)].T)
        unused = WorkSequence(start, arr[:, -1]) if head[-1] == "unused" else None
        return seq, unused

    def _check_class(self, r: int) -> None:
        if not 1 <= r <= self.m:
            raise IndexError(f"class {r} outside 1..{self.m}")


@dataclass(frozen=True, eq=False)
class MulticlassQueuePath:
    arrivals: MulticlassWorkSequence
    S: WorkSequence
    cumulative_paths: list[QueuePath]
    departures: MulticlassWorkSequence
    U: WorkSequence

    @property
    def m(self) -> int:
        return self.arrivals.m

    def D_le(self, r: int) -> WorkSequence:
        return self.departures.cumulative(r)

    def D_eq(self, r: int) -> WorkSequence:
        return self.departures.per_class(r)

    def X_le(self, r: int) -> np.ndarray | None:
        """Content of classes 1..r at each slot start; None when infinite."""
        return self.cumulative_paths[r - 1].X

    def X_eq(self, r: int) -> np.ndarray | None:
        hi = self.X_le(r)
        if hi is None:
            return None
        if r == 1:
            return hi
        return hi - self.X_le(r - 1)


def cumulative_init(per_class: Sequence[int], saturated_top: bool = False) -> list[InitialCondition]:
    """Initial conditions for X^{<=r} from per-class contents."""
    cum = np.cumsum(np.asarray(per_class, dtype=np.int64)).tolist()
    inits = [InitialCondition.finite(x) for x in cum]
    if saturated_top:
        inits[-1] = SATURATED
    return inits


def _check_inits(inits: Sequence[InitialCondition], m: int) -> None:
    if len(inits) != m:
        raise ValueError(f"expected {m} cumulative initial conditions, got {len(inits)}")
    for r, init in enumerate(inits[:-1], start=1):
        if init.saturated:
            raise ValueError(f"only the full process may start saturated (class {r} given)")
    finite = [i.x0 for i in inits if not i.saturated]
    if any(b < a for a, b in zip(finite, finite[1:])):
        raise ValueError("cumulative initial contents must be nondecreasing in r")


def run_multiclass(
    A: MulticlassWorkSequence,
    S: WorkSequence,
    init: Sequence[InitialCondition] | None = None,
) -> MulticlassQueuePath:
    """Run the priority queue through its cumulative single-class queues."""
    if A.start != S.start or len(A) != len(S):
        raise WindowMismatch("arrivals and service must share a window")
    m = A.m
    inits = list(init) if init is not None else [EMPTY] * m
    _check_inits(inits, m)
    cum = A.cumulative_array()
    paths = [run_queue(WorkSequence(A.start, cum[r]), S, inits[r]) for r in range(m)]
    D_le = np.stack([p.D.values for p in paths])
    D_eq = np.diff(D_le, axis=0, prepend=0)
    if D_eq.size and D_eq.min() < 0:
        raise AssertionError("negative per-class departures; cumulative queues are inconsistent")
    deps = MulticlassWorkSequence(A.start, D_eq)
    return MulticlassQueuePath(A, S, paths, deps, paths[-1].U)


def multiclass_departures(cum_arrivals: np.ndarray, S: np.ndarray, saturated_top: bool = False) -> np.ndarray:
    """Per-class departures for raw arrays; batch axes lead, classes are axis -2.

    ``cum_arrivals`` is A^{<=r} with shape (..., m, n) and ``S`` has shape (..., n).
    All cumulative queues start empty except, optionally, the full one.
    """
    X, D = lindley(cum_arrivals, S[..., None, :])
    if saturated_top:
        D[..., -1, :] = S
    return np.diff(D, axis=-2, prepend=0)


def restrict_classes(A: MulticlassWorkSequence, r: int) -> MulticlassWorkSequence:
    if not 1 <= r <= A.m:
        raise IndexError(f"class {r} outside 1..{A.m}")
    return MulticlassWorkSequence(A.start, A.values[:r].copy())


def relabel_unused_as_class(path: MulticlassQueuePath | QueuePath, new_class: int) -> MulticlassWorkSequence:
    """Departures with the unused service appended as the lowest-priority class."""
    if isinstance(path, QueuePath):
        m = 1
        D = path.D.values[None, :]
        start = path.D.start
    else:
        m = path.m
        D = path.departures.values
        start = path.departures.start
    if new_class != m + 1:
        raise ValueError(f"unused service becomes class {m + 1}, not {new_class}")
    return MulticlassWorkSequence(start, np.vstack([D, path.U.values[None, :]]))


def priority_queue_slotwise(A: np.ndarray, S: np.ndarray, x0: Sequence[int] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Reference priority queue run one slot at a time with explicit per-class backlogs.

    ``A`` has shape (m, n).  Returns per-class departures (m, n) and unused service (n,).
    """
    A = np.asarray(A, dtype=np.int64)
    m, n = A.shape
    backlog = [0] * m if x0 is None else [int(v) for v in x0]
    D = np.zeros((m, n), dtype=np.int64)
    U = np.zeros(n, dtype=np.int64)
    for t in range(n):
        for r in range(m):
            backlog[r] += int(A[r, t])
        cap = int(S[t])
        for r in range(m):
            take = min(cap, backlog[r])
            D[r, t] = take
            backlog[r] -= take
            cap -= take
        U[t] = cap
    return D, U
