"""Goodness-of-fit, block-law comparison and test reports."""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from scipy import stats

SCHEMA_VERSION = 1
DEFAULT_ALPHA = 1e-3


class AlphabetMismatch(ValueError):
    pass


# ---------------------------------------------------------------- reports


@dataclass
class TestResult:
    name: str
    kind: str  # "null" | "reject" | "exact" | "tolerance"
    statistic: float | None = None
    p_value: float | None = None
    dof: int | None = None
    n: int | None = None
    alpha: float | None = None
    threshold: float | None = None
    passed: bool = False
    detail: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        bits = [f"[{status}] {self.name}"]
        if self.statistic is not None:
            bits.append(f"stat={_fmt(self.statistic)}")
        if self.dof is not None:
            bits.append(f"dof={self.dof}")
        if self.p_value is not None:
            bits.append(f"p={_fmt(self.p_value)}")
        if self.threshold is not None:
            bits.append(f"thr={_fmt(self.threshold)}")
        if self.n is not None:
            bits.append(f"n={self.n}")
        return " ".join(bits)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.6g}"


class TestReport:
    """A battery of tests.  Null-hypothesis tests share a Bonferroni correction."""

    __test__ = False

    def __init__(self, name: str, alpha: float = DEFAULT_ALPHA, metadata: dict | None = None):
        self.name = name
        self.alpha = alpha
        self.tests: list[TestResult] = []
        self.metadata: dict = dict(metadata or {})

    # adding tests -------------------------------------------------------
    def null(self, name, statistic, p_value, dof=None, n=None, **detail) -> TestResult:
        """A test whose null hypothesis is the claim being verified: passes unless rejected."""
        t = TestResult(name, "null", _num(statistic), _num(p_value), _int(dof), _int(n), self.alpha, detail=_clean(detail))
        self.tests.append(t)
        self._rebalance()
        return t

    def reject(self, name, statistic, p_value, dof=None, n=None, alpha=None, **detail) -> TestResult:
        """A negative control: passes only if the null is rejected at ``alpha``."""
        a = self.alpha if alpha is None else alpha
        t = TestResult(name, "reject", _num(statistic), _num(p_value), _int(dof), _int(n), a, a,
                       bool(p_value < a), detail=_clean(detail))
        self.tests.append(t)
        return t

    def exact(self, name, ok: bool, n=None, **detail) -> TestResult:
        t = TestResult(name, "exact", None, None, None, _int(n), passed=bool(ok), detail=_clean(detail))
        self.tests.append(t)
        return t

    def tolerance(self, name, value, target, tol, n=None, relative=False, **detail) -> TestResult:
        err = abs(value - target) / (abs(target) if relative else 1.0)
        t = TestResult(name, "tolerance", _num(value), None, None, _int(n), threshold=_num(tol),
                       passed=bool(err <= tol), detail=_clean({"target": target, "error": err, "relative": relative, **detail}))
        self.tests.append(t)
        return t

    def check(self, name, ok: bool, value=None, n=None, **detail) -> TestResult:
        t = TestResult(name, "tolerance", _num(value) if value is not None else None, None, None, _int(n),
                       passed=bool(ok), detail=_clean(detail))
        self.tests.append(t)
        return t

    def extend(self, other: "TestReport", prefix: str = "") -> "TestReport":
        for t in other.tests:
            t = TestResult(**{**asdict(t), "name": prefix + t.name})
            self.tests.append(t)
        for k, v in other.metadata.items():
            self.metadata.setdefault(k, v)
        self._rebalance()
        return self

    def _rebalance(self) -> None:
        nulls = [t for t in self.tests if t.kind == "null"]
        thr = self.alpha / max(len(nulls), 1)
        for t in nulls:
            t.threshold = thr
            t.passed = bool(t.p_value is not None and t.p_value > thr)

    # reading ----------------------------------------------------------------
    @property
    def passed(self) -> bool:
        return bool(self.tests) and all(t.passed for t in self.tests)

    def __getitem__(self, name: str) -> TestResult:
        for t in self.tests:
            if t.name == name:
                return t
        raise KeyError(name)

    def summary_lines(self) -> list[str]:
        return [t.line() for t in self.tests]

    def to_dict(self, timestamp: bool = True) -> dict:
        d = {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "passed": self.passed,
            "alpha": self.alpha,
            "correction": "bonferroni",
            "tests": [_clean(asdict(t)) for t in self.tests],
            "metadata": _clean(self.metadata),
        }
        if timestamp:
            d["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
        return d

    def to_json(self, timestamp: bool = True) -> str:
        return json.dumps(self.to_dict(timestamp), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "TestReport":
        if d.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {d.get('schema')!r}")
        rep = cls(d["name"], d.get("alpha", DEFAULT_ALPHA), d.get("metadata"))
        rep.tests = [TestResult(**t) for t in d["tests"]]
        return rep

    @staticmethod
    def merge(reports: Sequence["TestReport"], name: str | None = None) -> "TestReport":
        if not reports:
            raise ValueError("nothing to merge")
        out = TestReport(name or reports[0].name, reports[0].alpha)
        for r in reports:
            out.extend(r)
        return out


def config_digest(config: dict) -> str:
    blob = json.dumps(_clean(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _num(x):
    if x is None:
        return None
    return float(x)


def _int(x):
    return None if x is None else int(x)


def _clean(obj: Any):
    """Coerce numpy scalars / arrays and non-finite floats into JSON-friendly values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if hasattr(obj, "to_dict"):
        return _clean(obj.to_dict())
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


# ---------------------------------------------------------------- chi-square


def merge_small_cells(expected: np.ndarray, min_expected: float = 5.0) -> list[np.ndarray]:
    """Group consecutive cells, sweeping from the tail, until each group reaches ``min_expected``.

    Returns index groups in order.  Ordered categories (counts 0, 1, 2, ...)
    therefore get their sparse tail pooled into a single k >= k* bucket.
    """
    expected = np.asarray(expected, dtype=float)
    groups: list[list[int]] = []
    cur: list[int] = []
    acc = 0.0
    for i in range(len(expected) - 1, -1, -1):
        cur.append(i)
        acc += expected[i]
        if acc >= min_expected:
            groups.append(cur)
            cur, acc = [], 0.0
    if cur:
        if groups:
            groups[-1].extend(cur)
        else:
            groups.append(cur)
    return [np.array(sorted(g)) for g in reversed(groups)]


def chi_square_gof(counts, expected_probs, min_expected: float = 5.0, ddof: int = 0) -> tuple[float, float, int]:
    """Pearson statistic, upper-tail p-value and degrees of freedom.

    ``expected_probs`` may sum to less than one; the remainder is treated as
    an extra (observed-empty) tail cell.
    """
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(expected_probs, dtype=float)
    if counts.shape != probs.shape:
        raise ValueError("counts and probabilities must align")
    rest = 1.0 - probs.sum()
    if rest > 1e-15:
        counts = np.append(counts, 0.0)
        probs = np.append(probs, rest)
    n = counts.sum()
    exp = n * probs
    groups = merge_small_cells(exp, min_expected)
    if len(groups) < 2:
        raise ValueError("chi-square test needs at least two cells after merging")
    o = np.array([counts[g].sum() for g in groups])
    e = np.array([exp[g].sum() for g in groups])
    stat = float(((o - e) ** 2 / e).sum())
    dof = len(groups) - 1 - ddof
    p = float(stats.chi2.sf(stat, dof))
    return stat, p, dof


def bergeom_gof(samples: np.ndarray, params) -> tuple[float, float, int]:
    """Chi-square of integer samples against a Bernoulli-geometric pmf."""
    samples = np.asarray(samples).ravel()
    n = samples.size
    kmax = 1
    while n * params.sf(kmax + 1) >= 5.0 and kmax < 10_000:
        kmax += 1
    counts = np.bincount(np.minimum(samples, kmax), minlength=kmax + 1).astype(float)
    probs = np.array([params.pmf(k) for k in range(kmax)] + [params.sf(kmax)])
    return chi_square_gof(counts, probs)


# ---------------------------------------------------------------- block laws


def slot_symbols(seq) -> np.ndarray:
    """Per-slot symbol array of shape (n, d) from a label vector, count matrix, or sequence object."""
    if hasattr(seq, "values") and hasattr(seq, "start"):
        v = np.asarray(seq.values)
        arr = v.T if v.ndim == 2 else v[:, None]
    else:
        arr = np.asarray(seq)
        if arr.ndim == 1:
            arr = arr[:, None]
    return np.ascontiguousarray(arr.astype(np.int64))


def block_rows(symbols: np.ndarray, L: int) -> np.ndarray:
    """Non-overlapping length-L blocks, flattened to rows of length L*d."""
    n = symbols.shape[0] // L
    return symbols[: n * L].reshape(n, L * symbols.shape[1])


def row_codes(rows: np.ndarray) -> np.ndarray:
    """Dense integer codes (0..k-1) identifying the distinct rows, consistent across the array."""
    rows = np.asarray(rows, dtype=np.int64)
    if rows.ndim == 1:
        rows = rows[:, None]
    if rows.size == 0:
        return np.zeros(rows.shape[0], dtype=np.int64)
    lo = rows.min(axis=0)
    span = rows.max(axis=0) - lo + 1
    if np.prod(span.astype(float)) < 2**62:
        # mixed-radix packing keeps the lexicographic order of the rows
        radix = np.concatenate([np.cumprod(span[::-1])[::-1][1:], [1]])
        packed = (rows - lo) @ radix
        _, inv = np.unique(packed, return_inverse=True)
    else:
        _, inv = np.unique(rows, axis=0, return_inverse=True)
    return inv.ravel()


def two_sample_chi2(rows_x: np.ndarray, rows_y: np.ndarray, min_expected: float = 5.0) -> tuple[float, float, int]:
    """Homogeneity chi-square between the empirical laws of two samples of discrete rows."""
    inv = row_codes(np.vstack([rows_x, rows_y]))
    k = inv.max() + 1 if inv.size else 0
    cx = np.bincount(inv[: len(rows_x)], minlength=k).astype(float)
    cy = np.bincount(inv[len(rows_x) :], minlength=k).astype(float)
    nx, ny = cx.sum(), cy.sum()
    if nx == 0 or ny == 0:
        raise ValueError("both samples must be nonempty")
    tot = cx + cy
    frac = min(nx, ny) / (nx + ny)
    keep = tot * frac >= min_expected
    if (~keep).any():
        lump_x, lump_y = cx[~keep].sum(), cy[~keep].sum()
        cx, cy = cx[keep], cy[keep]
        if (lump_x + lump_y) * frac >= min_expected:
            cx, cy = np.append(cx, lump_x), np.append(cy, lump_y)
        elif cx.size:
            j = np.argmin(cx + cy)
            cx[j] += lump_x
            cy[j] += lump_y
        else:
            cx, cy = np.array([lump_x]), np.array([lump_y])
    if cx.size < 2:
        return 0.0, 1.0, 0
    tot = cx + cy
    n = nx + ny
    ex, ey = tot * nx / n, tot * ny / n
    stat = float(((cx - ex) ** 2 / ex).sum() + ((cy - ey) ** 2 / ey).sum())
    dof = cx.size - 1
    return stat, float(stats.chi2.sf(stat, dof)), dof


def block_law_compare(X, Y, L: int = 3, alphabet: Iterable[int] | None = None) -> tuple[float, float, int]:
    """Two-sample chi-square between the laws of non-overlapping length-L blocks of X and Y."""
    sx, sy = slot_symbols(X), slot_symbols(Y)
    if sx.shape[1] != sy.shape[1]:
        raise AlphabetMismatch(f"slot symbols have widths {sx.shape[1]} and {sy.shape[1]}")
    if alphabet is not None:
        allowed = np.asarray(sorted(set(alphabet)))
        for s, nm in ((sx, "X"), (sy, "Y")):
            if not np.isin(s, allowed).all():
                raise AlphabetMismatch(f"{nm} has symbols outside the declared alphabet")
    if sx.shape[0] < L or sy.shape[0] < L:
        raise ValueError("sequences must be longer than the block length")
    return two_sample_chi2(block_rows(sx, L), block_rows(sy, L))


def cap_symbols(symbols: np.ndarray, cap: int) -> np.ndarray:
    """Clip per-slot counts at ``cap`` so that batch processes keep a small alphabet."""
    return np.minimum(symbols, cap)


# ---------------------------------------------------------------- KS


def ks_test(samples, cdf: Callable | Any) -> tuple[float, float]:
    """One-sample Kolmogorov-Smirnov against ``cdf`` (callable or frozen scipy distribution)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("KS test needs samples")
    if x.size < 10:
        raise ValueError("KS test needs at least 10 samples")
    f = cdf.cdf if hasattr(cdf, "cdf") else cdf
    res = stats.kstest(x, f)
    return float(res.statistic), float(res.pvalue)


def ks_two_sample(x, y) -> tuple[float, float]:
    res = stats.ks_2samp(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return float(res.statistic), float(res.pvalue)


# ---------------------------------------------------------------- estimators


def estimate_intensity(values, batches: int = 50) -> tuple[float, float]:
    """Mean per slot with a batch-means standard error (robust to serial correlation)."""
    v = np.asarray(values, dtype=float).ravel()
    n = v.size
    mean = float(v.mean())
    b = min(batches, n)
    if b < 2:
        return mean, math.nan
    size = n // b
    means = v[: size * b].reshape(b, size).mean(axis=1)
    return mean, float(means.std(ddof=1) / math.sqrt(b))


def proportion_ci(successes: int, trials: int, z: float = 1.96) -> tuple[float, float, float]:
    p = successes / trials if trials else math.nan
    half = z * math.sqrt(max(p * (1 - p), 0.0) / trials) if trials else math.nan
    return p, p - half, p + half


# ---------------------------------------------------------------- reversibility


def symmetry_test(codes: np.ndarray, partner: np.ndarray, min_total: float = 10.0) -> tuple[float, float, int]:
    """Bowker-type test that a law on cells is invariant under an involution of the cells.

    ``codes`` are the observed cells and ``partner[i]`` is the image of cell i.
    Each unordered pair {i, partner(i)} with i != partner(i) contributes
    (n_i - n_j)^2 / (n_i + n_j), one degree of freedom; pairs with fewer than
    ``min_total`` observations are pooled into a single term.
    """
    codes = np.asarray(codes, dtype=np.int64)
    partner = np.asarray(partner, dtype=np.int64)
    if not np.array_equal(partner[partner], np.arange(partner.size)):
        raise ValueError("partner must be an involution")
    counts = np.bincount(codes, minlength=partner.size).astype(float)
    i = np.flatnonzero(np.arange(partner.size) < partner)
    ni, nj = counts[i], counts[partner[i]]
    tot = ni + nj
    big = tot >= min_total
    diff = list(ni[big] - nj[big])
    den = list(tot[big])
    if (~big).any() and tot[~big].sum() >= min_total:
        diff.append(ni[~big].sum() - nj[~big].sum())
        den.append(tot[~big].sum())
    if not den:
        return 0.0, 1.0, 0
    d, t = np.asarray(diff), np.asarray(den)
    stat = float((d * d / t).sum())
    dof = d.size
    return stat, float(stats.chi2.sf(stat, dof)), dof


def reversibility_test(A, D, L: int = 3, alpha: float = DEFAULT_ALPHA, cap: int | None = None) -> TestReport:
    """Compare the block law of (A(n), D(n)) with that of the reversed, swapped pair (D(-n), A(-n)).

    On a window cut to whole blocks, the blocks of (D*, A*) are exactly the
    blocks of (A, D) read backwards with the two components swapped, so the
    two samples are not independent.  The comparison is therefore a symmetry
    test of the block law under that involution.
    """
    a, d = slot_symbols(A), slot_symbols(D)
    if a.shape != d.shape:
        raise AlphabetMismatch("A and D must have the same shape")
    if cap is not None:
        a, d = cap_symbols(a, cap), cap_symbols(d, cap)
    w = a.shape[1]
    rows = block_rows(np.hstack([a, d]), L)
    if rows.shape[0] == 0:
        raise ValueError("sequences must be longer than the block length")
    mirror = rows.reshape(-1, L, 2, w)[:, ::-1, ::-1, :].reshape(rows.shape)
    codes = row_codes(np.vstack([rows, mirror]))
    fwd, back = codes[: len(rows)], codes[len(rows) :]
    partner = np.arange(int(codes.max()) + 1)
    partner[fwd] = back
    partner[back] = fwd
    stat, p, dof = symmetry_test(fwd, partner)
    rep = TestReport("reversibility", alpha)
    rep.null(f"(A,D) vs (D*,A*) blocks L={L}", stat, p, dof, n=len(rows))
    return rep


def batched_block_compare(
    X,
    Y,
    L: int = 3,
    batches: int = 200,
    paired: bool = False,
    max_cells: int | None = None,
) -> tuple[float, float, tuple[int, int]]:
    """Block-law comparison that tolerates serial correlation.

    Each sequence is cut into ``batches`` contiguous batches; the per-batch
    block frequencies are treated as (approximately) independent vectors and
    compared with Hotelling's T^2.  ``paired=True`` differences X and Y batch by
    batch, for sequences produced by the same run (e.g. arrivals and
    departures of one queue).  Returns the F statistic, its p-value and the
    F degrees of freedom.
    """
    sx, sy = slot_symbols(X), slot_symbols(Y)
    if sx.shape[1] != sy.shape[1]:
        raise AlphabetMismatch(f"slot symbols have widths {sx.shape[1]} and {sy.shape[1]}")
    if paired and sx.shape != sy.shape:
        raise ValueError("paired comparison needs equal-length sequences")
    rx, ry = block_rows(sx, L), block_rows(sy, L)
    per = min(len(rx), len(ry)) // batches
    if per < 1:
        raise ValueError("too few blocks for the requested number of batches")
    rx, ry = rx[: per * batches], ry[: per * batches]
    inv = row_codes(np.vstack([rx, ry]))
    k_all = int(inv.max()) + 1
    cx, cy = inv[: len(rx)], inv[len(rx) :]
    kmax = max_cells if max_cells is not None else max(1, min(60, batches // 5))
    order = np.argsort(-np.bincount(inv, minlength=k_all), kind="stable")
    cells = order[: min(k_all - 1, kmax)]
    if cells.size == 0:
        return 0.0, 1.0, (0, 0)
    lookup = np.full(k_all, -1)
    lookup[cells] = np.arange(cells.size)

    def freqs(codes):
        idx = lookup[codes].reshape(batches, per)
        flat = (np.arange(batches)[:, None] * cells.size + idx)[idx >= 0]
        return np.bincount(flat, minlength=batches * cells.size).reshape(batches, cells.size) / per

    fx, fy = freqs(cx), freqs(cy)
    if paired:
        d = fx - fy
        mean = d.mean(axis=0)
        cov = np.cov(d, rowvar=False).reshape(cells.size, cells.size)
        scale, n_eff = batches, batches
    else:
        mean = fx.mean(axis=0) - fy.mean(axis=0)
        cov = ((batches - 1) * np.cov(fx, rowvar=False) + (batches - 1) * np.cov(fy, rowvar=False)).reshape(
            cells.size, cells.size
        ) / (2 * batches - 2)
        scale, n_eff = batches / 2.0, 2 * batches - 1
    if not np.any(mean) and not np.any(cov):
        return 0.0, 1.0, (0, 0)
    w, V = np.linalg.eigh(cov)
    keep = w > max(w.max(), 0.0) * 1e-10
    k = int(keep.sum())
    if k == 0:
        return (math.inf, 0.0, (0, 0)) if np.any(mean) else (0.0, 1.0, (0, 0))
    proj = V[:, keep].T @ mean
    t2 = float(scale * np.sum(proj**2 / w[keep]))
    dof2 = n_eff - k
    if dof2 < 1:
        raise ValueError("more cells than batches; lower max_cells or raise batches")
    fstat = t2 * dof2 / (k * (n_eff - 1))
    return fstat, float(stats.f.sf(fstat, k, dof2)), (k, dof2)
