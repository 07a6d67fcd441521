"""Null rejection rates of the stathub tests.

Each trial draws data for which the tested hypothesis is true and records
whether the test rejects at ``alpha``.  Queue-based trials start the queue
from its stationary content so no burn-in is needed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from mqlab import stathub
from mqlab.procgen import BerGeomParams, as_generator, sample_bergeom
from mqlab.queue_kernel import lindley


@dataclass(frozen=True)
class CalibrationResult:
    test: str
    trials: int
    rejections: int
    alpha: float

    @property
    def rate(self) -> float:
        return self.rejections / self.trials

    def to_dict(self) -> dict:
        return {"test": self.test, "trials": self.trials, "rejections": self.rejections,
                "alpha": self.alpha, "rate": self.rate}


def stationary_bernoulli_queue(lam: float, mu: float, n: int, gen) -> tuple[np.ndarray, np.ndarray]:
    """(A, D) of a Bernoulli(lam)/Bernoulli(mu) slot queue in its stationary regime."""
    rho = lam * (1 - mu) / (mu * (1 - lam))
    A = (gen.random(n) < lam).astype(np.int64)
    S = (gen.random(n) < mu).astype(np.int64)
    x0 = int(gen.geometric(1 - rho)) - 1
    _, D = lindley(A, S, x0)
    return A, D


def sticky_chain(n: int, flip: float, gen) -> np.ndarray:
    """Stationary symmetric two-state chain that switches with probability ``flip`` per slot."""
    return (gen.integers(0, 2) + np.cumsum(gen.random(n) < flip)) % 2


def _p_chi_square(gen) -> float:
    x = BerGeomParams(0.5, 0.5)
    return stathub.bergeom_gof(sample_bergeom(x, 10_000, gen), x)[1]


def _p_block_law(gen) -> float:
    x = BerGeomParams(0.2, 0.4)
    a = np.minimum(sample_bergeom(x, 30_000, gen), 3)
    b = np.minimum(sample_bergeom(x, 30_000, gen), 3)
    return stathub.block_law_compare(a, b, 3)[1]


def _p_ks(gen) -> float:
    return stathub.ks_test(gen.exponential(1.0, 1000), stats.expon())[1]


def _p_ks_two(gen) -> float:
    return stathub.ks_two_sample(gen.normal(size=1000), gen.normal(size=1500))[1]


def _p_reversibility(gen) -> float:
    A, D = stationary_bernoulli_queue(0.3, 0.6, 30_000, gen)
    return stathub.reversibility_test(A, D, 3).tests[0].p_value


def _p_batched(gen) -> float:
    x, y = sticky_chain(300_000, 0.2, gen), sticky_chain(300_000, 0.2, gen)
    return stathub.batched_block_compare(x, y, 3, batches=200)[1]


def _p_batched_paired(gen) -> float:
    A, D = stationary_bernoulli_queue(0.3, 0.6, 300_000, gen)
    return stathub.batched_block_compare(A, D, 3, batches=200, paired=True)[1]


NULL_TRIALS: dict[str, Callable] = {
    "chi_square_gof": _p_chi_square,
    "block_law_compare": _p_block_law,
    "ks_test": _p_ks,
    "ks_two_sample": _p_ks_two,
    "reversibility_test": _p_reversibility,
    "batched_block_compare": _p_batched,
    "batched_block_compare (paired)": _p_batched_paired,
}


def null_rejection_rate(test: str, trials: int, rng, alpha: float = stathub.DEFAULT_ALPHA) -> CalibrationResult:
    gen = as_generator(rng)
    draw = NULL_TRIALS[test]
    rejections = sum(draw(gen) < alpha for _ in range(trials))
    return CalibrationResult(test, trials, int(rejections), alpha)


def calibration_suite(trials: int, rng, alpha: float = stathub.DEFAULT_ALPHA,
                      max_rate: float = 2e-3) -> stathub.TestReport:
    gen = as_generator(rng)
    rep = stathub.TestReport("null calibration", alpha, metadata={"trials": trials, "max_rate": max_rate})
    for name in NULL_TRIALS:
        res = null_rejection_rate(name, trials, gen, alpha)
        rep.check(f"{name}: null rejection rate <= {max_rate:g}", res.rate <= max_rate, value=res.rate,
                  n=trials, rejections=res.rejections)
    return rep
