"""Exact pathwise batteries over random integer instances.

Each battery draws its instances from one generator and returns a TestReport
whose entries count counterexamples; every entry passes only at zero.
"""

from __future__ import annotations

import numpy as np

from mqlab.interchange import (
    coupled_tandems_agree,
    exact_output_laws,
    law_distance,
    make_coupled_pair_bernoulli,
    predicted_stabilization,
    replacement_counterexamples,
    replacement_invariance_check,
    second_replacement_check,
    truncation_profile,
)
from mqlab.multiclass import (
    MulticlassWorkSequence,
    cumulative_init,
    priority_queue_slotwise,
    restrict_classes,
    run_multiclass,
)
from mqlab.procgen import as_generator
from mqlab.queue_kernel import WorkSequence, lindley, tandem, variational_departures
from mqlab.stathub import TestReport


def tandem_minplus_battery(instances: int, rng, max_window: int = 50, max_value: int = 6,
                           probes: int = 3) -> TestReport:
    """Triple-sum formula vs simulated two-queue tandem, arrivals zero before time 0."""
    gen = as_generator(rng)
    bad, first = 0, None
    for i in range(instances):
        n = int(gen.integers(1, max_window + 1))
        A, S1, S2 = (WorkSequence(0, gen.integers(0, max_value + 1, n)) for _ in range(3))
        cum = np.concatenate([[0], np.cumsum(tandem(A, [S1, S2])[-1].D.values)])
        ts = {n} | set(gen.integers(1, n + 1, probes - 1).tolist())
        for t in ts:
            if variational_departures(A, S1, S2, t) != cum[t]:
                bad += 1
                first = first or {"instance": i, "t": t, "A": A.values.tolist()}
    rep = TestReport("tandem min-plus formula")
    rep.exact("min-plus departures equal simulated tandem", bad == 0, n=instances, counterexamples=bad, first=first)
    return rep


def replacement_battery(instances: int, rng, max_window: int = 48, max_value: int = 6,
                        binary_instances: int | None = None) -> TestReport:
    """Unused-service removal leaves every min-plus pair unchanged, forward and in reverse time."""
    gen = as_generator(rng)
    rep = TestReport("replacement invariance")
    fwd = rev = 0
    witness = None
    # batch by window length so each batch is one array computation
    lengths = gen.integers(1, max_window + 1, instances)
    for n in np.unique(lengths):
        k = int(np.count_nonzero(lengths == n))
        S1 = gen.integers(0, max_value + 1, (k, n))
        S2 = gen.integers(0, max_value + 1, (k, n))
        bad = replacement_counterexamples(S1, S2)
        fwd += bad.size
        if bad.size and witness is None:
            witness = replacement_invariance_check(WorkSequence(0, S1[bad[0]]), WorkSequence(0, S2[bad[0]])).to_json()
        X, D = lindley(S1, S2)
        U = S2 - D
        rbad = replacement_counterexamples(D[:, ::-1], (S1 + U)[:, ::-1])
        rev += rbad.size
    rep.exact("forward side: zero counterexamples", fwd == 0, n=instances, counterexamples=int(fwd), witness=witness)
    rep.exact("reverse-time side: zero counterexamples", rev == 0, n=instances, counterexamples=int(rev))

    nb = instances if binary_instances is None else binary_instances
    second = 0
    for _ in range(nb):
        n = int(gen.integers(1, max_window + 1))
        pair = make_coupled_pair_bernoulli(WorkSequence(0, gen.integers(0, 2, n)), WorkSequence(0, gen.integers(0, 2, n)))
        second += not second_replacement_check(pair)
    rep.exact("binary services: replacing S1 by S1 + U against D(S1, S2) changes nothing", second == 0,
              n=nb, counterexamples=second)
    return rep


def truncation_battery(instances: int, rng, probes: int = 5, half_window: tuple[int, int] = (20, 60),
                       max_value: int = 3) -> TestReport:
    """Tandem output at fixed slots is nondecreasing in the truncation depth and freezes where predicted."""
    gen = as_generator(rng)
    mono = freeze = total = 0
    for _ in range(instances):
        W = int(gen.integers(*half_window))
        A, S1, S2 = (WorkSequence(-W, gen.integers(0, max_value + 1, 2 * W)) for _ in range(3))
        full = tandem(A, [S1, S2])[-1].D
        for n in gen.integers(-W // 2, W, probes).tolist():
            prof = truncation_profile(A, S1, S2, n)
            depths = np.arange(-n, W + 1)
            s_star = predicted_stabilization(A, S1, S2, n)
            mono += not np.all(np.diff(prof) >= 0)
            freeze += not (prof[-1] == full[n] and np.all(prof[depths >= s_star] == full[n]))
            total += 1
    rep = TestReport("truncation stabilization")
    rep.exact("output nondecreasing in truncation depth", mono == 0, n=total, counterexamples=mono)
    rep.exact("output equals the untruncated value from the predicted depth on", freeze == 0, n=total,
              counterexamples=freeze)
    return rep


def coupling_battery(pairs: int, rng, arrivals_per_pair: int = 10, max_window: int = 48,
                     max_arrival: int = 3) -> TestReport:
    """Bernoulli transfer coupling: tandem output unchanged, service conserved, values stay binary."""
    gen = as_generator(rng)
    bad = cons = binary = 0
    for _ in range(pairs):
        n = int(gen.integers(1, max_window + 1))
        q1, q2 = sorted(gen.uniform(0.05, 0.95, 2))
        S1 = WorkSequence(0, (gen.random(n) < q1).astype(np.int64))
        S2 = WorkSequence(0, (gen.random(n) < q2).astype(np.int64))
        pair = make_coupled_pair_bernoulli(S1, S2)
        cons += not np.array_equal((pair.S1t + pair.S2t).values, (S1 + S2).values)
        binary += bool(pair.S1t.values.max(initial=0) > 1)
        for _ in range(arrivals_per_pair):
            bad += not coupled_tandems_agree(pair, WorkSequence(0, gen.integers(0, max_arrival + 1, n)))
    rep = TestReport("Bernoulli coupling")
    rep.exact("tandem departures identical slot by slot", bad == 0, n=pairs * arrivals_per_pair, counterexamples=bad)
    rep.exact("transfer conserves total service", cons == 0, n=pairs, counterexamples=cons)
    rep.exact("coupled services stay 0/1", binary == 0, n=pairs, counterexamples=binary)
    return rep


def multiclass_battery(instances: int, rng, max_classes: int = 4, max_window: int = 30,
                       max_arrival: int = 3, max_service: int = 6) -> TestReport:
    """Cumulative-queue priority queue vs explicit per-class backlogs, and restriction commutation."""
    gen = as_generator(rng)
    ident = restr = 0
    for _ in range(instances):
        m = int(gen.integers(1, max_classes + 1))
        n = int(gen.integers(1, max_window + 1))
        A = MulticlassWorkSequence(0, gen.integers(0, max_arrival + 1, (m, n)))
        S = WorkSequence(0, gen.integers(0, max_service + 1, n))
        x0 = gen.integers(0, 3, m) * (gen.random(m) < 0.5)
        path = run_multiclass(A, S, cumulative_init(x0))
        D, U = priority_queue_slotwise(A.values, S.values, x0)
        ident += not (np.array_equal(path.departures.values, D) and np.array_equal(path.U.values, U))
        for r in range(1, m):
            sub = run_multiclass(restrict_classes(A, r), S, cumulative_init(x0[:r]))
            restr += not np.array_equal(sub.departures.values, path.departures.values[:r])
    rep = TestReport("multiclass coupling")
    rep.exact("cumulative queues reproduce the slot-by-slot priority queue", ident == 0, n=instances,
              counterexamples=ident)
    rep.exact("restricting classes commutes with running the queue", restr == 0, n=instances, counterexamples=restr)
    return rep


def exact_order_battery(A, q1: float = 0.4, q2: float = 0.7, tol: float = 1e-12) -> TestReport:
    """Exhaustive service enumeration: both tandem orders give the same output law."""
    la, lb = exact_output_laws(A, q1, q2)
    d = law_distance(la, lb)
    rep = TestReport("exact interchangeability")
    rep.tolerance("largest probability difference between orders", d, 0.0, tol, n=len(la))
    rep.tolerance("total mass", sum(la.values()), 1.0, tol)
    return rep


def oracle_suite(instances: int, rng) -> TestReport:
    gen = as_generator(rng)
    rep = TestReport("oracle suite", metadata={"instances": instances})
    rep.extend(tandem_minplus_battery(instances, gen), "tandem: ")
    rep.extend(replacement_battery(instances, gen), "replacement: ")
    rep.extend(truncation_battery(max(1, instances // 10), gen), "truncation: ")
    rep.extend(coupling_battery(max(1, instances // 10), gen), "coupling: ")
    rep.extend(multiclass_battery(instances, gen), "multiclass: ")
    rep.extend(exact_order_battery(WorkSequence.of([2, 0, 1, 1])), "exact orders: ")
    return rep
