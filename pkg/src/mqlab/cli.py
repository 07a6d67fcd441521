"""Command-line experiment runner.

    mqlab <experiment> [--config FILE] [--seed N] [--out DIR] [--threads K] [--replications R] [flags]

Parameters resolve as: experiment defaults, then the JSON config file, then
flags.  Each run writes ``<out>/<experiment>/<seed>/report.json`` (plus CSV
traces with ``--trace``), prints one line per test, and exits 0 if every test
passed, 1 if any failed and 2 on an invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from mqlab import continuum, fixed_points, interchange, oracles, particle_bridge as particles
from mqlab.procgen import FamilySpec, ParameterError, RngStream, solve_params
from mqlab.queue_kernel import WorkSequence
from mqlab.stathub import TestReport, config_digest


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    replications: int = 1

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "seed": self.seed, "replications": self.replications,
                "params": dict(sorted(self.params.items()))}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(d["experiment"], dict(d.get("params", {})), int(d.get("seed", 0)), int(d.get("replications", 1)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


def family_from(params: dict) -> FamilySpec:
    if params.get("c") is not None:
        return FamilySpec.interior(float(params["c"]))
    kind = params.get("family", "bernoulli")
    if kind == "bernoulli":
        return FamilySpec.bernoulli()
    if kind == "geometric":
        return FamilySpec.geometric()
    raise ConfigError(f"family {kind!r} needs --c (interior families are named by their c value)")


def _floats(v) -> list[float]:
    if isinstance(v, str):
        return [float(x) for x in v.split(",") if x.strip()]
    if isinstance(v, (int, float)):
        return [float(v)]
    return [float(x) for x in v]


def _ints(v) -> list[int]:
    if isinstance(v, str):
        return [int(x) for x in v.split(",") if x.strip()]
    if isinstance(v, int):
        return [v]
    return [int(x) for x in v]


# ---------------------------------------------------------------- experiments


@dataclass
class Experiment:
    name: str
    defaults: dict
    validate: Callable[[dict], None]
    run: Callable[[dict, RngStream], TestReport]
    trace: Callable[[dict, RngStream, Path], None] | None = None


def _need(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _v_burke(p):
    fam = family_from(p)
    _need(0 < p["lambda"] < p["mu"], "need 0 < lambda < mu")
    solve_params(p["lambda"], fam)
    solve_params(p["mu"], fam)


def _r_burke(p, rng):
    fam = family_from(p)
    return fixed_points.burke_check(solve_params(p["lambda"], fam), solve_params(p["mu"], fam),
                                    int(p["slots"]), rng, int(p["L"]))


def _spec(p) -> fixed_points.FixedPointSpec:
    return fixed_points.FixedPointSpec(family_from(p), tuple(_floats(p["lambdas"])))


def _v_fixed(p):
    spec = _spec(p)
    _need(p["mu"] >= spec.total, "server intensity mu must be at least the total load")
    for k in range(1, spec.m + 1):
        spec.stage_params(k)
    solve_params(p["mu"], spec.family)


def _r_fixed(p, rng):
    spec = _spec(p)
    server = solve_params(p["mu"], spec.family)
    n, L = int(p["slots"]), int(p["L"])
    rep = fixed_points.verify_fixed_point(spec, server, n, rng.child(0), L)
    if spec.m > 1 and p.get("claims", True):
        sat = spec.stage_params(spec.m)
        rep.extend(fixed_points.claims_experiment(spec, server, sat, n, rng.child(1), L), "claims: ")
    return rep


def _v_simulate(p):
    _v_fixed(p)
    _need(int(p["slots"]) > 0, "slots must be positive")


def _r_simulate(p, rng):
    spec = _spec(p)
    server = solve_params(p["mu"], spec.family)
    sample = fixed_points.construct_fixed_point(spec, int(p["slots"]), rng)
    from mqlab import stathub
    rep = TestReport("simulate", metadata={"burn_in": sample.burn_in})
    for r in range(1, spec.m + 1):
        est, se = stathub.estimate_intensity(sample.arrivals.per_class(r).values)
        rep.tolerance(f"class {r} arrival intensity", est, spec.lambdas[r - 1], 6 * se, n=int(p["slots"]))
    rep.metadata["server"] = {"p": server.p, "alpha": server.alpha}
    return rep


def _t_simulate(p, rng, out: Path):
    from mqlab.multiclass import run_multiclass
    from mqlab.procgen import sample_bergeom

    spec = _spec(p)
    server = solve_params(p["mu"], spec.family)
    F = fixed_points.construct_fixed_point(spec, int(p["slots"]), rng.child(99)).arrivals
    gen = rng.child(98).generator()
    path = run_multiclass(F, WorkSequence(F.start, sample_bergeom(server, len(F), gen)))
    F.write_csv(out / "arrivals.csv")
    path.departures.write_csv(out / "departures.csv", path.U)


def _v_interchange(p):
    fam = family_from(p)
    a, b = solve_params(p["mu1"], fam), solve_params(p["mu2"], fam)
    _need(fam.contains(a) and fam.contains(b), "both servers must lie in the family")
    arr = _ints(p["arrivals"])
    _need(len(arr) >= int(p["L"]), "arrival window shorter than the block length")


def _r_interchange(p, rng):
    fam = family_from(p)
    a, b = solve_params(p["mu1"], fam), solve_params(p["mu2"], fam)
    A = WorkSequence.of(_ints(p["arrivals"]))
    rep = interchange.verify_interchangeability(a, b, A, int(p["reps"]), rng, int(p["L"]))
    if a.alpha == 1.0 and b.alpha == 1.0 and len(A) <= int(p.get("exact_max_window", 6)):
        rep.extend(oracles.exact_order_battery(A, a.p, b.p), "exact: ")
    return rep


def _v_oracle(p):
    _need(int(p["instances"]) >= 1, "instances must be positive")


def _r_oracle(p, rng):
    return oracles.oracle_suite(int(p["instances"]), rng)


def _v_mm1(p):
    lam = _floats(p["lambdas"])
    _need(all(x > 0 for x in lam), "class rates must be positive")
    _need(p["mu"] > sum(lam), "mu must exceed the total rate")


def _r_mm1(p, rng):
    lam = _floats(p["lambdas"])
    rep = continuum.mm1_verify(lam, float(p["mu"]), float(p["horizon"]), rng.child(0), int(p["L"]))
    if len(lam) == 2 and p.get("clustering", True):
        rep.extend(continuum.clustering_experiment(lam[0], lam[1], float(p["eps"]), float(p["clustering_horizon"]),
                                                   rng.child(1)), "clustering: ")
    return rep


def _t_mm1(p, rng, out: Path):
    F = continuum.mm1_fixed_point(_floats(p["lambdas"]), (0.0, min(float(p["horizon"]), 1e4)), rng.child(99))
    F.write_csv(out / "fixed_point_events.csv")


def _v_brownian(p):
    _need(p["mu"] > p["lambda"], "need mu > lambda")
    _need(p["dt"] > 0 and p["horizon"] > 0, "dt and horizon must be positive")
    sd = p["lambda2"] if p.get("literal_service_drift") else p["lambda1"] + p["lambda2"]
    _need(p["lambda2"] > 0 and p["lambda1"] < sd < p["mu2"], "need lambda1 < service drift < mu2")


def _r_brownian(p, rng):
    rep = continuum.local_time_experiment(p["lambda"], p["mu"], p["dt"], p["horizon"], rng=rng.child(0),
                                          slope_horizon=p["slope_horizon"], fraction_horizon=p["fraction_horizon"],
                                          dts=tuple(_floats(p["dts"])))
    rep.extend(continuum.brownian_two_type(p["lambda1"], p["lambda2"], p["mu2"], p["two_type_dt"],
                                           p["two_type_horizon"], rng.child(1),
                                           literal_service_drift=bool(p.get("literal_service_drift"))), "two-type: ")
    rep.extend(continuum.heavy_traffic_check(p["theta"], tuple(_ints(p["ns"])), rng=rng.child(2)), "heavy traffic: ")
    return rep


def _t_brownian(p, rng, out: Path):
    import csv
    gen = rng.child(99).generator()
    n = min(int(round(p["horizon"] / p["dt"])), 100_000)
    A = continuum.brownian_motion(p["lambda"], n, p["dt"], gen)
    S = continuum.brownian_motion(p["mu"], n, p["dt"], gen)
    Q, D, U = continuum.brownian_queue(A, S, gen)
    with open(out / "brownian_grid.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "A", "S", "Q", "D", "U"])
        for k in range(len(A)):
            w.writerow([k, A.values[k], S.values[k], Q.values[k], D.values[k], U.values[k]])


def _v_tasep(p):
    spec = fixed_points.FixedPointSpec(FamilySpec.bernoulli(), tuple(_floats(p["lambdas"])))
    _need(spec.total < 1, "total density must be below 1")
    _need(int(p["ring"]) >= 2, "ring needs at least two sites")


def _r_tasep(p, rng):
    spec = fixed_points.FixedPointSpec(FamilySpec.bernoulli(), tuple(_floats(p["lambdas"])))
    return particles.stationarity_check(spec, int(p["ring"]), float(p["duration"]), int(p["reps"]), rng)


def _t_tasep(p, rng, out: Path):
    spec = fixed_points.FixedPointSpec(FamilySpec.bernoulli(), tuple(_floats(p["lambdas"])))
    F = fixed_points.construct_fixed_point(spec, int(p["ring"]), rng.child(99)).arrivals
    particles.arrivals_to_config(F).write_csv(out / "ring.csv")


def _v_labels(p):
    ms = _ints(p["ms"])
    _need(all(m >= 2 for m in ms), "class counts must be at least 2")


def _r_labels(p, rng):
    rep = particles.label_clustering(_ints(p["ms"]), int(p["slots"]), rng)
    exact = particles.exact_adjacent_match_m3()
    rep.metadata["exact_m3"] = str(exact)
    L3 = particles.finite_label_process(3, int(p["slots"]), rng.child(7))
    _, est, lo, hi = particles.repeat_statistics(L3, 1)[1]
    rep.check("m=3: estimate agrees with the exact value", lo - 1e-3 <= float(exact) <= hi + 1e-3,
              value=est, exact=float(exact), ci=[lo, hi])
    return rep


def _t_labels(p, rng, out: Path):
    m = _ints(p["ms"])[-1]
    particles.finite_label_process(m, min(int(p["slots"]), 100_000), rng.child(99)).write_csv(out / "labels.csv")


EXPERIMENTS: dict[str, Experiment] = {e.name: e for e in [
    Experiment("simulate", {"family": "bernoulli", "c": None, "lambdas": "0.2,0.1", "mu": 0.6, "slots": 100_000},
               _v_simulate, _r_simulate, _t_simulate),
    Experiment("verify-burke", {"family": "bernoulli", "c": None, "lambda": 0.3, "mu": 0.6, "slots": 1_000_000, "L": 3},
               _v_burke, _r_burke),
    Experiment("verify-fixed-point", {"family": "bernoulli", "c": None, "lambdas": "0.2,0.1", "mu": 0.6,
                                      "slots": 1_000_000, "L": 3, "claims": True},
               _v_fixed, _r_fixed),
    Experiment("verify-interchange", {"family": "bernoulli", "c": None, "mu1": 0.4, "mu2": 0.7,
                                      "arrivals": "3,0,0,2,0,0,0,0,1,1,0,0", "reps": 100_000, "L": 3},
               _v_interchange, _r_interchange),
    Experiment("oracle-suite", {"instances": 10_000}, _v_oracle, _r_oracle),
    Experiment("mm1", {"lambdas": "0.5,0.05", "mu": 0.8, "horizon": 1_000_000.0, "L": 3, "eps": 0.01,
                       "clustering_horizon": 4_000_000.0, "clustering": True}, _v_mm1, _r_mm1, _t_mm1),
    Experiment("brownian", {"lambda": 0.0, "mu": 1.0, "dt": 1e-3, "horizon": 1e4, "slope_horizon": 1e5,
                            "fraction_horizon": 1e3, "dts": "0.01,0.001,0.0001", "lambda1": 0.3, "lambda2": 0.3,
                            "mu2": 1.0, "two_type_dt": 1e-2, "two_type_horizon": 2e4, "theta": 0.5,
                            "ns": "100,10000", "literal_service_drift": False}, _v_brownian, _r_brownian, _t_brownian),
    Experiment("tasep-stationarity", {"lambdas": "0.3,0.2", "ring": 1000, "duration": 1000.0, "reps": 50},
               _v_tasep, _r_tasep, _t_tasep),
    Experiment("labels", {"ms": "6,12,24", "slots": 1_000_000}, _v_labels, _r_labels, _t_labels),
]}


# ---------------------------------------------------------------- running


def _coerce(value: str, like: Any):
    if isinstance(like, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(like, int) and not isinstance(like, bool):
        return int(float(value))
    if isinstance(like, float):
        return float(value)
    if like is None:
        try:
            return float(value)
        except ValueError:
            return value
    return value


def resolve(experiment: str, config_file: str | None, overrides: dict, seed: int | None,
            replications: int | None) -> ExperimentConfig:
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    exp = EXPERIMENTS[experiment]
    params = dict(exp.defaults)
    file_seed, file_reps = None, None
    if config_file:
        try:
            raw = json.loads(Path(config_file).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {config_file}: {e}") from e
        if raw.get("experiment", experiment) != experiment:
            raise ConfigError(f"config is for {raw['experiment']!r}, not {experiment!r}")
        file_params = raw.get("params", {k: v for k, v in raw.items() if k not in ("experiment", "seed", "replications")})
        unknown = set(file_params) - set(params)
        if unknown:
            raise ConfigError(f"unknown parameters for {experiment}: {sorted(unknown)}")
        params.update(file_params)
        file_seed, file_reps = raw.get("seed"), raw.get("replications")
    for k, v in overrides.items():
        if k not in params:
            raise ConfigError(f"unknown parameter {k!r} for {experiment}")
        params[k] = _coerce(v, exp.defaults[k]) if isinstance(v, str) else v
    if seed is None:
        seed = file_seed if file_seed is not None else int(os.environ.get("MQLAB_SEED", "0"))
    reps = replications if replications is not None else (file_reps or 1)
    cfg = ExperimentConfig(experiment, params, int(seed), int(reps))
    try:
        exp.validate(params)
    except (ParameterError, ValueError, KeyError, TypeError) as e:
        raise ConfigError(str(e)) from e
    _need(cfg.replications >= 1, "replications must be at least 1")
    return cfg


def _run_one(args: tuple[str, dict, int, int]) -> dict:
    name, params, seed, i = args
    rep = EXPERIMENTS[name].run(params, RngStream(seed, i))
    return rep.to_dict(timestamp=False)


def run_config(cfg: ExperimentConfig, threads: int = 1) -> TestReport:
    jobs = [(cfg.experiment, cfg.params, cfg.seed, i) for i in range(cfg.replications)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            dicts = list(pool.map(_run_one, jobs))
    else:
        dicts = [_run_one(j) for j in jobs]
    reports = [TestReport.from_dict(d) for d in dicts]
    if len(reports) == 1:
        rep = reports[0]
    else:
        rep = TestReport(cfg.experiment, reports[0].alpha)
        for i, r in enumerate(reports):
            rep.extend(r, f"rep {i}: ")
    rep.metadata["config"] = cfg.to_dict()
    rep.metadata["config_digest"] = config_digest(cfg.to_dict())
    return rep


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mqlab", description="Fixed points and interchangeability of queueing servers.")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name, exp in EXPERIMENTS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file; flags override it")
        sp.add_argument("--seed", type=int, help="base seed (default: $MQLAB_SEED or 0)")
        sp.add_argument("--out", default="out", help="output root")
        sp.add_argument("--threads", type=int, default=1, help="worker processes for replications")
        sp.add_argument("--replications", type=int, help="independent replications (one stream each)")
        sp.add_argument("--trace", action="store_true", help="also write CSV traces")
        for key in exp.defaults:
            flag = "--" + key.replace("_", "-")
            if key == "lambda":
                sp.add_argument(flag, dest="p_lambda", metavar="LAMBDA")
            else:
                sp.add_argument(flag, dest="p_" + key)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k[2:]: v for k, v in vars(args).items() if k.startswith("p_") and v is not None}
    try:
        cfg = resolve(args.experiment, args.config, overrides, args.seed, args.replications)
    except ConfigError as e:
        print(f"mqlab: invalid configuration: {e}", file=sys.stderr)
        return 2
    rep = run_config(cfg, max(1, args.threads))
    out = Path(args.out) / cfg.experiment / str(cfg.seed)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(rep.to_json(timestamp=True) + "\n")
    if args.trace and EXPERIMENTS[cfg.experiment].trace is not None:
        EXPERIMENTS[cfg.experiment].trace(cfg.params, RngStream(cfg.seed, 0), out)
    for line in rep.summary_lines():
        print(line)
    status = "PASS" if rep.passed else "FAIL"
    print(f"{status} {cfg.experiment}: {sum(t.passed for t in rep.tests)}/{len(rep.tests)} tests, report {out / 'report.json'}")
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
