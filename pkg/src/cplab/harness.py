"""Command-line entry point.

Every run is described by a JSON config (defaults < ``--config`` file <
environment < command-line flags).  Outputs go to ``--out`` and each file
carries the SHA-256 of the config, which excludes the worker count and output
location so that runs differing only in parallelism share a hash.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 violation.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .distributions import CompoundPoissonLaw, InnovationDensity, JumpLaw
from .errors import ConfigError, InvalidParameterError, NumericalError
from .markov import ARModel, Drift, TARModel, simulate_chain, solve_invariant_density
from .metrics import (
    EmpiricalLaw,
    best_cutoff,
    levy_distance,
    limit_cdf,
    rate_study,
    theoretical_rate_bound,
    zolotarev_bound,
    zolotarev_grid,
)
from .streams import map_replications, resolve_workers, stream
from .threshold import TruncatedGaussianPrior, UniformPrior, bayes_estimate, estimator_asymptotics_study
from .triangular import audit_assumptions, simulate_row_sums

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VIOLATION = 0, 2, 3, 4

DEFAULT_MODEL = {"family": "gaussian", "scale": 1.0, "drift": {"kind": "linear", "rho": 0.5}}
DEFAULT_MARK = {"kind": "constant", "value": 1.0}
DEFAULT_TAR = {
    "family": "gaussian",
    "scale": 1.0,
    "rho_plus": 0.5,
    "rho_minus": -0.5,
    "theta0": 0.5,
    "lower": -1.0,
    "upper": 1.0,
}

DEFAULTS = {
    "simulate": {"model": DEFAULT_MODEL, "n": 1000, "burn_in": None, "seed": 0},
    "invariant": {"model": DEFAULT_MODEL, "grid_size": 4001, "x_max": None, "tol": 1e-10, "max_iter": 10000},
    "convergence": {"model": DEFAULT_MODEL, "mark": DEFAULT_MARK, "n": 1000, "M": 10000, "seed": 0, "n_boot": 200},
    "rate": {
        "model": DEFAULT_MODEL,
        "mark": DEFAULT_MARK,
        "n_grid": [100, 300, 1000, 3000],
        "M": 10000,
        "seed": 0,
        "n_boot": 200,
    },
    "audit": {
        "model": DEFAULT_MODEL,
        "mark": DEFAULT_MARK,
        "n": 100,
        "M": None,
        "seed": 0,
        "ell": 2,
        "pair_lags": [1, 2, 5],
        "c_prime": None,
    },
    "zol": {
        "model": DEFAULT_MODEL,
        "mark": DEFAULT_MARK,
        "n": 1000,
        "M": 10000,
        "seed": 0,
        "theoretical": None,
        "zol_coefficient": 8,
    },
    "threshold": {
        "tar": DEFAULT_TAR,
        "prior": {"kind": "uniform"},
        "n": 2000,
        "M": 2000,
        "seed": 0,
        "u_max": None,
    },
}

# Keys that never change results and are left out of the config hash.
RUNTIME_KEYS = ("workers", "out")


def config_hash(config: dict) -> str:
    body = {k: v for k, v in config.items() if k not in RUNTIME_KEYS}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def _merge(base: dict, extra: dict, where: str) -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if key not in base and key not in RUNTIME_KEYS:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if isinstance(base.get(key), dict) and isinstance(val, dict) and key not in ("mark", "prior", "drift"):
            out[key] = _merge(base[key], val, f"{where}{key}.")
        else:
            out[key] = copy.deepcopy(val)
    return out


def build_config(subcommand: str, file_config: dict | None, overrides: dict) -> dict:
    config = _merge(DEFAULTS[subcommand], file_config or {}, "")
    env = {}
    if "CPLAB_SEED" in os.environ and "seed" in config:
        env["seed"] = int(os.environ["CPLAB_SEED"])
    config = _merge(config, env, "")
    config = _merge(config, {k: v for k, v in overrides.items() if v is not None}, "")
    config["workers"] = resolve_workers(config.get("workers"))
    return config


def make_innovation(spec) -> InnovationDensity:
    return InnovationDensity(spec.get("family", "gaussian"), float(spec.get("scale", 1.0)))


def make_drift(spec) -> Drift:
    kind = spec.get("kind", "linear")
    if kind == "zero":
        return Drift.zero()
    if kind == "linear":
        return Drift.linear(spec.get("rho", 0.0))
    if kind == "clipped":
        return Drift.clipped(spec.get("rho", 0.0), spec.get("clip", 1.0))
    raise ConfigError(f"unknown drift kind {kind!r}")


def make_mark(spec, innovation) -> JumpLaw:
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return JumpLaw.constant(innovation, float(spec.get("value", 1.0)))
    if kind == "affine":
        return JumpLaw.affine(innovation, float(spec["a"]), float(spec.get("b", 0.0)))
    if kind == "log_ratio":
        return JumpLaw.log_ratio(innovation, float(spec["shift"]))
    raise ConfigError(f"unknown mark kind {kind!r}")


def make_ar_model(config) -> ARModel:
    spec = config["model"]
    q = make_innovation(spec)
    mark = make_mark(config.get("mark", DEFAULT_MARK), q)
    return ARModel(make_drift(spec.get("drift", {})), q, mark)


def make_tar_model(spec) -> TARModel:
    return TARModel(
        Drift.linear(spec["rho_plus"]),
        Drift.linear(spec["rho_minus"]),
        float(spec["theta0"]),
        float(spec["lower"]),
        float(spec["upper"]),
        make_innovation(spec),
    )


def make_prior(spec, lower, upper):
    kind = spec.get("kind", "uniform")
    if kind == "uniform":
        return UniformPrior(lower, upper)
    if kind == "truncated_gaussian":
        return TruncatedGaussianPrior(spec.get("loc", 0.0), spec.get("scale", 1.0), lower, upper)
    raise ConfigError(f"unknown prior kind {kind!r}")


class Output:
    """Writes result files that embed the config hash."""

    def __init__(self, out_dir: Path, config: dict):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.hash = config_hash(config)
        self.started = time.perf_counter()

    def csv(self, name, text):
        (self.dir / name).write_text(f"# config_sha256={self.hash}\n{text}")

    def table(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        self.csv(name, buf.getvalue())

    def json(self, name, result, meta=None):
        doc = {
            "config_sha256": self.hash,
            "config": {k: v for k, v in self.config.items() if k not in RUNTIME_KEYS},
            "result": result,
            "meta": {
                "written_at": datetime.now(timezone.utc).isoformat(),
                "seconds": time.perf_counter() - self.started,
                "workers": self.config.get("workers"),
                **(meta or {}),
            },
        }
        (self.dir / name).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


def _r(v):
    return repr(float(v))


def cmd_simulate(config, out: Output):
    model = make_ar_model(config)
    path = simulate_chain(model, int(config["n"]), config["burn_in"], stream(config["seed"], "simulate"))
    rows = [[0, _r(path.states[0]), ""]]
    rows += [[j, _r(x), _r(e)] for j, (x, e) in enumerate(zip(path.states[1:], path.innovations), start=1)]
    out.table("path.csv", ["j", "state", "innovation"], rows)
    out.json("simulate.json", {"n": path.n, "mean": float(path.states.mean()), "var": float(path.states.var())})
    return EXIT_OK


def cmd_invariant(config, out: Output):
    model = make_ar_model(config)
    inv = solve_invariant_density(model, config["x_max"], int(config["grid_size"]), config["tol"], config["max_iter"])
    out.table("density.csv", ["x", "p"], [[_r(x), _r(p)] for x, p in zip(inv.grid, inv.values)])
    result = {"p0": inv(0.0), "iterations": inv.iterations, "residual": inv.residual, "mass": inv.mass}
    q, d = model.innovation, model.drift
    if q.family == "gaussian" and d.kind in ("linear", "zero"):
        result["p0_closed_form"] = math.sqrt(1 - d.rho**2) / (q.scale * math.sqrt(2 * math.pi))
    print(f"p(0) = {result['p0']:.10g}")
    out.json("invariant.json", result)
    return EXIT_OK


def _rate(config, n_grid, out: Output, stem: str):
    model = make_ar_model(config)
    report = rate_study(
        model, None, n_grid, int(config["M"]), config["seed"], config["workers"], n_boot=int(config["n_boot"])
    )
    out.csv(f"{stem}.csv", report.to_csv())
    rows = [{k: v for k, v in row.items() if k != "seconds"} for row in report.rows]
    timings = {str(row["n"]): row["seconds"] for row in report.rows}
    out.json(
        f"{stem}.json",
        {"rows": rows, "intensity": report.intensity, "reference": report.reference},
        meta={"seconds_per_n": timings},
    )
    for row in report.rows:
        print(f"n={row['n']:>7d}  levy={row['levy_hat']:.6f} +/- {row['levy_err']:.6f}  zol={row['zol_bound']:.4f}")
    return EXIT_OK


def cmd_convergence(config, out):
    return _rate(config, [int(config["n"])], out, "convergence")


def cmd_rate(config, out):
    return _rate(config, [int(n) for n in config["n_grid"]], out, "rate")


def cmd_audit(config, out: Output):
    model = make_ar_model(config)
    audit = audit_assumptions(
        model,
        int(config["n"]),
        config["M"],
        rng=stream(config["seed"], "audit", int(config["n"])),
        ell=int(config["ell"]),
        pair_lags=config["pair_lags"],
        c_prime=config["c_prime"],
    )
    result = audit.to_dict()
    out.table(
        "audit.csv",
        ["name", "value", "stderr", "bound", "violated"],
        [[e["name"], _r(e["value"]), _r(e["stderr"]), _r(e["bound"]), int(e["violated"])] for e in result["entries"]],
    )
    out.json("audit.json", result)
    for e in result["entries"]:
        flag = "VIOLATION" if e["violated"] else "ok"
        print(f"{e['name']:<32s} {e['value']:.5g} (se {e['stderr']:.2g}) bound {e['bound']:.5g}  {flag}")
    return EXIT_VIOLATION if audit.violation else EXIT_OK


THEORETICAL_KEYS = {"C1", "C2", "C3", "mu", "r", "b", "n", "ell"}


def parse_theoretical(items) -> dict:
    params = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        key, val = item.split("=", 1)
        if key not in THEORETICAL_KEYS:
            raise ConfigError(f"unknown bound parameter {key!r}")
        params[key] = float(val)
    missing = {"C1", "C2", "C3", "mu", "r", "b", "n"} - params.keys()
    if missing:
        raise ConfigError(f"missing bound parameters: {sorted(missing)}")
    return params


def cmd_zol(config, out: Output):
    coef = int(config["zol_coefficient"])
    if config["theoretical"] is not None:
        p = dict(config["theoretical"])
        args = (p["C1"], p["C2"], p["C3"], p["mu"], p["r"], p["b"], p["n"])
        ell = p.get("ell", 1)
        value = theoretical_rate_bound(*args, ell=ell, coefficient=coef)
        T_best, best = best_cutoff(*args, ell=ell, coefficient=coef)
        print(f"{value:.6f}")
        out.json("zol.json", {"theoretical_bound": value, "best_T": T_best, "best_T_bound": best})
        return EXIT_OK
    model = make_ar_model(config)
    n, M, seed = int(config["n"]), int(config["M"]), config["seed"]
    inv = solve_invariant_density(model)
    law = CompoundPoissonLaw(float(inv(0.0)), model.mark)
    sums = np.asarray(map_replications(simulate_row_sums, M, seed, ("rate", n), (model, n, None), config["workers"]))
    F = EmpiricalLaw(sums)
    G, _ = limit_cdf(law, seed)
    T = math.sqrt(n)
    t = zolotarev_grid(T)
    diff = np.abs(F.cf(t) - law.cf(t))
    bound = zolotarev_bound(diff, T, t)
    levy = levy_distance(F, G)
    out.table("cf_diff.csv", ["t", "abs_diff"], [[_r(a), _r(b)] for a, b in zip(t, diff)])
    out.json("zol.json", {"n": n, "M": M, "T": T, "empirical_bound": bound, "levy_hat": levy})
    print(f"levy={levy:.6f}  zolotarev_bound={bound:.6f}")
    return EXIT_OK


def cmd_threshold(config, out: Output):
    model = make_tar_model(config["tar"])
    prior = make_prior(config["prior"], model.lower, model.upper)
    n, M, seed = int(config["n"]), int(config["M"]), config["seed"]
    path = simulate_chain(model, n, rng=stream(seed, "threshold-single"))
    single = bayes_estimate(path.states, model, prior)
    report = estimator_asymptotics_study(model, n, M, prior, seed, config["workers"], config["u_max"])
    out.csv("threshold_cdfs.csv", report.cdf_csv())
    summary = report.summary()
    summary["single_path_estimate"] = single.theta
    summary["single_path_breakpoints"] = single.breakpoints
    out.json("threshold.json", summary)
    print(f"theta_hat={single.theta:.6f}  levy(n(theta_n - theta0), limit)={report.levy_distance:.4f}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "invariant": cmd_invariant,
    "convergence": cmd_convergence,
    "rate": cmd_rate,
    "audit": cmd_audit,
    "zol": cmd_zol,
    "threshold": cmd_threshold,
}


def build_parser():
    epilog = "exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 assumption violation"
    parser = argparse.ArgumentParser(prog="cplab", description=__doc__.splitlines()[0], epilog=epilog)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_, seeded=True):
        p = sub.add_parser(name, help=help_, epilog=epilog)
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--out", type=Path, help="output directory (default results/<command>)")
        p.add_argument("--workers", type=int, help="worker processes (env CPLAB_WORKERS)")
        if seeded:
            p.add_argument("--seed", type=int, help="master seed (env CPLAB_SEED)")
        return p

    p = add("simulate", "simulate one stationary AR path")
    p.add_argument("--n", type=int)
    add("invariant", "solve for the invariant density", seeded=False)
    p = add("convergence", "Lévy distance of S_n to its limit at one n")
    p.add_argument("--n", type=int)
    p.add_argument("--M", type=int)
    p = add("rate", "rate study over an n grid")
    p.add_argument("--n-grid", dest="n_grid", type=int, nargs="+")
    p.add_argument("--M", type=int)
    p = add("audit", "Monte Carlo audit of the moment assumptions")
    p.add_argument("--n", type=int)
    p.add_argument("--M", type=int)
    p = add("zol", "smoothing bound, empirical or closed form")
    p.add_argument("--n", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--theoretical", nargs="+", metavar="KEY=VALUE", help="C1 C2 C3 mu r b n [ell]")
    p.add_argument("--zol-coefficient", dest="zol_coefficient", type=int, choices=(2, 8))
    p = add("threshold", "Bayes threshold estimation and its limit law")
    p.add_argument("--n", type=int)
    p.add_argument("--M", type=int)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_config = json.loads(args.config.read_text()) if args.config else None
        overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "out")}
        if overrides.get("theoretical") is not None:
            overrides["theoretical"] = parse_theoretical(overrides["theoretical"])
        if overrides.get("workers") is None:
            overrides.pop("workers", None)
        config = build_config(args.command, file_config, overrides)
        out = Output(args.out or Path("results") / args.command, config)
        return COMMANDS[args.command](config, out)
    except (ConfigError, InvalidParameterError, json.JSONDecodeError, KeyError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main():
    sys.exit(run())
