"""Command-line interface: ``hetrobust <command> --config run.json``.

Exit codes: 0 on success, 2 when the configuration or inputs are invalid,
3 when a search did not converge or a probability missed its accuracy target
(results are still written).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import sys
import warnings
from dataclasses import fields, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, fixtures
from ._kernel import BACKEND
from .bootstrap import bootstrap_null_rejection
from .covariance import CovarianceModel, bounded_below, grouped, het_full
from .errors import AccuracyNotReached, FeasibilityRefused, HetRobustError, NotConverged
from .feasibility import feasibility_report
from .model import build_problem
from .power import oracle_power_curve, power_curve, write_csv, write_sidecar
from .search import hostile_search
from .sizecontrol import (SizeParams, critical_value, critical_value_quantile, max_pvalue_report,
                          size)
from .statistics import ALL_FAMILIES, Family, evaluate, make_spec

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3
COMMANDS = ("check", "size", "critval", "pvalue", "power", "hostile", "bootstrap-eval")


class ConfigError(ValueError):
    pass


def load_schema() -> dict:
    return json.loads(resources.files("hetrobust").joinpath("schemas/config.json").read_text())


def validate_config(config: dict) -> None:
    try:
        jsonschema.validate(config, load_schema())
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {loc}: {exc.message}") from None


def read_matrix_csv(path) -> np.ndarray:
    """Numeric CSV, with an optional header row."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    if not rows:
        raise ConfigError(f"{path} is empty")
    try:
        [float(v) for v in rows[0]]
    except ValueError:
        rows = rows[1:]
    try:
        data = np.array([[float(v) for v in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return data


def _sanitize(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (np.floating,)):
        return _sanitize(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    return obj


def write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(_sanitize(payload), indent=2, sort_keys=True) + "\n")


def _problem(config: dict):
    fx = config.get("fixture")
    if fx is not None:
        name = fx["name"]
        try:
            if name == "location":
                return fixtures.location_model(fx.get("n", 10))
            if name == "two_group":
                return fixtures.two_group(fx.get("n", 30), fx.get("n1", 3))
            if name == "k_group":
                return fixtures.k_group(fx["sizes"])
            if name == "bounded_example":
                return fixtures.bounded_example()
            return fixtures.high_leverage(fx.get("n", 30))
        except KeyError as exc:
            raise ConfigError(f"fixture {name} needs {exc}") from None
    if "design_path" not in config:
        raise ConfigError("either design_path or fixture is required")
    X = read_matrix_csv(config["design_path"])
    if "restriction" not in config:
        raise ConfigError("restriction is required with design_path")
    R = np.asarray(config["restriction"]["R"], dtype=float)
    r = config["restriction"].get("r")
    return build_problem(X, R, None if r is None else np.asarray(r, dtype=float))


def _model(config: dict) -> CovarianceModel:
    m = config.get("model")
    if m is None or m["kind"] == "HetFull":
        return het_full()
    if m["kind"] == "Grouped":
        if "group_sizes" not in m:
            raise ConfigError("Grouped model needs group_sizes")
        return grouped(m["group_sizes"])
    if "tau_star_sq" not in m:
        raise ConfigError("BoundedBelow model needs tau_star_sq")
    return bounded_below(m["tau_star_sq"])


def _families(config: dict, default_all: bool) -> list[Family]:
    stat = config.get("statistic")
    if stat is None:
        if default_all:
            return list(ALL_FAMILIES)
        raise ConfigError("statistic is required")
    names = stat if isinstance(stat, list) else [stat]
    return [Family.parse(s) for s in names]


def _params(config: dict, threads: int) -> tuple[SizeParams, int]:
    raw = dict(config.get("params", {}))
    mc_reps = int(raw.pop("mc_reps", 10_000))
    known = {f.name for f in fields(SizeParams)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown params: {sorted(unknown)}")
    try:
        params = replace(SizeParams(), workers=max(1, threads), **raw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return params, mc_reps


def _sigma(config: dict, n: int) -> np.ndarray:
    if "sigma" not in config:
        return np.full(n, 1.0 / n)
    s = np.asarray(config["sigma"], dtype=float)
    if s.size != n:
        raise ConfigError(f"sigma has length {s.size}, expected {n}")
    return s / s.sum()


class _Run:
    def __init__(self, command, config, threads):
        self.command = command
        self.config = config
        self.seed = int(os.environ.get("HRT_SEED", config.get("seed", 0)))
        self.alpha = float(config.get("alpha", 0.05))
        self.params, self.mc_reps = _params(config, threads)
        self.out = Path(config.get("output_dir", "hetrobust_out"))
        self.numerical_issue = False
        self.notes: list[str] = []

    def report(self, results, summary: str) -> dict:
        return {"command": self.command, "seed": self.seed, "alpha": self.alpha,
                "config": self.config, "results": results, "warnings": self.notes, "summary": summary}


def _cmd_check(run: _Run):
    problem = _problem(run.config)
    model = _model(run.config)
    res = [feasibility_report(problem, make_spec(problem, f), model, seed=run.seed).to_dict()
           for f in _families(run.config, True)]
    counts = {}
    for r in res:
        counts[r["verdict"]] = counts.get(r["verdict"], 0) + 1
    summary = "check: " + ", ".join(f"{k} x{v}" for k, v in sorted(counts.items()))
    return res, summary


def _cmd_size(run: _Run):
    if "c" not in run.config:
        raise ConfigError("size needs c")
    problem = _problem(run.config)
    model = _model(run.config)
    res = []
    for f in _families(run.config, False):
        spec = make_spec(problem, f)
        fr = feasibility_report(problem, spec, model, seed=run.seed)
        sr = size(problem, spec, run.config["c"], model, run.params, seed=run.seed, report=fr)
        res.append({"feasibility": fr.to_dict(), "size": sr.to_dict()})
    summary = "size: " + ", ".join(f"{r['size']['statistic']}={r['size']['size']:.4f}" for r in res)
    return res, summary


def _cmd_critval(run: _Run):
    problem = _problem(run.config)
    model = _model(run.config)
    method = run.config.get("critval_method", "CV1")
    allow = bool(run.config.get("allow_inconclusive", False))
    res = []
    for f in _families(run.config, False):
        spec = make_spec(problem, f)
        fr = feasibility_report(problem, spec, model, seed=run.seed)
        entry = {"feasibility": fr.to_dict()}
        try:
            if method == "CV2":
                cv = critical_value_quantile(problem, spec, run.alpha, model, run.params, seed=run.seed,
                                             allow_inconclusive=allow)
            else:
                cv = critical_value(problem, spec, run.alpha, model, run.params, seed=run.seed,
                                    allow_inconclusive=allow)
            entry["critical_value"] = cv.to_dict()
        except FeasibilityRefused as exc:
            entry["critical_value"] = None
            entry["refused"] = str(exc)
        except NotConverged as exc:
            entry["critical_value"] = exc.report.to_dict()
            run.numerical_issue = True
            run.notes.append(f"{f.value}: {exc}")
        res.append(entry)

    def show(e):
        cv = e["critical_value"]
        return f"{e['feasibility']['statistic']}=" + ("refused" if cv is None else f"{cv['c']:.4f}")

    return res, "critval: " + ", ".join(show(e) for e in res)


def _cmd_pvalue(run: _Run):
    if "y_path" not in run.config:
        raise ConfigError("pvalue needs y_path")
    problem = _problem(run.config)
    y = read_matrix_csv(run.config["y_path"]).ravel()
    if y.size != problem.n:
        raise ConfigError(f"y has length {y.size}, expected {problem.n}")
    model = _model(run.config)
    res = []
    for f in _families(run.config, False):
        spec = make_spec(problem, f)
        fr = feasibility_report(problem, spec, model, seed=run.seed)
        sr = max_pvalue_report(problem, spec, y, model, run.params, seed=run.seed)
        res.append({"feasibility": fr.to_dict(), "statistic_value": evaluate(problem, spec, y).value,
                    "p_value": sr.size, "size_report": sr.to_dict()})
    return res, "pvalue: " + ", ".join(f"{r['feasibility']['statistic']} p={r['p_value']:.4f}" for r in res)


def _cmd_power(run: _Run):
    problem = _problem(run.config)
    model = _model(run.config)
    sigma = _sigma(run.config, problem.n)
    label = run.config.get("sigma_label", "sigma")
    grid = run.config.get("delta_grid")
    curves, res = [], []
    for f in _families(run.config, False):
        spec = make_spec(problem, f)
        fr = feasibility_report(problem, spec, model, seed=run.seed)
        c = run.config.get("c")
        entry = {"feasibility": fr.to_dict()}
        if c is None:
            try:
                cv = critical_value(problem, spec, run.alpha, model, run.params, seed=run.seed)
            except FeasibilityRefused as exc:
                entry["refused"] = str(exc)
                res.append(entry)
                continue
            except NotConverged as exc:
                cv = exc.report
                run.numerical_issue = True
                run.notes.append(f"{f.value}: {exc}")
            c = cv.c
            entry["critical_value"] = cv.to_dict()
        curve = power_curve(problem, spec, c, sigma, grid)
        curves.append(curve)
        entry["curve"] = curve.to_dict()
        res.append(entry)
    if run.config.get("include_oracle", False) and problem.q == 1:
        curve = oracle_power_curve(problem, sigma, run.alpha, grid)
        curves.append(curve)
        res.append({"curve": curve.to_dict()})
    write_csv(curves, run.out / "power.csv", label)
    write_sidecar(curves, run.out / "power.json")
    return res, f"power: {len(curves)} curves written to {run.out / 'power.csv'}"


def _cmd_hostile(run: _Run):
    h = run.config.get("hostile", {})
    n = h.get("n", 25)
    res = []
    for f in _families(run.config, False):
        hr = hostile_search(n, f, run.alpha, seed=run.seed, restarts=h.get("restarts", 5),
                            maxiter=h.get("maxiter", 50), params=run.params)
        hr.write_design_csv(run.out / f"hostile_{f.value}.csv")
        res.append(hr.to_dict())
    return res, "hostile: " + ", ".join(f"{r['statistic']} C*={r['c_star']:.3f}" for r in res)


def _cmd_bootstrap(run: _Run):
    problem = _problem(run.config)
    sigma = _sigma(run.config, problem.n)
    variant = run.config.get("variant", "C")
    res = []
    for f in _families(run.config, False):
        spec = make_spec(problem, f)
        p = bootstrap_null_rejection(problem, spec, variant, sigma, run.alpha, reps=run.mc_reps, seed=run.seed)
        se = math.sqrt(max(p * (1 - p), 1e-12) / run.mc_reps)
        res.append({"statistic": f.value, "variant": variant, "null_rejection": p, "mc_std_error": se,
                    "reps": run.mc_reps})
    return res, "bootstrap-eval: " + ", ".join(f"{r['statistic']}={r['null_rejection']:.4f}" for r in res)


HANDLERS = {"check": _cmd_check, "size": _cmd_size, "critval": _cmd_critval, "pvalue": _cmd_pvalue,
            "power": _cmd_power, "hostile": _cmd_hostile, "bootstrap-eval": _cmd_bootstrap}

HELP = {
    "check": "feasibility verdicts (assumption, size-control condition, C*) per statistic",
    "size": "worst-case size of {T >= c} over the covariance model",
    "critval": "smallest size-controlling critical value",
    "pvalue": "maximal p-value of an observed response (y_path)",
    "power": "power curves along delta, written as CSV plus a JSON sidecar",
    "hostile": "search for intercept-plus-x designs with large C*",
    "bootstrap-eval": "null rejection probabilities of the parametric bootstrap tests",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetrobust", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hetrobust {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("--config", required=True, help="JSON run configuration (see schemas/config.json)")
        p.add_argument("--output-dir", help="overrides output_dir from the config")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                       help="maximum worker threads (default: available cores)")
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = _dt.datetime.now(_dt.timezone.utc)
    try:
        with open(args.config) as fh:
            config = json.load(fh)
        if args.output_dir:
            config["output_dir"] = args.output_dir
        validate_config(config)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        job = _Run(args.command, config, args.threads)
        job.out.mkdir(parents=True, exist_ok=True)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RuntimeWarning)
            results, summary = HANDLERS[args.command](job)
        for w in caught:
            if "node budget" in str(w.message):
                job.numerical_issue = True
                job.notes.append(str(w.message))
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except AccuracyNotReached as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (HetRobustError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    write_json(job.out / "report.json", job.report(results, summary))
    write_json(job.out / "metadata.json", {
        "started": started.isoformat(),
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "version": __version__,
        "kernel_backend": BACKEND,
        "threads": args.threads,
    })
    print(summary)
    return EXIT_NUMERICAL if job.numerical_issue else EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
