"""Search for regressors that make conventional critical values useless.

The design is an intercept plus one regressor x and the slope is tested.
The search maximizes C*, the statistic's largest value over the shifted unit
vectors; any critical value below C* has size one.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .errors import HetRobustError
from .feasibility import c_star, check_assumption, feasibility_report
from .fixtures import intercept_design
from .sizecontrol import SizeParams, size
from .statistics import Family, make_spec

CHI2_CRIT = float(stats.chi2.ppf(0.95, 1))
EARLY_STOP = 4.0


@dataclass(frozen=True, eq=False)
class HostileResult:
    x: np.ndarray
    c_star: float
    sizes_at_conventional: dict
    statistic: str = ""
    restarts_run: int = 0
    trace: list = field(default_factory=list)
    size_reports: dict = field(default_factory=dict)
    designs: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "x": [float(v) for v in self.x],
            "c_star": self.c_star,
            "sizes_at_conventional": self.sizes_at_conventional,
            "restarts_run": self.restarts_run,
            "trace": self.trace,
            "size_reports": self.size_reports,
        }

    def write_design_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("intercept", "x"))
            for v in self.x:
                w.writerow((1.0, repr(float(v))))

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def design_score(x, family) -> float:
    """C* of the intercept-plus-x design, or 0 when the design is unusable."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        return 0.0
    try:
        problem = intercept_design(x)
    except (HetRobustError, ValueError, np.linalg.LinAlgError):
        return 0.0
    spec = make_spec(problem, family)
    if not check_assumption(problem, spec):
        return 0.0
    value = c_star(problem, spec)
    return float(value) if np.isfinite(value) else 0.0


def conventional_critical_values(n: int, k: int = 2, alpha: float = 0.05) -> dict:
    return {
        "chi2_quantile": float(stats.chi2.ppf(1.0 - alpha, 1)),
        "f_quantile": float(stats.f.ppf(1.0 - alpha, 1, n - k)),
    }


def hostile_search(n: int, family, alpha: float = 0.05, seed: int = 0, restarts: int = 5,
                   maxiter: int = 50, params: SizeParams | None = None,
                   compute_sizes: bool = True) -> HostileResult:
    """Maximize C* over x from log-normal starting points; stop early once C* > 4."""
    family = Family.parse(family)
    rng = np.random.default_rng(seed)
    best_x, best_f = np.zeros(n), 0.0
    trace = []
    designs = []
    run = 0
    for i in range(restarts):
        run = i + 1
        z0 = np.exp(rng.standard_normal(n))
        res = optimize.minimize(lambda z: -design_score(z, family), z0, method="Nelder-Mead",
                                options={"maxiter": maxiter})
        fz = -float(res.fun)
        trace.append({"restart": i, "c_star": fz})
        designs.append(np.asarray(res.x, dtype=float))
        if i == 0 or fz > best_f:
            best_x, best_f = np.asarray(res.x, dtype=float), fz
        if best_f > EARLY_STOP:
            break

    sizes, reports = {}, {}
    if compute_sizes:
        problem = intercept_design(best_x)
        spec = make_spec(problem, family)
        report = feasibility_report(problem, spec)
        for label, crit in conventional_critical_values(n, 2, alpha).items():
            sr = size(problem, spec, crit, params=params, seed=seed, report=report)
            sizes[label] = sr.size
            reports[label] = sr.to_dict()
    return HostileResult(best_x, best_f, sizes, family.value, run, trace, reports, designs)


def worst_case_size(designs, family, c: float = CHI2_CRIT, params: SizeParams | None = None,
                    seed: int = 0) -> tuple[float, np.ndarray | None]:
    """Largest size of ``{T >= c}`` over several intercept-plus-x designs."""
    family = Family.parse(family)
    best, best_x = 0.0, None
    for x in designs:
        if design_score(x, family) <= 0.0:
            continue
        problem = intercept_design(x)
        value = size(problem, make_spec(problem, family), c, params=params, seed=seed).size
        if best_x is None or value > best:
            best, best_x = value, np.asarray(x, dtype=float)
        if best >= 1.0:
            break
    return best, best_x
