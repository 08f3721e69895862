"""Power functions along the standardized distance from the null, and the GLS oracle."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .covariance import CovarianceCandidate
from .model import TestingProblem
from .qform import DEFAULT_LIM, noncentral_f_tail, reduction_matrix, rejection_probs
from .statistics import StatisticSpec, evaluate_centered

DEFAULT_GRID = np.linspace(0.0, 6.0, 61)
CSV_HEADER = ("test", "sigma_label", "delta", "power")


@dataclass(frozen=True, eq=False)
class PowerCurve:
    delta_grid: np.ndarray
    power: np.ndarray
    sigma: CovarianceCandidate
    statistic: str
    c: float

    def rows(self, sigma_label: str = ""):
        for d, p in zip(self.delta_grid, self.power):
            yield (self.statistic, sigma_label, float(d), float(p))

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "c": self.c,
            "delta_grid": [float(d) for d in self.delta_grid],
            "power": [float(p) for p in self.power],
            "sigma": self.sigma.to_list(),
        }


def _tau(sigma) -> np.ndarray:
    return np.asarray(getattr(sigma, "tau_sq", sigma), dtype=float)


def alternative_shift(problem: TestingProblem, sigma, delta: float) -> np.ndarray:
    """``mu - mu0`` for the alternative at standardized distance ``delta``.

    The coefficient moves along ``(X'S^-1X)^-1 R' G^-1 L e1`` with
    ``G = R(X'S^-1X)^-1 R' = LL'``, so that the GLS noncentrality equals delta^2.
    """
    tau = _tau(sigma)
    X, R = problem.X, problem.R
    XtSX = X.T @ (X / tau[:, None])
    V = np.linalg.solve(XtSX, R.T)
    G = R @ V
    L = np.linalg.cholesky(G)
    direction = V @ np.linalg.solve(G, L[:, 0])
    return float(delta) * (X @ direction)


def power_curve(problem: TestingProblem, spec: StatisticSpec, c: float, sigma, delta_grid=None,
                acc: float = 1e-4, lim: int = DEFAULT_LIM, n_draws: int = 100_000, seed: int = 0) -> PowerCurve:
    """Rejection probability of ``{T >= c}`` at each delta, sigma fixed."""
    grid = DEFAULT_GRID if delta_grid is None else np.asarray(delta_grid, dtype=float)
    tau = _tau(sigma)
    cand = CovarianceCandidate.normalized(tau)
    tau = np.asarray(cand.tau_sq)
    if c <= 0:
        return PowerCurve(grid, np.ones(grid.size), cand, spec.name, float(c))
    shifts = np.vstack([alternative_shift(problem, tau, d) for d in grid])
    if problem.q == 1:
        A = reduction_matrix(problem, spec, c)
        nu = shifts / np.sqrt(tau)
        T = np.broadcast_to(tau, (grid.size, problem.n))
        power = rejection_probs(A, T, nu=nu, acc=acc, lim=lim)
    else:
        Z = np.random.default_rng(seed).standard_normal((n_draws, problem.n)) * np.sqrt(tau)
        power = np.empty(grid.size)
        for j, s in enumerate(shifts):
            vals, _ = evaluate_centered(problem, spec, Z + s)
            power[j] = np.mean(vals >= c)
    return PowerCurve(grid, np.asarray(power), cand, spec.name, float(c))


def oracle_power_curve(problem: TestingProblem, sigma, alpha: float = 0.05, delta_grid=None,
                       acc: float = 1e-6) -> PowerCurve:
    """Power of the infeasible GLS F test that knows Sigma."""
    grid = DEFAULT_GRID if delta_grid is None else np.asarray(delta_grid, dtype=float)
    q, dof = problem.q, problem.n - problem.k
    crit = float(stats.f.ppf(1.0 - alpha, q, dof))
    power = np.array([noncentral_f_tail(q, dof, float(d) ** 2, crit, acc=acc) for d in grid])
    return PowerCurve(grid, power, CovarianceCandidate.normalized(_tau(sigma)), "oracle", crit)


def write_csv(curves, path, sigma_label: str = "") -> None:
    """One row per grid point with header test,sigma_label,delta,power."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for curve in curves:
            for row in curve.rows(sigma_label):
                w.writerow((row[0], row[1], repr(row[2]), repr(row[3])))


def write_sidecar(curves, path, metadata: dict | None = None) -> None:
    payload = {"curves": [{k: v for k, v in c.to_dict().items() if k != "power"} for c in curves]}
    if metadata:
        payload["metadata"] = metadata
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
