"""Parametric bootstrap tests that plug an estimated covariance into the exact null law.

Variant ``C`` estimates Sigma by diag(d_i u_i^2) with the statistic's own
weights, variant ``C3`` always uses HC3 weights, and variant ``H`` takes a
caller-supplied estimator. All variants then reject when the observed
statistic exceeds the (1 - alpha)-quantile of T computed as if the estimate
were the true covariance.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import NotScalarRestriction, PluginMissing
from .model import TestingProblem
from .qform import DEFAULT_LIM, tail_probs, DROP_TOL
from .sizecontrol import sigma_quantile
from .statistics import Family, StatisticSpec, evaluate, evaluate_centered, make_spec

VARIANTS = ("C", "C3", "H")
EstimatorPlugin = Callable[[TestingProblem, np.ndarray], np.ndarray]


def _check(problem: TestingProblem, spec: StatisticSpec, variant: str, plugin):
    if problem.q != 1:
        raise NotScalarRestriction("bootstrap baselines are defined for q = 1")
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if variant == "H" and plugin is None:
        raise PluginMissing("variant H needs a covariance estimator plugin")
    if not spec.robust or spec.restricted:
        raise ValueError("bootstrap baselines use the unrestricted HC statistics")


def _estimate_weights(problem: TestingProblem, spec: StatisticSpec, variant: str) -> np.ndarray:
    if variant == "C3":
        return make_spec(problem, Family.HC3).weights
    return spec.weights


def estimate_sigma(problem: TestingProblem, spec: StatisticSpec, Y, variant: str = "C",
                   plugin: EstimatorPlugin | None = None) -> np.ndarray:
    """Estimated variances per row of ``Y``, scaled to unit trace."""
    _check(problem, spec, variant, plugin)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if variant == "H":
        S = np.vstack([np.asarray(plugin(problem, y), dtype=float) for y in Y])
    else:
        U = Y @ problem.proj_resid
        S = U * U * _estimate_weights(problem, spec, variant)
    tot = S.sum(axis=1, keepdims=True)
    return S / np.where(tot > 0, tot, 1.0)


def bootstrap_critical_value(problem: TestingProblem, spec: StatisticSpec, y_obs, alpha: float = 0.05,
                             variant: str = "C", plugin: EstimatorPlugin | None = None,
                             acc: float = 1e-5) -> float:
    """Data-dependent critical value: the (1 - alpha)-quantile of T under the estimated Sigma."""
    tau = estimate_sigma(problem, spec, y_obs, variant, plugin)[0]
    return sigma_quantile(problem, spec, alpha, tau, acc=acc, method="exact")


def bootstrap_reject(problem: TestingProblem, spec: StatisticSpec, y_obs, variant: str = "C",
                     alpha: float = 0.05, plugin: EstimatorPlugin | None = None) -> bool:
    """Decision of the bootstrap test at one observed sample."""
    t_obs = evaluate(problem, spec, y_obs).value
    if t_obs <= 0:
        return False
    return bool(t_obs >= bootstrap_critical_value(problem, spec, y_obs, alpha, variant, plugin))


def _pvalues(problem, spec, t_obs, tau_hat, acc, lim):
    """P_{Sigma_hat}(T >= t_obs) for each sample, with the reduction matrix rebuilt per t_obs."""
    v = problem.v
    P = problem.proj_resid
    second = (P * (v * v * spec.weights)[None, :]) @ P
    vv = np.outer(v, v)
    m = t_obs.size
    out = np.ones(m)
    chunk = 512
    for start in range(0, m, chunk):
        sl = slice(start, start + chunk)
        S = np.sqrt(tau_hat[sl])
        c = t_obs[sl]
        A = vv[None, :, :] - c[:, None, None] * second[None, :, :]
        M = S[:, :, None] * A * S[:, None, :]
        lam = np.linalg.eigvalsh(M)
        big = np.max(np.abs(lam), axis=1, keepdims=True)
        lam = np.where(np.abs(lam) > DROP_TOL * np.where(big > 0, big, 1.0), lam, 0.0)
        out[sl] = tail_probs(lam, None, acc, lim)
    out[t_obs <= 0] = 1.0
    return out


def bootstrap_null_rejection(problem: TestingProblem, spec: StatisticSpec, variant: str, sigma,
                             alpha: float = 0.05, reps: int = 10_000, seed: int = 0,
                             plugin: EstimatorPlugin | None = None, acc: float = 1e-4,
                             lim: int = DEFAULT_LIM) -> float:
    """Monte Carlo null rejection probability of the bootstrap test under ``sigma``.

    Rejecting when T exceeds the estimated quantile is the same event as the
    estimated p-value P_{Sigma_hat}(T >= T_obs) falling at or below alpha, and
    the latter needs one kernel call per sample instead of a root search.
    """
    _check(problem, spec, variant, plugin)
    tau = np.asarray(getattr(sigma, "tau_sq", sigma), dtype=float)
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((reps, problem.n)) * np.sqrt(tau)
    t_obs, _ = evaluate_centered(problem, spec, Z)
    tau_hat = estimate_sigma(problem, spec, problem.mu0 + Z, variant, plugin)
    pv = _pvalues(problem, spec, t_obs, tau_hat, acc, lim)
    return float(np.mean(pv <= alpha))
