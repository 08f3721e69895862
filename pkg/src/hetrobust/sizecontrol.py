"""Worst-case size, smallest size-controlling critical values and maximal p-values.

The size of ``{T >= c}`` is the largest null rejection probability over the
covariance model. It is found by scoring many candidates, polishing the best
ones with Nelder-Mead over a softmax parameterization, and polishing the
winner once more with tighter tolerances. The value returned is always a
rejection probability actually attained, so it is a lower bound on the size.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import optimize

from .covariance import CovarianceCandidate, CovarianceModel, generate_candidates, het_full
from .errors import FeasibilityRefused, NotConverged
from .feasibility import FeasibilityReport, Verdict, c_zero, feasibility_report
from .model import TestingProblem
from .qform import DEFAULT_LIM, reduction_matrix, rejection_probs
from .statistics import StatisticSpec, evaluate, evaluate_centered, statistic_upper_bound


@dataclass(frozen=True)
class SizeParams:
    candidates: int = 20_000
    m1: int = 100
    m2: int = 1
    reltol1: float = 1e-2
    reltol2: float = 1e-3
    maxfev1_per_n: int = 20
    maxfev2_per_n: int = 30
    step1: float = 1.0
    step2: float = 0.3
    acc: float = 1e-3
    acc_refine: float = 1e-4
    lim: int = DEFAULT_LIM
    eps: float = 1e-3
    max_iter: int = 25
    warm_factor: float = 5.0
    warm_alpha: float = 0.05
    mc_candidates: int = 1000
    mc_n0: int = 1000
    mc_n1: int = 5000
    mc_n2: int = 20_000
    workers: int = 1

    def __post_init__(self):
        for name in ("candidates", "m1", "m2", "mc_candidates", "mc_n0", "mc_n1", "mc_n2", "workers", "max_iter"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not (self.mc_n0 <= self.mc_n1 <= self.mc_n2):
            raise ValueError("Monte Carlo sample sizes must be nondecreasing across stages")
        if self.acc <= 0 or self.acc_refine <= 0 or self.eps <= 0:
            raise ValueError("accuracies must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SizeReport:
    size: float
    attaining_sigma: CovarianceCandidate | None
    stage_trace: list
    method: str
    seed: int
    c: float = 0.0
    statistic: str = ""
    model: str = "HetFull"
    verdict: str = ""
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "size": self.size,
            "attaining_sigma": None if self.attaining_sigma is None else self.attaining_sigma.to_list(),
            "stage_trace": self.stage_trace,
            "method": self.method,
            "seed": self.seed,
            "c": self.c,
            "statistic": self.statistic,
            "model": self.model,
            "verdict": self.verdict,
            "note": self.note,
        }


@dataclass(frozen=True, eq=False)
class CriticalValueReport:
    c: float
    c_low: float
    iterations: int
    final_size: float
    converged: bool
    attaining_sigma: CovarianceCandidate | None = None
    statistic: str = ""
    model: str = "HetFull"
    verdict: str = ""
    method: str = "CV1"
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "c_low": self.c_low,
            "iterations": self.iterations,
            "final_size": self.final_size,
            "converged": self.converged,
            "attaining_sigma": None if self.attaining_sigma is None else self.attaining_sigma.to_list(),
            "statistic": self.statistic,
            "model": self.model,
            "verdict": self.verdict,
            "method": self.method,
            "history": self.history,
        }


def _resolve_method(problem: TestingProblem, method: str) -> str:
    if method == "auto":
        return "exact" if problem.q == 1 else "monte_carlo"
    if method not in ("exact", "monte_carlo"):
        raise ValueError(f"unknown method {method!r}")
    if method == "exact" and problem.q != 1:
        raise ValueError("the exact method needs q = 1")
    return method


def _as_seq(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def _seed_int(seed) -> int:
    return int(_as_seq(seed).generate_state(1, np.uint64)[0] >> np.uint64(1))


def _child_seeds(seed, count: int) -> list:
    return _as_seq(seed).spawn(count)


# ---------------------------------------------------------------- rejection probabilities

def rejection_prob(problem: TestingProblem, spec: StatisticSpec, c: float, sigma, mu=None,
                   method: str = "auto", acc: float = 1e-3, lim: int = DEFAULT_LIM,
                   n_draws: int = 100_000, seed=0) -> float:
    """``P_{mu, Sigma}(T >= c)`` with sigma = 1.

    ``sigma`` is a :class:`CovarianceCandidate` or a vector of variances.
    The mean ``mu`` must lie in span(X); by invariance only ``mu - mu0``
    matters, so ``mu=None`` means a null mean.
    """
    c = float(c)
    if c <= 0:
        return 1.0
    tau = np.asarray(getattr(sigma, "tau_sq", sigma), dtype=float)
    shift = None if mu is None else np.asarray(mu, dtype=float) - problem.mu0
    method = _resolve_method(problem, method)
    if method == "exact":
        nu = None if shift is None else shift / np.sqrt(tau)
        A = reduction_matrix(problem, spec, c)
        return float(rejection_probs(A, tau[None, :], nu=nu, acc=acc, lim=lim)[0])
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n_draws, problem.n)) * np.sqrt(tau)
    if shift is not None:
        Z += shift
    vals, _ = evaluate_centered(problem, spec, Z)
    return float(np.mean(vals >= c))


class _Objective:
    """Null rejection probability as a function of the variance vector."""

    def __init__(self, problem, spec, c, method, acc, lim, draws=None):
        self.problem = problem
        self.spec = spec
        self.c = c
        self.method = method
        self.acc = acc
        self.lim = lim
        self.draws = draws
        self.A = reduction_matrix(problem, spec, c).A if method == "exact" else None
        self.evaluations = 0

    def with_draws(self, draws, acc=None) -> "_Objective":
        obj = _Objective.__new__(_Objective)
        obj.__dict__.update(self.__dict__)
        obj.draws = draws
        obj.evaluations = 0
        if acc is not None:
            obj.acc = acc
        return obj

    def batch(self, T: np.ndarray) -> np.ndarray:
        T = np.atleast_2d(T)
        self.evaluations += T.shape[0]
        if self.method == "exact":
            return rejection_probs(self.A, T, acc=self.acc, lim=self.lim)
        out = np.empty(T.shape[0])
        for j, tau in enumerate(T):
            vals, _ = evaluate_centered(self.problem, self.spec, self.draws * np.sqrt(tau))
            out[j] = np.mean(vals >= self.c)
        return out

    def __call__(self, tau: np.ndarray) -> float:
        return float(self.batch(tau[None, :])[0])


def _nelder_mead(fun, model: CovarianceModel, n: int, tau0: np.ndarray, step: float,
                 reltol: float, maxfev: int) -> tuple[float, np.ndarray]:
    """Maximize ``fun(tau)`` from ``tau0`` over the model; returns (value, tau)."""
    dim = model.param_dim(n)
    f0 = fun(tau0)
    if dim == 0:
        return f0, tau0
    theta0 = model.to_params(tau0)
    simplex = np.vstack([theta0, theta0 + step * np.eye(dim)])
    best = {"f": f0, "tau": tau0}

    def neg(theta):
        tau = model.from_params(theta, n)
        f = fun(tau)
        if f > best["f"]:
            best["f"], best["tau"] = f, tau
        return -f

    # stop once the simplex values agree to a relative tolerance; positions are free
    fatol = reltol * (abs(f0) + reltol)
    optimize.minimize(neg, theta0, method="Nelder-Mead",
                      options={"initial_simplex": simplex, "maxfev": maxfev, "maxiter": maxfev,
                               "xatol": np.inf, "fatol": fatol})
    return best["f"], best["tau"]


def _run_local(fun, model, n, starts, step, reltol, maxfev, workers):
    def one(tau):
        return _nelder_mead(fun, model, n, tau, step, reltol, maxfev)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, starts))
    return [one(t) for t in starts]


def _top(values: np.ndarray, count: int) -> np.ndarray:
    return np.argsort(-values, kind="stable")[:count]


# ---------------------------------------------------------------- size

def _short_circuit(problem, spec, c, model, report: FeasibilityReport):
    """Size known without search, as (size, note), or None."""
    v = report.verdict
    if v is Verdict.TRIVIALLY_ZERO:
        return 0.0, "the statistic vanishes identically"
    if v is Verdict.CONSTANT:
        value = report.details.get("constant_value")
        if value is None:
            value = c_zero(problem, spec)
        return (1.0 if c <= value else 0.0), "the statistic is constant off a null set"
    if model.kind == "HetFull":
        if v is Verdict.SIZE_ONE_FOR_ALL_C:
            return 1.0, "size is one for every critical value"
        if c < report.c_star:
            return 1.0, "critical value below C*"
    if c >= statistic_upper_bound(problem, spec):
        return 0.0, "critical value at or above the statistic's upper bound"
    return None


def size(problem: TestingProblem, spec: StatisticSpec, c: float, model: CovarianceModel | None = None,
         params: SizeParams | None = None, seed: int = 0, method: str = "auto",
         short_circuit: bool = True, extra_starts=None, report: FeasibilityReport | None = None) -> SizeReport:
    """Worst-case null rejection probability of ``{T >= c}`` over ``model``."""
    model = het_full() if model is None else model
    params = SizeParams() if params is None else params
    model.validate(problem.n)
    method = _resolve_method(problem, method)
    c = float(c)
    n = problem.n
    base = dict(method=method, seed=seed, c=c, statistic=spec.name, model=model.label)
    if c <= 0:
        return SizeReport(1.0, None, [], note="nonpositive critical value", verdict="", **base)
    if report is None:
        report = feasibility_report(problem, spec, model)
    base["verdict"] = report.verdict.value
    if short_circuit:
        known = _short_circuit(problem, spec, c, model, report)
        if known is not None:
            return SizeReport(known[0], None, [], note=known[1], **base)

    s_cand, s_mc0, s_mc1, s_mc2, s_warm = _child_seeds(seed, 5)
    if method == "exact":
        obj0 = _Objective(problem, spec, c, "exact", params.acc, params.lim)
        obj1 = obj0
        obj2 = obj0.with_draws(None, acc=params.acc_refine)
        count = params.candidates
    else:
        draw = lambda ss, m: np.random.default_rng(ss).standard_normal((m, n))  # noqa: E731
        obj0 = _Objective(problem, spec, c, "monte_carlo", params.acc, params.lim, draw(s_mc0, params.mc_n0))
        obj1 = obj0.with_draws(draw(s_mc1, params.mc_n1))
        obj2 = obj0.with_draws(draw(s_mc2, params.mc_n2))
        count = params.mc_candidates

    starts = generate_candidates(n, model, count, s_cand, a_matrix=obj0.A)
    extra = [] if extra_starts is None else [np.asarray(getattr(t, "tau_sq", t), float) for t in extra_starts]
    note = ""
    c_hom_ref = None
    if params.warm_factor > 0:
        c_hom_ref = c_hom(problem, spec, params.warm_alpha, seed=seed)
    if c_hom_ref is not None and c > params.warm_factor * c_hom_ref:
        # a search at a smaller c finds the concentration direction more easily
        warm_params = replace(params, candidates=max(1, params.candidates // 4), m1=max(1, params.m1 // 4),
                              mc_candidates=max(1, params.mc_candidates // 4))
        warm = size(problem, spec, c / 2.0, model, warm_params, seed=_seed_int(s_warm), method=method,
                    short_circuit=False, extra_starts=extra_starts, report=report)
        if warm.attaining_sigma is not None:
            extra.append(np.asarray(warm.attaining_sigma.tau_sq))
            note = f"warm start from c = {c / 2.0!r}"
    if extra:
        starts = np.vstack([starts, model.project(np.vstack(extra))])

    trace = []
    p0 = obj0.batch(starts)
    trace.append({"stage": 0, "best": float(p0.max()), "evaluations": int(starts.shape[0])})

    s1 = starts[_top(p0, params.m1)]
    res1 = _run_local(obj1, model, n, list(s1), params.step1, params.reltol1,
                      params.maxfev1_per_n * n, params.workers)
    f1 = np.array([r[0] for r in res1])
    trace.append({"stage": 1, "best": float(f1.max()), "starts": len(res1)})

    s2 = [res1[i][1] for i in _top(f1, params.m2)]
    res2 = _run_local(obj2, model, n, s2, params.step2, params.reltol2,
                      params.maxfev2_per_n * n, params.workers)
    f2 = np.array([r[0] for r in res2])
    best = int(np.argmax(f2))
    trace.append({"stage": 2, "best": float(f2[best]), "starts": len(res2)})
    tau = res2[best][1]
    return SizeReport(float(np.clip(f2[best], 0.0, 1.0)), CovarianceCandidate(tau), trace, note=note, **base)


# ---------------------------------------------------------------- quantiles

def sigma_quantile(problem: TestingProblem, spec: StatisticSpec, alpha: float, tau_sq,
                   acc: float = 1e-6, n_draws: int = 200_000, seed=0, method: str = "auto") -> float:
    """Smallest ``c`` with ``P_{mu0, Sigma}(T >= c) <= alpha`` for a fixed Sigma."""
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    tau = np.asarray(getattr(tau_sq, "tau_sq", tau_sq), dtype=float)
    method = _resolve_method(problem, method)
    if method == "monte_carlo":
        Z = np.random.default_rng(seed).standard_normal((n_draws, problem.n)) * np.sqrt(tau)
        vals, _ = evaluate_centered(problem, spec, Z)
        return float(np.quantile(vals, 1.0 - alpha, method="higher"))

    def excess(c):
        return rejection_prob(problem, spec, c, tau, acc=acc) - alpha

    upper = statistic_upper_bound(problem, spec)
    lo, hi = 0.0, 1.0
    if math.isfinite(upper):
        hi = min(hi, 0.5 * upper)
    while excess(hi) > 0:
        lo = hi
        if math.isfinite(upper):
            hi = 0.5 * (hi + upper)
            if upper - hi <= 1e-12 * upper:
                return upper
        else:
            hi *= 2.0
            if hi > 1e12:
                raise RuntimeError("no finite quantile found")
    if lo == 0.0:
        while hi > 1e-12 and excess(0.5 * hi) <= 0:
            hi *= 0.5
        lo = 0.5 * hi
    if excess(lo) <= 0:
        return lo
    return float(optimize.brentq(excess, lo, hi, xtol=1e-10, rtol=1e-10))


def c_hom(problem: TestingProblem, spec: StatisticSpec, alpha: float = 0.05, seed=0) -> float:
    """(1 - alpha)-quantile of T under homoskedasticity (cached on the problem)."""
    key = ("c_hom", spec.name, float(alpha), seed if problem.q > 1 else None)
    cache = problem._cache
    if key not in cache:
        cache[key] = sigma_quantile(problem, spec, alpha, np.full(problem.n, 1.0 / problem.n), seed=seed)
    return cache[key]


# ---------------------------------------------------------------- critical values

def _check_controllable(report: FeasibilityReport, allow_inconclusive: bool):
    v = report.verdict
    if v in (Verdict.SIZE_ONE_FOR_ALL_C, Verdict.TRIVIALLY_ZERO, Verdict.CONSTANT):
        raise FeasibilityRefused(f"no size-controlling critical value is computed: verdict {v.value}")
    if v is Verdict.INCONCLUSIVE and not allow_inconclusive:
        raise FeasibilityRefused("size controllability is not established; pass allow_inconclusive=True")


def critical_value(problem: TestingProblem, spec: StatisticSpec, alpha: float = 0.05,
                   model: CovarianceModel | None = None, params: SizeParams | None = None, seed: int = 0,
                   method: str = "auto", allow_inconclusive: bool = False,
                   raise_on_failure: bool = True) -> CriticalValueReport:
    """Smallest size-controlling critical value by line search from ``c_low``.

    Each round computes the size at the current c. If it exceeds
    ``alpha + eps``, c moves to the (1 - alpha)-quantile of T under the
    covariance that attained the size.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    model = het_full() if model is None else model
    params = SizeParams() if params is None else params
    model.validate(problem.n)
    method = _resolve_method(problem, method)
    report = feasibility_report(problem, spec, model)
    _check_controllable(report, allow_inconclusive)
    ch = c_hom(problem, spec, alpha, seed=seed)
    c_low = max(report.c_star, ch)
    c = c_low
    history = []
    starts: list[np.ndarray] = []
    seeds = _child_seeds(seed, params.max_iter)
    sr = None
    upper = statistic_upper_bound(problem, spec)
    for it in range(params.max_iter):
        sr = size(problem, spec, c, model, params, seed=_seed_int(seeds[it]), method=method,
                  extra_starts=starts or None, report=report)
        history.append({"c": c, "size": sr.size})
        if sr.size <= alpha + params.eps:
            return CriticalValueReport(c, c_low, it + 1, sr.size, True, sr.attaining_sigma, spec.name,
                                       model.label, report.verdict.value, "CV1", history)
        tau = np.asarray(sr.attaining_sigma.tau_sq)
        starts.append(tau)
        c_new = sigma_quantile(problem, spec, alpha, tau, n_draws=params.mc_n2,
                               seed=_seed_int(seeds[it]), method=method)
        if c_new <= c:
            # the attained probability sits within accuracy of alpha; nudge upward
            c_new = c * (1.0 + 1e-3)
        c = min(c_new, upper)
    out = CriticalValueReport(c, c_low, params.max_iter, sr.size if sr else float("nan"), False,
                              sr.attaining_sigma if sr else None, spec.name, model.label,
                              report.verdict.value, "CV1", history)
    if raise_on_failure:
        raise NotConverged(f"critical value search did not converge in {params.max_iter} iterations", out)
    return out


def critical_value_quantile(problem: TestingProblem, spec: StatisticSpec, alpha: float = 0.05,
                            model: CovarianceModel | None = None, params: SizeParams | None = None,
                            seed: int = 0, allow_inconclusive: bool = False,
                            final_size: bool = True) -> CriticalValueReport:
    """Critical value as the largest (1 - alpha)-quantile of T over the model (Monte Carlo)."""
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    model = het_full() if model is None else model
    params = SizeParams() if params is None else params
    model.validate(problem.n)
    report = feasibility_report(problem, spec, model)
    _check_controllable(report, allow_inconclusive)
    n = problem.n
    ch = c_hom(problem, spec, alpha, seed=seed)
    c_low = max(report.c_star, ch)
    s_cand, s0, s1, s2 = _child_seeds(seed, 4)
    draws = [np.random.default_rng(s).standard_normal((m, n))
             for s, m in ((s0, params.mc_n0), (s1, params.mc_n1), (s2, params.mc_n2))]

    def quantile_fn(Z):
        def q(tau):
            vals, _ = evaluate_centered(problem, spec, Z * np.sqrt(tau))
            return float(np.quantile(vals, 1.0 - alpha, method="higher"))
        return q

    q0, q1, q2 = (quantile_fn(Z) for Z in draws)
    starts = generate_candidates(n, model, params.mc_candidates, s_cand)
    v0 = np.array([q0(t) for t in starts])
    res1 = _run_local(q1, model, n, list(starts[_top(v0, params.m1)]), params.step1, params.reltol1,
                      params.maxfev1_per_n * n, params.workers)
    f1 = np.array([r[0] for r in res1])
    res2 = _run_local(q2, model, n, [res1[i][1] for i in _top(f1, params.m2)], params.step2,
                      params.reltol2, params.maxfev2_per_n * n, params.workers)
    f2 = np.array([r[0] for r in res2])
    best = int(np.argmax(f2))
    c = max(float(f2[best]), c_low)
    history = [{"stage": 0, "best": float(v0.max())}, {"stage": 1, "best": float(f1.max())},
               {"stage": 2, "best": float(f2[best])}]
    fs = float("nan")
    if final_size:
        fs = size(problem, spec, c, model, params, seed=seed, report=report).size
    return CriticalValueReport(c, c_low, 1, fs, True, CovarianceCandidate(res2[best][1]), spec.name,
                               model.label, report.verdict.value, "CV2", history)


# ---------------------------------------------------------------- p-values

def max_pvalue_report(problem: TestingProblem, spec: StatisticSpec, y_obs, model: CovarianceModel | None = None,
                      params: SizeParams | None = None, seed: int = 0, method: str = "auto") -> SizeReport:
    """Size of the test whose critical value is the observed statistic."""
    t_obs = evaluate(problem, spec, y_obs).value
    return size(problem, spec, t_obs, model, params, seed=seed, method=method)


def max_pvalue(problem: TestingProblem, spec: StatisticSpec, y_obs, model: CovarianceModel | None = None,
               params: SizeParams | None = None, seed: int = 0, method: str = "auto") -> float:
    return max_pvalue_report(problem, spec, y_obs, model, params, seed, method).size
