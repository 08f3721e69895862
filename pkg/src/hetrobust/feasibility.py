"""Checks that decide whether size control is possible before any search.

Covers the rank assumptions on (X, R), the non-inclusion conditions for the
full, grouped and bounded heteroskedasticity models, the lower bound C* for
size-controlling critical values, and the constancy check for the
restricted robust statistics.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .covariance import CovarianceModel, het_full
from .errors import AssumptionViolated
from .model import TestingProblem, numerical_rank
from .statistics import Family, StatisticSpec, b_matrix, evaluate_centered

CONST_TOL = 1e-10
GROUP_RANDOM_POINTS = 20


class Verdict(str, enum.Enum):
    SIZE_CONTROLLABLE = "SizeControllable"
    SIZE_ONE_FOR_ALL_C = "SizeOneForAllC"
    INCONCLUSIVE = "Inconclusive"
    TRIVIALLY_ZERO = "TriviallyZeroStatistic"
    CONSTANT = "ConstantStatistic"


@dataclass(frozen=True)
class ConditionResult:
    ok: bool
    per_index: dict = field(default_factory=dict)
    per_group: dict = field(default_factory=dict)
    uc_ok: bool = True


@dataclass(frozen=True)
class FeasibilityReport:
    statistic: str
    model: str
    assumption_ok: bool
    condition_ok: bool
    c_star: float
    verdict: Verdict
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "model": self.model,
            "assumption_ok": self.assumption_ok,
            "condition_ok": self.condition_ok,
            "c_star": self.c_star,
            "verdict": self.verdict.value,
            "details": self.details,
        }


def check_assumption(problem: TestingProblem, spec: StatisticSpec) -> bool:
    """Rank condition on R (X'X)^{-1} X' after deleting unit-leverage coordinates.

    For HC families the deleted coordinates are those with e_i in span(X);
    for HC*R families those with e_i in M0lin. UC and UCR need nothing.
    """
    if not spec.robust:
        return True
    drop = problem.in_m0lin if spec.restricted else problem.in_span_x
    if not np.any(drop):
        return True
    keep = ~drop
    if not np.any(keep):
        return False
    return numerical_rank(problem.W[:, keep]) == problem.q


def _e(n: int, i: int) -> np.ndarray:
    e = np.zeros(n)
    e[i] = 1.0
    return e


def _in_b(problem: TestingProblem, spec: StatisticSpec, z: np.ndarray) -> bool:
    """Is ``mu0 + z`` in the singularity set B (or B-tilde)?"""
    return b_matrix(problem, spec, problem.mu0 + z)[1] < problem.q


def _span_in_set(problem, spec, cols: np.ndarray, rng: np.random.Generator, uc: bool) -> bool:
    """Is the span of the unit vectors ``cols`` contained in span(X) (uc) or in B / B-tilde?"""
    n = problem.n
    if uc:
        return bool(np.all(problem.in_span_x[cols]))
    basis = [_e(n, i) for i in cols]
    combos = []
    if len(cols) > 1:
        for _ in range(GROUP_RANDOM_POINTS):
            z = np.zeros(n)
            z[cols] = rng.standard_normal(len(cols))
            combos.append(z)
    return all(_in_b(problem, spec, z) for z in basis + combos)


def uc_condition(problem: TestingProblem) -> tuple[bool, dict]:
    """e_i not in span(X) for every i in I1."""
    per = {int(i): not bool(problem.in_span_x[i]) for i in problem.I1}
    return all(per.values()), per


def check_size_control_condition(problem: TestingProblem, spec: StatisticSpec,
                                 model: CovarianceModel | None = None, seed: int = 0) -> ConditionResult:
    """Sufficient non-inclusion condition for size control over ``model``."""
    model = het_full() if model is None else model
    model.validate(problem.n)
    if not check_assumption(problem, spec):
        raise AssumptionViolated(f"rank assumption fails for {spec.name}")
    I1 = set(problem.I1)
    if model.kind == "BoundedBelow":
        return ConditionResult(ok=True, uc_ok=True)
    rng = np.random.default_rng(seed)
    fam = spec.family
    if model.kind == "HetFull":
        uc_ok, uc_per = uc_condition(problem)
        if fam is Family.UC:
            return ConditionResult(ok=uc_ok, per_index=uc_per, uc_ok=uc_ok)
        if fam is Family.UCR:
            # always controllable, possibly only by a trivial test
            return ConditionResult(ok=True, per_index=uc_per, uc_ok=uc_ok)
        per = {}
        for i in problem.I1:
            per[int(i)] = not _in_b(problem, spec, _e(problem.n, i))
        return ConditionResult(ok=all(per.values()), per_index=per, uc_ok=uc_ok)

    # grouped model
    per_group = {}
    uc_per_group = {}
    for j, cols in enumerate(model.groups(problem.n)):
        if not (set(cols.tolist()) & I1):
            continue
        uc_per_group[j] = not _span_in_set(problem, spec, cols, rng, uc=True)
        if fam is Family.UC:
            per_group[j] = uc_per_group[j]
        elif fam is Family.UCR:
            per_group[j] = True
        else:
            per_group[j] = not _span_in_set(problem, spec, cols, rng, uc=False)
    uc_ok = all(uc_per_group.values())
    return ConditionResult(ok=all(per_group.values()), per_group=per_group, uc_ok=uc_ok)


def shifted_basis_values(problem: TestingProblem, spec: StatisticSpec) -> dict[int, float]:
    """Statistic at ``mu0 + e_i`` for every i in I1."""
    idx = np.asarray(problem.I1, dtype=int)
    Z = np.zeros((idx.size, problem.n))
    Z[np.arange(idx.size), idx] = 1.0
    vals, _ = evaluate_centered(problem, spec, Z)
    return {int(i): float(v) for i, v in zip(idx, vals)}


def c_star(problem: TestingProblem, spec: StatisticSpec) -> float:
    """Largest statistic value over the shifted unit vectors; any C below it gives size 1."""
    vals = shifted_basis_values(problem, spec)
    return max(vals.values()) if vals else 0.0


def c_star_argmax(problem: TestingProblem, spec: StatisticSpec) -> int:
    vals = shifted_basis_values(problem, spec)
    return max(vals, key=vals.get)


def c_zero(problem: TestingProblem, spec: StatisticSpec) -> float:
    """The only critical value at which the restricted robust reduction can vanish (q = 1)."""
    v = problem.v
    d = spec.weights
    return float(np.sum(v**2) / np.sum(v**4 * d))


def constancy_check(problem: TestingProblem, spec: StatisticSpec, seed: int = 0) -> bool:
    """True when the restricted robust statistic is constant off B-tilde."""
    if not (spec.robust and spec.restricted):
        raise ValueError("constancy is only checked for HC*R statistics")
    if not check_assumption(problem, spec):
        raise AssumptionViolated(f"rank assumption fails for {spec.name}")
    if problem.q == 1:
        v = problem.v
        c0 = c_zero(problem, spec)
        P = problem.proj_m0lin_perp
        second = (P * (v * v * spec.weights)[None, :]) @ P
        vv = np.outer(v, v)
        A = vv - c0 * second
        ref = np.linalg.norm(vv) + c0 * np.linalg.norm(second)
        return bool(np.linalg.norm(A) <= CONST_TOL * ref)
    rng = np.random.default_rng(seed)
    n = problem.n
    pts = [_e(n, i) for i in range(n) if not _in_b(problem, spec, _e(n, i))]
    Z = np.vstack(pts + [rng.standard_normal((1000, n))])
    vals, deg = evaluate_centered(problem, spec, Z)
    vals = vals[~deg]
    if vals.size == 0:
        return True
    return bool(vals.max() - vals.min() < 1e-8)


def feasibility_report(problem: TestingProblem, spec: StatisticSpec,
                       model: CovarianceModel | None = None, seed: int = 0) -> FeasibilityReport:
    """Assumption, condition, C* and the resulting verdict for one statistic."""
    model = het_full() if model is None else model
    model.validate(problem.n)
    fam = spec.family
    details: dict = {}
    assumption_ok = check_assumption(problem, spec)
    values = shifted_basis_values(problem, spec)
    cs = max(values.values()) if values else 0.0
    details["shifted_basis_values"] = {str(i): v for i, v in values.items()}
    if model.kind != "HetFull":
        # C* is the bound for the full model only; smaller models need no such floor
        details["c_star_full_model"] = cs
        cs = 0.0

    if not assumption_ok:
        return FeasibilityReport(fam.value, model.label, False, False, 0.0, Verdict.TRIVIALLY_ZERO, details)
    if spec.robust and spec.restricted and constancy_check(problem, spec, seed=seed):
        details["constant_value"] = c_zero(problem, spec) if problem.q == 1 else None
        return FeasibilityReport(fam.value, model.label, True, True, cs, Verdict.CONSTANT, details)

    cond = check_size_control_condition(problem, spec, model, seed=seed)
    if cond.per_index:
        details["condition_per_index"] = {str(i): ok for i, ok in cond.per_index.items()}
    if cond.per_group:
        details["condition_per_group"] = {str(j): ok for j, ok in cond.per_group.items()}
    details["uc_condition_ok"] = cond.uc_ok

    if cond.ok:
        verdict = Verdict.SIZE_CONTROLLABLE
        if fam is Family.UCR and not cond.uc_ok:
            details["note"] = "only the trivial test with C = n - (k - q) controls size"
    elif fam in (Family.UC,) or (fam.robust and not fam.restricted and not cond.uc_ok):
        verdict = Verdict.SIZE_ONE_FOR_ALL_C
    else:
        verdict = Verdict.INCONCLUSIVE
        allowed = [v for i, v in values.items() if cond.per_index.get(i, True)]
        details["partial_size_one_bound"] = max(allowed) if allowed else None
    return FeasibilityReport(fam.value, model.label, True, cond.ok, cs, verdict, details)
