"""The twelve test statistics and the matrices governing their singularity.

Unrestricted families (UC, HC0-HC4) use OLS residuals; the restricted
families (UCR, HC0R-HC4R) use residuals from the fit under the null.
Every statistic is defined as 0 where its variance estimator is singular.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import TestingProblem, orthonormal_basis

# Omega is declared singular when its smallest eigenvalue is at most this
# fraction of its largest one.
SINGULAR_TOL = 1e-8
# Scale-relative floor used when Omega is (numerically) the zero matrix.
ZERO_TOL = 1e-8


class Family(str, enum.Enum):
    UC = "UC"
    HC0 = "HC0"
    HC1 = "HC1"
    HC2 = "HC2"
    HC3 = "HC3"
    HC4 = "HC4"
    UCR = "UCR"
    HC0R = "HC0R"
    HC1R = "HC1R"
    HC2R = "HC2R"
    HC3R = "HC3R"
    HC4R = "HC4R"

    @property
    def restricted(self) -> bool:
        return self.value.endswith("R")

    @property
    def robust(self) -> bool:
        return self.value.startswith("HC")

    @property
    def hc_type(self) -> int | None:
        return int(self.value[2]) if self.robust else None

    @classmethod
    def parse(cls, name) -> "Family":
        if isinstance(name, Family):
            return name
        try:
            return cls(str(name).upper())
        except ValueError:
            raise ValueError(f"unknown statistic {name!r}") from None


ALL_FAMILIES = tuple(Family)
UNRESTRICTED = tuple(f for f in Family if not f.restricted)
RESTRICTED = tuple(f for f in Family if f.restricted)


@dataclass(frozen=True, eq=False)
class StatisticSpec:
    family: Family
    weights: np.ndarray

    @property
    def restricted(self) -> bool:
        return self.family.restricted

    @property
    def robust(self) -> bool:
        return self.family.robust

    @property
    def name(self) -> str:
        return self.family.value


@dataclass(frozen=True)
class StatisticValue:
    value: float
    degenerate: bool


def hc_weights(hc_type: int, h: np.ndarray, n: int, dim: int, unit: np.ndarray) -> np.ndarray:
    """HC-type weights for leverages ``h`` of a projector of rank ``dim``.

    ``unit`` flags the coordinates whose leverage is one; they get weight 1.
    """
    h = np.asarray(h, dtype=float)
    if hc_type == 0:
        d = np.ones(n)
    elif hc_type == 1:
        d = np.full(n, n / (n - dim))
    else:
        one_minus = np.where(unit, 1.0, 1.0 - h)
        if hc_type == 2:
            d = 1.0 / one_minus
        elif hc_type == 3:
            d = one_minus ** -2.0
        elif hc_type == 4:
            delta = np.zeros(n) if dim == 0 else np.minimum(n * h / dim, 4.0)
            d = one_minus ** (-delta)
        else:
            raise ValueError(f"unknown HC type {hc_type}")
    d = np.where(unit, 1.0, d)
    return d


def make_spec(problem: TestingProblem, family) -> StatisticSpec:
    """Statistic spec with frozen weights; weights never depend on r."""
    family = Family.parse(family)
    n, k, q = problem.n, problem.k, problem.q
    if not family.robust:
        d = np.ones(n)
    elif family.restricted:
        d = hc_weights(family.hc_type, problem.restricted_hat_diag, n, k - q, problem.in_m0lin)
    else:
        d = hc_weights(family.hc_type, problem.hat_diag, n, k, problem.in_span_x)
    d = np.ascontiguousarray(d, dtype=float)
    d.setflags(write=False)
    return StatisticSpec(family=family, weights=d)


def _w_outer(problem: TestingProblem) -> np.ndarray:
    """n x q^2 matrix with rows vec(w_i w_i') where w_i is column i of W."""
    cache = problem._cache
    if "w_outer" not in cache:
        W = problem.W
        cache["w_outer"] = np.einsum("ai,bi->iab", W, W).reshape(problem.n, -1)
    return cache["w_outer"]


def evaluate_centered(problem: TestingProblem, spec: StatisticSpec, Z) -> tuple[np.ndarray, np.ndarray]:
    """Statistic values at ``mu0 + z`` for each row ``z`` of ``Z``.

    Returns ``(values, degenerate)`` arrays. This is the vectorized core used by
    both :func:`evaluate` and the Monte Carlo routines.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    n, k, q = problem.n, problem.k, problem.q
    fam = spec.family
    znorm2 = np.einsum("ij,ij->i", Z, Z)
    s = Z @ problem.W.T  # R beta_hat - r, N x q
    if fam.restricted:
        U = Z @ problem.proj_m0lin_perp
    else:
        U = Z @ problem.proj_resid
    usq = U * U

    if not fam.robust:
        dof = n - (k - q) if fam.restricted else n - k
        ssr = usq.sum(axis=1)
        degenerate = ssr <= (ZERO_TOL**2) * znorm2
        quad = np.einsum("ia,ab,ib->i", s, problem.G_inv, s)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(degenerate, 0.0, quad * dof / np.where(degenerate, 1.0, ssr))
        return np.maximum(vals, 0.0), degenerate

    d = spec.weights
    scale = float(np.max(d)) * float(np.sum(problem.W * problem.W))
    floor = (ZERO_TOL**2) * scale * znorm2
    if q == 1:
        w = problem.W[0]
        omega = usq @ (d * w * w)
        degenerate = omega <= floor
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(degenerate, 0.0, s[:, 0] ** 2 / np.where(degenerate, 1.0, omega))
        return vals, degenerate

    omega = ((usq * d) @ _w_outer(problem)).reshape(-1, q, q)
    omega = 0.5 * (omega + np.swapaxes(omega, 1, 2))
    eig = np.linalg.eigvalsh(omega)
    degenerate = (eig[:, 0] <= SINGULAR_TOL * eig[:, -1]) | (eig[:, -1] <= floor)
    vals = np.zeros(Z.shape[0])
    ok = ~degenerate
    if np.any(ok):
        sol = np.linalg.solve(omega[ok], s[ok][:, :, None])[:, :, 0]
        vals[ok] = np.einsum("ia,ia->i", s[ok], sol)
    return np.maximum(vals, 0.0), degenerate


def evaluate(problem: TestingProblem, spec: StatisticSpec, y) -> StatisticValue:
    """Statistic value at a single observation vector ``y``."""
    y = np.asarray(y, dtype=float)
    if y.shape != (problem.n,):
        from .errors import DimensionMismatch

        raise DimensionMismatch(f"y must have length {problem.n}")
    vals, deg = evaluate_centered(problem, spec, (y - problem.mu0)[None, :])
    return StatisticValue(value=float(vals[0]), degenerate=bool(deg[0]))


def evaluate_many(problem: TestingProblem, spec: StatisticSpec, Y) -> np.ndarray:
    """Statistic values for each row of ``Y`` (observations, not centered)."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    return evaluate_centered(problem, spec, Y - problem.mu0)[0]


def omega_matrix(problem: TestingProblem, spec: StatisticSpec, y) -> np.ndarray:
    """The robust variance estimator (Omega-hat or Omega-tilde) at ``y``."""
    if not spec.robust:
        raise ValueError("Omega is defined for HC families only")
    B = b_matrix(problem, spec, y)[0]
    return (B * spec.weights) @ B.T


def b_matrix(problem: TestingProblem, spec: StatisticSpec, y) -> tuple[np.ndarray, int]:
    """``R (X'X)^{-1} X' diag(u)`` with u the residual matching ``spec``, plus its rank.

    The rank uses the same test as the singularity convention of
    :func:`evaluate`, so ``rank < q`` exactly when the statistic is set to 0.
    """
    if not spec.robust:
        raise ValueError("B is defined for HC families only")
    y = np.asarray(y, dtype=float)
    z = y - problem.mu0
    if spec.restricted:
        u = z @ problem.proj_m0lin_perp
    else:
        u = z @ problem.proj_resid
    B = problem.W * u[None, :]
    Bd = B * np.sqrt(spec.weights)[None, :]
    sv = np.linalg.svd(Bd, compute_uv=False)
    ev = sv**2
    scale = float(np.max(spec.weights)) * float(np.sum(problem.W * problem.W))
    floor = (ZERO_TOL**2) * scale * float(z @ z)
    if ev.size == 0 or ev[0] <= floor:
        return B, 0
    rank = int(np.sum((ev > SINGULAR_TOL * ev[0]) & (ev > floor)))
    return B, rank


def g_transform(problem: TestingProblem, t_uc_value):
    """Map a T_uc value to the T-tilde_uc value at the same point.

    g(x) = (n - (k - q)) x / (n - k + x), strictly increasing from 0 towards
    n - (k - q).
    """
    n, k, q = problem.n, problem.k, problem.q
    x = np.asarray(t_uc_value, dtype=float)
    if np.any(x < 0):
        raise ValueError("g is defined for nonnegative arguments")
    out = (n - (k - q)) * x / (n - k + x)
    return float(out) if out.ndim == 0 else out


def statistic_upper_bound(problem: TestingProblem, spec: StatisticSpec) -> float:
    """Supremum of the statistic when it is known to be finite, else inf.

    For q = 1 the restricted robust statistic is a Rayleigh quotient
    ``(v'w)^2 / w'Dw`` over ``w`` in the range of the restricted residual
    projector, with ``D = diag(d v^2)``, so its supremum is ``b'M^+b`` with
    ``b = Q'v`` and ``M = Q'DQ`` for an orthonormal basis ``Q`` of that range.
    """
    fam = spec.family
    if fam is Family.UCR:
        return float(problem.n - (problem.k - problem.q))
    if not (fam.robust and fam.restricted and problem.q == 1):
        return float("inf")
    key = ("upper", spec.name)
    if key in problem._cache:
        return problem._cache[key]
    v = problem.W[0]
    Q = orthonormal_basis(problem.proj_m0lin_perp)
    b = Q.T @ v
    M = Q.T @ (Q * (spec.weights * v * v)[:, None])
    lam, vecs = np.linalg.eigh(0.5 * (M + M.T))
    top = float(np.max(np.abs(lam))) if lam.size else 0.0
    live = lam > SINGULAR_TOL * top if top > 0 else np.zeros(lam.shape, bool)
    proj = vecs.T @ b
    if np.any(np.abs(proj[~live]) > SINGULAR_TOL * max(np.linalg.norm(b), 1e-300)):
        bound = float("inf")
    else:
        bound = float(np.sum(proj[live] ** 2 / lam[live]))
    problem._cache[key] = bound
    return bound
