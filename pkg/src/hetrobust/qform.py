"""Exact rejection probabilities for scalar restrictions.

For q = 1 every statistic satisfies ``T(mu0 + z) >= c  <=>  z'A z >= 0``
off a null set, with ``A`` built by :func:`reduction_matrix`. Under
``z ~ N(Sigma^{1/2} nu, Sigma)`` the form is a weighted sum of independent
noncentral chi-square(1) variables, and its tail is computed by inverting
the characteristic function (Imhof's integral). The integral is taken over
``t = log u`` with the trapezoid rule, which converges geometrically because
the integrand is analytic in a strip around the real axis. The upper limit
comes from an explicit bound on the neglected tail.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernel
from .errors import AccuracyNotReached, DegenerateReduction, NotScalarRestriction
from .model import TestingProblem
from .statistics import StatisticSpec

DROP_TOL = 1e-12
DEFAULT_ACC = 1e-3
DEFAULT_LIM = 30_000
_CHUNK = 1024


@dataclass(frozen=True, eq=False)
class ReductionMatrix:
    A: np.ndarray
    statistic: StatisticSpec
    c: float
    exceptional_set: str

    @property
    def n(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True, eq=False)
class QuadraticFormSpectrum:
    lambdas: np.ndarray
    ncps: np.ndarray


def reduction_matrix(problem: TestingProblem, spec: StatisticSpec, c: float) -> ReductionMatrix:
    """Matrix ``A`` with ``T(mu0 + z) >= c`` iff ``z'Az >= 0`` off the exceptional set."""
    if problem.q != 1:
        raise NotScalarRestriction("the quadratic-form reduction needs q = 1")
    c = float(c)
    n, k, q = problem.n, problem.k, problem.q
    v = problem.v
    vv = np.outer(v, v)
    fam = spec.family
    if fam.restricted:
        P = problem.proj_m0lin_perp
        tag = "B_tilde" if fam.robust else "M0"
    else:
        P = problem.proj_resid
        tag = "B" if fam.robust else "span(X)"
    if fam.robust:
        second = (P * (v * v * spec.weights)[None, :]) @ P
    else:
        dof = n - (k - q) if fam.restricted else n - k
        second = (v @ v / dof) * P
    A = vv - c * second
    A = 0.5 * (A + A.T)
    if fam.robust and fam.restricted and c != 0.0:
        ref = np.abs(vv).max() + abs(c) * np.abs(second).max()
        if np.abs(A).max() <= 1e-10 * ref:
            raise DegenerateReduction("the restricted statistic is constant; A vanishes at this c")
    A.setflags(write=False)
    return ReductionMatrix(A=A, statistic=spec, c=c, exceptional_set=tag)


def _as_matrix(A) -> np.ndarray:
    return A.A if isinstance(A, ReductionMatrix) else np.asarray(A, dtype=float)


def spectrum(A, sigma, nu=None) -> QuadraticFormSpectrum:
    """Eigenvalues and noncentralities of ``zeta' Sigma^{1/2} A Sigma^{1/2} zeta``, ``zeta ~ N(nu, I)``."""
    A = _as_matrix(A)
    tau_sq = np.asarray(getattr(sigma, "tau_sq", sigma), dtype=float)
    s = np.sqrt(tau_sq)
    M = s[:, None] * A * s[None, :]
    M = 0.5 * (M + M.T)
    if nu is None or not np.any(nu):
        lam = np.linalg.eigvalsh(M)
        ncp = np.zeros_like(lam)
    else:
        lam, vecs = np.linalg.eigh(M)
        ncp = (vecs.T @ np.asarray(nu, dtype=float)) ** 2
    keep = np.abs(lam) > DROP_TOL * np.max(np.abs(lam)) if lam.size and np.any(lam) else np.zeros(lam.shape, bool)
    lam, ncp = lam[keep], ncp[keep]
    order = np.argsort(-lam, kind="stable")
    return QuadraticFormSpectrum(lambdas=lam[order], ncps=ncp[order])


def _grid_step(eps: float, counts: np.ndarray, ncp_total: np.ndarray) -> np.ndarray:
    # The integrand is analytic for |Im t| < pi/2. On the line Im t = pi/4 its
    # modulus grows roughly like exp(p/4 + ncp/2), and the trapezoid error is
    # about that size times exp(-pi^2 / (2h)).
    budget = math.log(1.0 / eps) + 0.25 * counts + 0.5 * ncp_total + 4.0
    return np.minimum(0.5, math.pi**2 / (2.0 * budget))


def _prepare(lam: np.ndarray, ncp: np.ndarray, acc: float, lim: int):
    """Sort rows by |lambda|, scale, and compute grid limits per row."""
    m, p = lam.shape
    absl = np.abs(lam)
    order = np.argsort(-absl, axis=1, kind="stable")
    lam = np.take_along_axis(lam, order, axis=1)
    ncp = np.take_along_axis(ncp, order, axis=1)
    absl = np.take_along_axis(absl, order, axis=1)
    top = absl[:, :1]
    safe_top = np.where(top > 0, top, 1.0)
    lam = lam / safe_top
    absl = absl / safe_top
    nonzero = absl > 0
    counts = nonzero.sum(axis=1)
    eps = acc / 4.0
    # left truncation: |integrand| <= 0.5 * sum(|l| (1 + d^2)) * e^t
    mass = np.sum(absl * (1.0 + ncp), axis=1)
    t_lo = np.log(np.pi * eps / np.maximum(mass, 1e-300))
    # right truncation: bound rho below by the product of the m largest |l u|^{1/2}
    with np.errstate(divide="ignore"):
        logs = np.where(nonzero, np.log(np.where(nonzero, absl, 1.0)), -np.inf)
    cum = np.cumsum(np.where(nonzero, logs, 0.0), axis=1)
    mm = np.arange(1, p + 1)[None, :]
    log_u = (2.0 / mm) * (np.log(4.0 / (mm * np.pi * eps)) - 0.5 * cum)
    log_u = np.where(nonzero, log_u, np.inf)
    t_hi = np.min(log_u, axis=1)
    t_hi = np.maximum(t_hi, t_lo)
    h = _grid_step(eps, counts, np.sum(ncp, axis=1))
    nsteps = np.ceil((t_hi - t_lo) / h).astype(np.intp)
    truncated = nsteps > lim
    nsteps = np.minimum(nsteps, lim)
    return lam, ncp, counts.astype(np.intp), t_lo, nsteps, h, truncated


def tail_probs(lams, ncps=None, acc: float = DEFAULT_ACC, lim: int = DEFAULT_LIM,
               backend: str | None = None, return_flags: bool = False):
    """``P(sum_j lam_j chi2_1(ncp_j) >= 0)`` for each row of ``lams``.

    Rows may be padded with zeros. Rows whose nonzero weights share one sign
    are answered directly (1 if all positive, 0 if all negative).
    """
    lam = np.atleast_2d(np.asarray(lams, dtype=float))
    ncp = np.zeros_like(lam) if ncps is None else np.atleast_2d(np.asarray(ncps, dtype=float))
    m = lam.shape[0]
    out = np.empty(m)
    flags = np.zeros(m, dtype=bool)
    has_pos = np.any(lam > 0, axis=1)
    has_neg = np.any(lam < 0, axis=1)
    out[~has_neg] = 1.0
    out[has_neg & ~has_pos] = 0.0
    mixed = np.flatnonzero(has_pos & has_neg)
    if mixed.size:
        integrate = _select_backend(backend)
        for start in range(0, mixed.size, _CHUNK):
            rows = mixed[start:start + _CHUNK]
            L, C, counts, t_lo, nsteps, h, trunc = _prepare(lam[rows], ncp[rows], acc, lim)
            sums = integrate(np.ascontiguousarray(L), np.ascontiguousarray(C),
                             np.ascontiguousarray(counts), np.ascontiguousarray(t_lo),
                             np.ascontiguousarray(nsteps), np.ascontiguousarray(h))
            out[rows] = np.clip(0.5 + h * np.asarray(sums) / np.pi, 0.0, 1.0)
            flags[rows] = trunc
    if return_flags:
        return out, flags
    return out


def _select_backend(backend: str | None):
    if backend is None:
        return _kernel.integrate_rows
    if backend == "python":
        return _kernel.integrate_rows_py
    if backend == "compiled":
        if _kernel.integrate_rows_ext is None:
            raise RuntimeError("compiled kernel is not available")
        return _kernel.integrate_rows_ext
    raise ValueError(f"unknown backend {backend!r}")


def tail_prob_nonneg(spec: QuadraticFormSpectrum, acc: float = DEFAULT_ACC, lim: int = DEFAULT_LIM,
                     strict: bool = False) -> float:
    """``P(sum_j lambda_j chi2_1(delta_j^2) >= 0)`` to absolute accuracy ``acc``.

    If the node budget ``lim`` is too small to certify ``acc`` the value is still
    returned with a warning, or :class:`AccuracyNotReached` is raised when
    ``strict`` is true.
    """
    if acc <= 0:
        raise ValueError("acc must be positive")
    lam = np.asarray(spec.lambdas, dtype=float)
    if lam.size == 0 or not np.any(lam):
        raise ValueError("the spectrum has no nonzero eigenvalue")
    val, flags = tail_probs(lam[None, :], np.asarray(spec.ncps, dtype=float)[None, :], acc, lim,
                            return_flags=True)
    if flags[0]:
        msg = f"node budget {lim} too small for acc={acc}"
        if strict:
            raise AccuracyNotReached(msg, value=float(val[0]))
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return float(val[0])


def noncentral_f_tail(d1: int, d2: int, ncp: float, x: float, acc: float = 1e-6) -> float:
    """``P(F >= x)`` for F noncentral with (d1, d2) degrees of freedom.

    Uses the representation ``chi2'_{d1}(ncp) - (x d1 / d2) chi2_{d2} >= 0``.
    """
    if d1 < 1 or d2 < 1 or ncp < 0 or x < 0:
        raise ValueError("need d1, d2 >= 1, ncp >= 0, x >= 0")
    if x == 0:
        return 1.0
    lam = np.concatenate([np.ones(d1), np.full(d2, -x * d1 / d2)])
    nc = np.zeros(d1 + d2)
    nc[0] = ncp
    return float(tail_probs(lam[None, :], nc[None, :], acc)[0])


def rejection_probs(A, tau_sq, nu=None, acc: float = DEFAULT_ACC, lim: int = DEFAULT_LIM,
                    backend: str | None = None) -> np.ndarray:
    """``P(z'Az >= 0)`` for ``z = Sigma^{1/2}(zeta)``, ``zeta ~ N(nu, I)``, per row of ``tau_sq``.

    With ``nu`` omitted this is the null rejection probability for every
    candidate diagonal covariance in ``tau_sq`` (shape m x n).
    """
    A = _as_matrix(A)
    T = np.atleast_2d(np.asarray(tau_sq, dtype=float))
    m, n = T.shape
    out = np.empty(m)
    for start in range(0, m, _CHUNK):
        S = np.sqrt(T[start:start + _CHUNK])
        M = S[:, :, None] * A[None, :, :] * S[:, None, :]
        if nu is None:
            lam = np.linalg.eigvalsh(M)
            ncp = np.zeros_like(lam)
        else:
            lam, vecs = np.linalg.eigh(M)
            nuv = np.atleast_2d(np.asarray(nu, dtype=float))
            if nuv.shape[0] == 1:
                nuv = np.broadcast_to(nuv, (S.shape[0], n))
            else:
                nuv = nuv[start:start + _CHUNK]
            ncp = np.einsum("bij,bi->bj", vecs, nuv) ** 2
        big = np.max(np.abs(lam), axis=1, keepdims=True)
        lam = np.where(np.abs(lam) > DROP_TOL * big, lam, 0.0)
        ncp = np.where(lam != 0.0, ncp, 0.0)
        out[start:start + S.shape[0]] = tail_probs(lam, ncp, acc, lim, backend=backend)
    return out
