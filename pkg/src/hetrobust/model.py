"""Testing problem and the linear-algebra objects derived from it.

A :class:`TestingProblem` bundles the design ``X`` (n x k), the restriction
``R beta = r`` (q rows) and everything downstream code needs: projectors onto
``span(X)`` and onto the restricted mean space ``M0lin = {X beta : R beta = 0}``,
leverages, a point ``mu0`` of the null mean set and the index sets I0/I1.
All arrays are read-only once the problem is built.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DimensionMismatch, RankDeficient

RANK_TOL = 1e-8


def numerical_rank(a: np.ndarray, tol: float = RANK_TOL) -> int:
    """Rank of ``a`` counting singular values above ``tol`` times the largest."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def orthonormal_basis(a: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis (columns) of the column space of ``a``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[1] == 0:
        return np.zeros((a.shape[0], 0))
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((a.shape[0], 0))
    return u[:, s > tol * s[0]]


def null_space(a: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the null space of ``a`` (as columns)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    rank = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    return vt[rank:].T.copy()


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class IndexSets:
    I0: tuple[int, ...]
    I1: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class TestingProblem:
    """Design, restriction and derived geometry. Build with :func:`build_problem`."""

    __test__ = False  # keep pytest from collecting this class

    X: np.ndarray
    R: np.ndarray
    r: np.ndarray
    hat_diag: np.ndarray
    proj_x: np.ndarray
    proj_resid: np.ndarray
    m0lin_basis: np.ndarray
    proj_m0lin: np.ndarray
    proj_m0lin_perp: np.ndarray
    restricted_hat_diag: np.ndarray
    beta0: np.ndarray
    mu0: np.ndarray
    W: np.ndarray  # R (X'X)^{-1} X', q x n
    G: np.ndarray  # R (X'X)^{-1} R', q x q
    G_inv: np.ndarray
    in_span_x: np.ndarray  # bool per i: e_i in span(X)
    in_m0lin: np.ndarray  # bool per i: e_i in M0lin
    index_sets: IndexSets
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.R.shape[0]

    @property
    def v(self) -> np.ndarray:
        """The vector X (X'X)^{-1} R' for a scalar restriction."""
        if self.q != 1:
            raise ValueError("v is defined for q = 1 only")
        return self.W[0]

    @property
    def I0(self) -> tuple[int, ...]:
        return self.index_sets.I0

    @property
    def I1(self) -> tuple[int, ...]:
        return self.index_sets.I1

    def with_r(self, r) -> "TestingProblem":
        """Same design and R with a different right-hand side."""
        return build_problem(self.X, self.R, r)

    def residuals(self, y) -> tuple[np.ndarray, np.ndarray]:
        return residuals(self, y)


def build_problem(X, R, r=None) -> TestingProblem:
    """Validate inputs and compute all derived objects once."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if X.ndim != 2 or R.ndim != 2:
        raise DimensionMismatch("X and R must be matrices")
    n, k = X.shape
    q = R.shape[0]
    if R.shape[1] != k:
        raise DimensionMismatch(f"R has {R.shape[1]} columns, X has {k}")
    r = np.zeros(q) if r is None else np.atleast_1d(np.asarray(r, dtype=float)).ravel()
    if r.shape != (q,):
        raise DimensionMismatch(f"r has length {r.shape[0]}, expected {q}")
    if not (1 <= k < n):
        raise DimensionMismatch(f"need 1 <= k < n, got n={n}, k={k}")
    if not (1 <= q <= k):
        raise DimensionMismatch(f"need 1 <= q <= k, got q={q}, k={k}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(R)) and np.all(np.isfinite(r))):
        raise DimensionMismatch("inputs must be finite")
    if numerical_rank(X) < k:
        raise RankDeficient("X does not have full column rank")
    if numerical_rank(R) < q:
        raise RankDeficient("R does not have full row rank")

    Q, Rx = np.linalg.qr(X)
    proj_x = Q @ Q.T
    proj_resid = np.eye(n) - proj_x
    hat_diag = np.clip(np.einsum("ij,ij->i", Q, Q), 0.0, 1.0)

    # W = R (X'X)^{-1} X' = R Rx^{-1} Q'
    RinvRx = linalg.solve_triangular(Rx, R.T, trans="T", lower=False).T  # R Rx^{-1}
    W = RinvRx @ Q.T
    G = RinvRx @ RinvRx.T
    G = 0.5 * (G + G.T)
    G_inv = np.linalg.inv(G)

    N = null_space(R)
    m0lin_basis = orthonormal_basis(X @ N) if N.shape[1] else np.zeros((n, 0))
    proj_m0lin = m0lin_basis @ m0lin_basis.T
    proj_m0lin_perp = np.eye(n) - proj_m0lin
    restricted_hat_diag = np.clip(np.einsum("ij,ij->i", m0lin_basis, m0lin_basis), 0.0, 1.0)

    beta0 = np.linalg.pinv(R) @ r
    mu0 = X @ beta0

    eye = np.eye(n)
    in_span_x = np.array([numerical_rank(np.column_stack([Q, eye[:, i]])) == k for i in range(n)])
    d0 = m0lin_basis.shape[1]
    in_m0lin = np.array(
        [numerical_rank(np.column_stack([m0lin_basis, eye[:, i]])) == d0 for i in range(n)]
    )
    I0 = tuple(int(i) for i in np.flatnonzero(in_m0lin))
    I1 = tuple(int(i) for i in np.flatnonzero(~in_m0lin))

    return TestingProblem(
        X=_frozen(X),
        R=_frozen(R),
        r=_frozen(r),
        hat_diag=_frozen(hat_diag),
        proj_x=_frozen(proj_x),
        proj_resid=_frozen(proj_resid),
        m0lin_basis=_frozen(m0lin_basis),
        proj_m0lin=_frozen(proj_m0lin),
        proj_m0lin_perp=_frozen(proj_m0lin_perp),
        restricted_hat_diag=_frozen(restricted_hat_diag),
        beta0=_frozen(beta0),
        mu0=_frozen(mu0),
        W=_frozen(W),
        G=_frozen(G),
        G_inv=_frozen(G_inv),
        in_span_x=_frozen_bool(in_span_x),
        in_m0lin=_frozen_bool(in_m0lin),
        index_sets=IndexSets(I0=I0, I1=I1),
    )


def _frozen_bool(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=bool)
    a.setflags(write=False)
    return a


def residuals(problem: TestingProblem, y) -> tuple[np.ndarray, np.ndarray]:
    """Unrestricted and restricted least-squares residuals of ``y``."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != problem.n:
        raise DimensionMismatch(f"y has length {y.shape[-1]}, expected {problem.n}")
    u_hat = y @ problem.proj_resid
    u_tilde = (y - problem.mu0) @ problem.proj_m0lin_perp
    return u_hat, u_tilde
