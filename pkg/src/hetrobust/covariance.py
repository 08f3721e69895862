"""Heteroskedasticity models, their points, and candidate generation.

A point of a model is a positive vector ``tau_sq`` summing to one (the
diagonal of Sigma). Local searches run over an unconstrained parameter via a
softmax map, so every iterate stays strictly inside the model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleModel

NEAR_DEGENERATE_WEIGHT = 0.9999
_TINY = 1e-300


@dataclass(frozen=True)
class CovarianceModel:
    kind: str = "HetFull"
    group_sizes: tuple[int, ...] = ()
    tau_star_sq: float = 0.0

    @property
    def label(self) -> str:
        if self.kind == "Grouped":
            return "Grouped(" + ",".join(str(g) for g in self.group_sizes) + ")"
        if self.kind == "BoundedBelow":
            return f"BoundedBelow({self.tau_star_sq!r})"
        return "HetFull"

    def validate(self, n: int) -> None:
        if self.kind == "HetFull":
            return
        if self.kind == "Grouped":
            if not self.group_sizes or any(int(g) < 1 for g in self.group_sizes):
                raise InfeasibleModel("group sizes must be positive integers")
            if sum(self.group_sizes) != n:
                raise InfeasibleModel(f"group sizes sum to {sum(self.group_sizes)}, expected {n}")
            return
        if self.kind == "BoundedBelow":
            if not (0.0 < self.tau_star_sq < 1.0 / n):
                raise InfeasibleModel("the lower bound must lie strictly between 0 and 1/n")
            return
        raise InfeasibleModel(f"unknown covariance model {self.kind!r}")

    def groups(self, n: int) -> list[np.ndarray]:
        """Index blocks of consecutive observations sharing a variance."""
        if self.kind != "Grouped":
            return [np.array([i]) for i in range(n)]
        edges = np.cumsum((0,) + tuple(self.group_sizes))
        return [np.arange(edges[j], edges[j + 1]) for j in range(len(self.group_sizes))]

    def param_dim(self, n: int) -> int:
        if self.kind == "Grouped":
            return len(self.group_sizes) - 1
        return n - 1

    def from_params(self, theta: np.ndarray, n: int) -> np.ndarray:
        """Map an unconstrained parameter to a point of the model."""
        theta = np.asarray(theta, dtype=float)
        full = np.append(theta, 0.0)
        w = np.exp(full - full.max())
        w /= w.sum()
        if self.kind == "Grouped":
            sizes = np.asarray(self.group_sizes)
            tau = np.repeat(w / sizes, sizes)
        elif self.kind == "BoundedBelow":
            tau = self.tau_star_sq + (1.0 - n * self.tau_star_sq) * w
        else:
            tau = w
        tau = np.maximum(tau, _TINY)
        return tau / tau.sum()

    def to_params(self, tau_sq: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`from_params` (up to clipping at the boundary)."""
        tau = np.asarray(tau_sq, dtype=float)
        n = tau.size
        if self.kind == "Grouped":
            sizes = np.asarray(self.group_sizes)
            edges = np.cumsum(np.r_[0, sizes])
            w = np.array([tau[edges[j]:edges[j + 1]].sum() for j in range(sizes.size)])
        elif self.kind == "BoundedBelow":
            w = (tau - self.tau_star_sq) / (1.0 - n * self.tau_star_sq)
        else:
            w = tau
        w = np.maximum(w, 1e-200)
        logw = np.log(w)
        return logw[:-1] - logw[-1]

    def project(self, tau_sq: np.ndarray) -> np.ndarray:
        """Map nonnegative weights onto the model (rows processed independently)."""
        T = np.atleast_2d(np.asarray(tau_sq, dtype=float)).copy()
        T = np.maximum(T, 0.0)
        T /= T.sum(axis=1, keepdims=True)
        n = T.shape[1]
        if self.kind == "Grouped":
            for cols in self.groups(n):
                T[:, cols] = T[:, cols].mean(axis=1, keepdims=True)
        elif self.kind == "BoundedBelow":
            T = _clamp_renormalize(T, self.tau_star_sq)
        T = np.maximum(T, _TINY)
        T /= T.sum(axis=1, keepdims=True)
        return T if np.ndim(tau_sq) == 2 else T[0]

    def contains(self, tau_sq, tol: float = 1e-10) -> bool:
        tau = np.asarray(tau_sq, dtype=float)
        if tau.ndim != 1 or np.any(tau <= 0) or abs(tau.sum() - 1.0) > 1e-12 * tau.size:
            return False
        if self.kind == "Grouped":
            return all(np.ptp(tau[c]) <= tol * tau[c].max() for c in self.groups(tau.size))
        if self.kind == "BoundedBelow":
            return bool(np.all(tau >= self.tau_star_sq * (1 - tol)))
        return True


def _clamp_renormalize(T: np.ndarray, floor: float) -> np.ndarray:
    """Raise entries below ``floor`` to it, taking the excess from the others proportionally."""
    T = T.copy()
    clamped = np.zeros(T.shape, dtype=bool)
    for _ in range(T.shape[1] + 1):
        newly = (T < floor) & ~clamped
        if not np.any(newly):
            break
        clamped |= newly
        free = np.where(clamped, 0.0, T)
        budget = 1.0 - floor * clamped.sum(axis=1, keepdims=True)
        scale = budget / np.maximum(free.sum(axis=1, keepdims=True), _TINY)
        T = np.where(clamped, floor, free * scale)
    return T


def het_full() -> CovarianceModel:
    return CovarianceModel("HetFull")


def grouped(group_sizes) -> CovarianceModel:
    return CovarianceModel("Grouped", tuple(int(g) for g in group_sizes))


def bounded_below(tau_star_sq: float) -> CovarianceModel:
    return CovarianceModel("BoundedBelow", (), float(tau_star_sq))


@dataclass(frozen=True, eq=False)
class CovarianceCandidate:
    tau_sq: np.ndarray

    def __post_init__(self):
        tau = np.ascontiguousarray(self.tau_sq, dtype=float)
        if tau.ndim != 1 or np.any(tau <= 0) or not np.isfinite(tau).all():
            raise ValueError("tau_sq must be a positive vector")
        if abs(tau.sum() - 1.0) > 1e-12 * max(tau.size, 1):
            raise ValueError("tau_sq must sum to one")
        tau.setflags(write=False)
        object.__setattr__(self, "tau_sq", tau)

    @classmethod
    def normalized(cls, tau_sq) -> "CovarianceCandidate":
        tau = np.asarray(tau_sq, dtype=float)
        return cls(tau / tau.sum())

    def to_list(self) -> list[float]:
        return [float(t) for t in self.tau_sq]


def near_degenerate(n: int, i: int, weight: float = NEAR_DEGENERATE_WEIGHT) -> np.ndarray:
    tau = np.full(n, (1.0 - weight) / (n - 1))
    tau[i] = weight
    return tau


def generate_candidates(n: int, model: CovarianceModel, count: int, seed, a_matrix=None) -> np.ndarray:
    """Starting points for the size search, one per row.

    A quarter of the random budget is uniform on the simplex and the rest are
    squared, normalized Gaussian draws. Added to these are the n
    near-degenerate points, the homoskedastic point, and (when ``a_matrix``
    is given) the near-degenerate point at the largest diagonal entry of A,
    which maximizes the expected quadratic form over the simplex.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    model.validate(n)
    rng = np.random.default_rng(seed)
    n_unif = count // 4
    n_sq = count - n_unif
    unif = rng.exponential(size=(n_unif, n))
    sq = rng.standard_normal((n_sq, n)) ** 2
    rows = [unif / unif.sum(axis=1, keepdims=True), sq / sq.sum(axis=1, keepdims=True)]
    rows.append(np.vstack([near_degenerate(n, i) for i in range(n)]))
    rows.append(np.full((1, n), 1.0 / n))
    if a_matrix is not None:
        A = getattr(a_matrix, "A", a_matrix)
        rows.append(near_degenerate(n, int(np.argmax(np.diag(A))))[None, :])
    return model.project(np.vstack(rows))
