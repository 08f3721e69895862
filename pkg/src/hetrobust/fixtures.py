"""Standard designs used in examples, tests and the CLI."""

from __future__ import annotations

import numpy as np

from .model import TestingProblem, build_problem


def location_model(n: int) -> TestingProblem:
    """Intercept only, testing that the mean is zero."""
    return build_problem(np.ones((n, 1)), np.ones((1, 1)), np.zeros(1))


def two_group(n: int, n1: int) -> TestingProblem:
    """Group indicator columns (first n1 rows in group 1), testing equal means."""
    if not (1 <= n1 < n):
        raise ValueError("need 1 <= n1 < n")
    X = np.zeros((n, 2))
    X[:n1, 0] = 1.0
    X[n1:, 1] = 1.0
    return build_problem(X, np.array([[1.0, -1.0]]), np.zeros(1))


def k_group(sizes) -> TestingProblem:
    """Indicator design for several groups, testing that all means are equal."""
    sizes = [int(s) for s in sizes]
    m = len(sizes)
    if m < 2 or min(sizes) < 1:
        raise ValueError("need at least two nonempty groups")
    n = sum(sizes)
    X = np.zeros((n, m))
    edges = np.cumsum([0] + sizes)
    for j in range(m):
        X[edges[j]:edges[j + 1], j] = 1.0
    R = np.zeros((m - 1, m))
    R[:, 0] = 1.0
    R[np.arange(m - 1), np.arange(1, m)] = -1.0
    return build_problem(X, R, np.zeros(m - 1))


def bounded_example() -> TestingProblem:
    """n = 3 design where the restricted HC0 statistic is bounded."""
    X = np.array([[1.0, 1.0], [1.0, -1.0], [1.0, 0.0]])
    return build_problem(X, np.array([[0.0, 1.0]]), np.zeros(1))


def high_leverage(n: int = 30) -> TestingProblem:
    """Intercept plus x = (10, cos 2, ..., cos n); tests the slope."""
    x = np.cos(np.arange(1, n + 1, dtype=float))
    x[0] = 10.0
    X = np.column_stack([np.ones(n), x])
    return build_problem(X, np.array([[0.0, 1.0]]), np.zeros(1))


def intercept_design(x) -> TestingProblem:
    """Intercept plus one regressor, testing the slope."""
    x = np.asarray(x, dtype=float)
    X = np.column_stack([np.ones(x.size), x])
    return build_problem(X, np.array([[0.0, 1.0]]), np.zeros(1))


def two_group_sigma(n: int, n1: int, a: float) -> np.ndarray:
    """Variances a/n1 in group 1 and (10 - a)/(n - n1) in group 2, scaled to unit trace."""
    tau = np.empty(n)
    tau[:n1] = a / n1
    tau[n1:] = (10.0 - a) / (n - n1)
    return tau / tau.sum()


def high_leverage_sigma(n: int, a: int) -> np.ndarray:
    """Variance (7a + 1)/n on the first observation, the rest shared equally."""
    tau = np.full(n, (n - 7 * a - 1) / ((n - 1) * n))
    tau[0] = (7 * a + 1) / n
    return tau / tau.sum()
