import numpy as np
import pytest

from hetrobust.errors import DimensionMismatch, RankDeficient
from hetrobust.fixtures import k_group, location_model, two_group
from hetrobust.model import build_problem, numerical_rank, residuals

from conftest import random_problem


class TestBuildProblem:
    def test_location_model_index_sets(self):
        p = location_model(6)
        assert p.m0lin_basis.shape == (6, 0)
        assert p.I0 == ()
        assert p.I1 == tuple(range(6))

    def test_two_group_m0lin_is_constant_vector(self):
        p = two_group(8, 3)
        assert p.m0lin_basis.shape == (8, 1)
        b = p.m0lin_basis[:, 0]
        assert np.allclose(np.abs(b), 1 / np.sqrt(8))
        assert p.I0 == ()

    def test_planted_unit_column_in_i0(self):
        n = 7
        x2 = np.arange(n, dtype=float)
        X = np.column_stack([np.eye(n)[:, 0], x2])
        p = build_problem(X, [[0.0, 1.0]])
        # brute force: e_i in M0lin iff appending it leaves the rank unchanged
        brute = [i for i in range(n)
                 if numerical_rank(np.column_stack([p.m0lin_basis, np.eye(n)[:, i]])) == 1]
        assert p.I0 == (0,) == tuple(brute)

    def test_hat_matrix_is_projector(self, rng):
        p = random_problem(rng, n=12, k=4, q=2)
        H = p.proj_x
        assert np.allclose(H, H.T, atol=1e-12)
        assert np.allclose(H @ H, H, atol=1e-12)
        assert np.trace(H) == pytest.approx(4, abs=1e-10)

    def test_m0lin_projectors_orthogonal(self, rng):
        p = random_problem(rng, n=12, k=4, q=2)
        assert p.m0lin_basis.shape[1] == 2
        assert np.abs(p.proj_m0lin_perp @ p.proj_m0lin).max() < 1e-12

    def test_mu0_satisfies_restriction(self, rng):
        p = random_problem(rng)
        assert np.allclose(p.R @ p.beta0, p.r)
        assert np.allclose(p.X @ p.beta0, p.mu0)

    def test_v_nonzero_and_only_for_scalar(self, rng):
        p = random_problem(rng, q=1)
        assert np.linalg.norm(p.v) > 0
        with pytest.raises(ValueError):
            _ = random_problem(rng, n=10, k=3, q=2).v

    def test_arrays_read_only(self):
        p = location_model(4)
        with pytest.raises(ValueError):
            p.X[0, 0] = 2.0

    @pytest.mark.parametrize("X,R,err", [
        (np.ones((3, 1)), np.ones((1, 2)), DimensionMismatch),
        (np.ones((3, 3)), np.ones((1, 3)), DimensionMismatch),
        (np.column_stack([np.ones(4), np.ones(4)]), [[0.0, 1.0]], RankDeficient),
        (np.column_stack([np.ones(4), np.arange(4.0)]), [[1.0, 1.0], [2.0, 2.0]], RankDeficient),
    ])
    def test_rejects_bad_inputs(self, X, R, err):
        with pytest.raises(err):
            build_problem(X, R)

    def test_bad_r_length(self):
        with pytest.raises(DimensionMismatch):
            build_problem(np.ones((4, 1)), [[1.0]], [0.0, 1.0])


class TestResiduals:
    def test_location_hand_value(self):
        u, _ = residuals(location_model(2), np.array([1.0, 0.0]))
        assert np.allclose(u, [0.5, -0.5])

    def test_span_x_and_mu0_vanish(self, rng):
        p = random_problem(rng)
        y = p.X @ rng.standard_normal(p.k)
        assert np.allclose(residuals(p, y)[0], 0, atol=1e-12)
        assert np.allclose(residuals(p, p.mu0)[1], 0, atol=1e-12)

    def test_pythagoras_and_restricted_worse(self, rng):
        for _ in range(20):
            p = random_problem(rng)
            y = rng.standard_normal(p.n) * 3
            u, ut = residuals(p, y)
            assert y @ y == pytest.approx(np.sum((p.proj_x @ y) ** 2) + u @ u, rel=1e-10)
            assert u @ u <= ut @ ut + 1e-10

    def test_unit_leverage_iff_in_span(self, rng):
        for _ in range(10):
            p = random_problem(rng, unit_column=True)
            unit = np.isclose(p.hat_diag, 1.0, atol=1e-9)
            assert np.array_equal(unit, p.in_span_x)
            assert p.in_span_x.any()

    def test_k_group_sizes(self):
        p = k_group([2, 3, 4])
        assert (p.n, p.k, p.q) == (9, 3, 2)
