import numpy as np
import pytest

from hetrobust.covariance import bounded_below, grouped
from hetrobust.errors import AssumptionViolated
from hetrobust.feasibility import (Verdict, c_star, check_assumption, check_size_control_condition,
                                   constancy_check, feasibility_report, shifted_basis_values)
from hetrobust.fixtures import bounded_example, k_group, location_model, two_group
from hetrobust.model import build_problem
from hetrobust.statistics import ALL_FAMILIES, evaluate, g_transform, make_spec

from conftest import random_problem


class TestAssumption:
    def test_no_unit_vectors_in_span(self, rng):
        p = random_problem(rng)
        assert all(check_assumption(p, make_spec(p, f)) for f in ALL_FAMILIES)

    def test_k_group_all_sizes_two(self):
        p = k_group([2, 2, 3])
        assert check_assumption(p, make_spec(p, "HC0"))

    def test_k_group_some_singletons(self):
        p = k_group([1, 1, 3])
        assert not check_assumption(p, make_spec(p, "HC0"))
        assert feasibility_report(p, make_spec(p, "HC0")).verdict is Verdict.TRIVIALLY_ZERO


class TestCondition:
    def test_two_group_holds(self):
        p = two_group(30, 3)
        assert check_size_control_condition(p, make_spec(p, "HC0")).ok

    def test_k_group_fails_but_inconclusive(self):
        p = k_group([3, 3, 4])
        s = make_spec(p, "HC0")
        assert not check_size_control_condition(p, s).ok
        rep = feasibility_report(p, s)
        assert rep.verdict is Verdict.INCONCLUSIVE
        assert "partial_size_one_bound" in rep.details

    def test_unit_column_uc_size_one(self):
        n = 8
        X = np.column_stack([np.eye(n)[:, 0], np.ones(n)])
        p = build_problem(X, [[1.0, 0.0]])
        s = make_spec(p, "UC")
        assert not check_size_control_condition(p, s).ok
        assert feasibility_report(p, s).verdict is Verdict.SIZE_ONE_FOR_ALL_C

    def test_bounded_below_always_ok(self):
        p = two_group(10, 3)
        assert check_size_control_condition(p, make_spec(p, "HC0"), bounded_below(0.01)).ok

    def test_grouped_k_group_still_fails(self):
        # a vector supported on one group gives Omega of rank one, so the group span lies in B
        p = k_group([3, 3, 4])
        s = make_spec(p, "HC0")
        cond = check_size_control_condition(p, s, grouped([3, 3, 4]))
        assert not cond.ok and cond.uc_ok
        assert feasibility_report(p, s, grouped([3, 3, 4])).verdict is Verdict.INCONCLUSIVE

    def test_grouped_two_group_ok(self):
        p = two_group(10, 3)
        assert check_size_control_condition(p, make_spec(p, "HC2"), grouped([3, 7])).ok

    def test_assumption_violation_raises(self):
        p = k_group([1, 1, 3])
        with pytest.raises(AssumptionViolated):
            check_size_control_condition(p, make_spec(p, "HC0"))


class TestCStar:
    def test_bounded_example(self):
        p = bounded_example()
        assert c_star(p, make_spec(p, "HC0R")) == pytest.approx(1.8, abs=1e-12)

    def test_brute_force_two_group(self):
        p = two_group(30, 3)
        s = make_spec(p, "HC2")
        brute = max(evaluate(p, s, p.mu0 + np.eye(30)[i]).value for i in range(30))
        assert c_star(p, s) == pytest.approx(brute, rel=1e-12)

    def test_ucr_with_failed_condition(self):
        n = 8
        X = np.column_stack([np.eye(n)[:, 0], np.ones(n)])
        p = build_problem(X, [[1.0, 0.0]])
        assert c_star(p, make_spec(p, "UCR")) == pytest.approx(n - 1, rel=1e-9)

    def test_ucr_is_g_of_uc(self, rng):
        for _ in range(10):
            p = random_problem(rng)
            assert c_star(p, make_spec(p, "UCR")) == pytest.approx(
                g_transform(p, c_star(p, make_spec(p, "UC"))), rel=1e-9)

    def test_r_and_restriction_equivalence(self, rng):
        p = random_problem(rng, n=12, k=4, q=2)
        A = rng.standard_normal((2, 2)) + 3 * np.eye(2)
        p2 = build_problem(p.X, A @ p.R, A @ p.r + 0.0)
        p3 = p.with_r(p.r + 7.0)
        for f in ALL_FAMILIES:
            a = c_star(p, make_spec(p, f))
            assert c_star(p2, make_spec(p2, f)) == pytest.approx(a, rel=1e-8)
            assert c_star(p3, make_spec(p3, f)) == pytest.approx(a, rel=1e-12, abs=1e-12)

    def test_only_i1_used(self):
        X = np.column_stack([np.eye(6)[:, 0], np.arange(6.0)])
        p = build_problem(X, [[0.0, 1.0]])
        assert 0 not in shifted_basis_values(p, make_spec(p, "HC0"))


class TestConstancy:
    def test_remark_design_constant(self):
        n = 5
        p = build_problem(np.eye(n)[:, :1], [[1.0]])
        s = make_spec(p, "HC0R")
        assert constancy_check(p, s)
        rep = feasibility_report(p, s)
        assert rep.verdict is Verdict.CONSTANT
        assert rep.details["constant_value"] == pytest.approx(1.0)

    def test_bounded_not_constant(self):
        p = bounded_example()
        assert not constancy_check(p, make_spec(p, "HC0R"))

    def test_location_not_constant(self):
        p = location_model(5)
        assert not constancy_check(p, make_spec(p, "HC0R"))

    def test_only_restricted(self):
        p = location_model(5)
        with pytest.raises(ValueError):
            constancy_check(p, make_spec(p, "HC0"))


class TestReport:
    def test_two_group_all_controllable(self):
        p = two_group(30, 3)
        for f in ALL_FAMILIES:
            rep = feasibility_report(p, make_spec(p, f))
            assert rep.verdict is Verdict.SIZE_CONTROLLABLE, f
            assert rep.to_dict()["verdict"] == "SizeControllable"

    def test_ucr_note_when_uc_fails(self):
        X = np.column_stack([np.eye(8)[:, 0], np.ones(8)])
        p = build_problem(X, [[1.0, 0.0]])
        rep = feasibility_report(p, make_spec(p, "UCR"))
        assert rep.verdict is Verdict.SIZE_CONTROLLABLE
        assert "trivial" in rep.details["note"]

    def test_grouped_c_star_reported_in_details(self):
        p = two_group(10, 3)
        rep = feasibility_report(p, make_spec(p, "HC0"), grouped([3, 7]))
        assert rep.c_star == 0.0
        assert rep.details["c_star_full_model"] > 0
