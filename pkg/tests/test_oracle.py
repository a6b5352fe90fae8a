"""Grid-search oracle: exactness on closed forms, refinement behavior."""

import math

import numpy as np
import pytest

from logitprice import oracle
from logitprice.model import CapacityRow, PricingInstance, check_feasibility
from conftest import single_product, two_product_capacity

W_INV_E = 0.2784645427610738


class TestGridSearch:
    def test_bound_binding_closed_form(self):
        sol = oracle.grid_search(single_product(U=1.0), points_per_dim=100001)
        assert sol.revenue == pytest.approx(1.0 / (1.0 + math.e), abs=1e-9)
        assert sol.prices[0] == pytest.approx(1.0, abs=1e-9)

    def test_interior_optimum(self):
        sol = oracle.grid_search(single_product(U=10.0), points_per_dim=1000001)
        assert sol.revenue == pytest.approx(W_INV_E, abs=1e-9)
        assert sol.prices[0] == pytest.approx(1.0 + W_INV_E, abs=1e-4)

    def test_capacity_instance(self):
        sol = oracle.grid_search(two_product_capacity(), points_per_dim=801)
        assert sol.revenue == pytest.approx(0.4238831152341709, abs=1e-5)
        assert check_feasibility(two_product_capacity(), sol.prices, 1e-9) == []

    def test_value_is_lower_bound_with_logged_slack(self):
        sol = oracle.grid_search(single_product(U=10.0), points_per_dim=501)
        assert sol.revenue <= W_INV_E + 1e-12
        slack = sol.diagnostics["slack"]
        assert W_INV_E <= sol.revenue + slack

    def test_deterministic(self):
        a = oracle.grid_search(two_product_capacity(), points_per_dim=101)
        b = oracle.grid_search(two_product_capacity(), points_per_dim=101)
        assert a.revenue == b.revenue
        assert np.array_equal(a.prices, b.prices)

    def test_rejects_large_m(self):
        inst = PricingInstance(m=5, T=1, a=[[0.0] * 5], b=[1.0] * 5, d=[1.0],
                               L=[0.0] * 5, U=[1.0] * 5)
        with pytest.raises(ValueError):
            oracle.grid_search(inst, points_per_dim=3)

    def test_rejects_tiny_grid(self):
        with pytest.raises(ValueError):
            oracle.grid_search(single_product(), points_per_dim=1)

    def test_no_feasible_point_reported_distinctly(self):
        inst = PricingInstance(m=1, T=1, a=[[0.0]], b=[1.0], d=[1.0],
                               L=[1.0], U=[2.0],
                               capacity=[CapacityRow(alpha=[1.0], beta=0.5)])
        with pytest.raises(oracle.NoFeasibleGridPointError):
            oracle.grid_search(inst, points_per_dim=11)


class TestRefine:
    def test_zero_radius_unchanged(self):
        inst = single_product(U=10.0)
        sol = oracle.grid_search(inst, points_per_dim=1001)
        ref = oracle.refine(inst, sol, radius=0.0, points_per_dim=101)
        assert ref.revenue == sol.revenue
        assert np.array_equal(ref.prices, sol.prices)

    def test_two_rounds_localize_optimum(self):
        inst = single_product(U=10.0)
        sol = oracle.grid_search(inst, points_per_dim=1001)
        h = sol.diagnostics["grid_spacing"]
        ref = oracle.refine(inst, sol, radius=2 * h, points_per_dim=1001)
        h2 = ref.diagnostics["grid_spacing"]
        ref2 = oracle.refine(inst, ref, radius=2 * h2, points_per_dim=1001)
        assert abs(ref2.prices[0] - (1.0 + W_INV_E)) <= 1e-4
        assert ref2.revenue >= sol.revenue

    def test_never_leaves_original_box(self):
        inst = single_product(U=1.0)
        sol = oracle.grid_search(inst, points_per_dim=101)  # optimum at U
        ref = oracle.refine(inst, sol, radius=5.0, points_per_dim=101)
        assert ref.prices[0] <= 1.0 + 1e-12
        assert ref.revenue >= sol.revenue

    def test_refinement_counter(self):
        inst = single_product(U=10.0)
        sol = oracle.grid_search(inst, points_per_dim=101)
        ref = oracle.refine(inst, sol, radius=0.5, points_per_dim=101)
        assert ref.diagnostics["refinements"] == 1
