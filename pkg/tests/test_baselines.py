"""Gradient local search, projection, and segment aggregation."""

import math

import numpy as np
import pytest

from logitprice import baselines, bnb, mnl
from logitprice.model import (
    CapacityRow,
    PricingInstance,
    check_feasibility,
    revenue,
    revenue_gradient,
)
from conftest import (
    BIMODAL_GLOBAL_REV,
    BIMODAL_POOR_P,
    BIMODAL_POOR_REV,
    bimodal_instance,
    random_instance,
    single_product,
    two_product_capacity,
)


class TestGradientLocalSearch:
    def test_unimodal_reaches_bisection_optimum(self):
        inst = single_product()
        target = mnl.bisection_solve(inst, eps=1e-6).revenue
        cfg = baselines.LocalSearchConfig(max_iters=300, kkt_tol=1e-8)
        for start in ([0.2], [5.0], [9.5]):
            sol = baselines.gradient_local_search(inst, start, cfg)
            assert sol.revenue == pytest.approx(target, abs=1e-4)
            assert sol.status == "feasible_heuristic"

    def test_trapped_by_poor_mode(self):
        """A start in the left basin converges to the inferior local max."""
        inst = bimodal_instance()
        cfg = baselines.LocalSearchConfig(max_iters=400, kkt_tol=1e-9)
        sol = baselines.gradient_local_search(inst, [BIMODAL_POOR_P - 0.3], cfg)
        assert sol.revenue == pytest.approx(BIMODAL_POOR_REV, abs=1e-6)
        assert sol.revenue < BIMODAL_GLOBAL_REV - 1e-2

    def test_optimal_interior_start_unchanged(self):
        inst = bimodal_instance()
        cfg = baselines.LocalSearchConfig(kkt_tol=1e-6)
        sol = baselines.gradient_local_search(inst, [5.238903313177234], cfg)
        assert sol.prices[0] == pytest.approx(5.238903313177234, abs=1e-8)

    def test_monotone_and_feasible(self):
        inst = random_instance(31, m=3, T=2, mode="C")
        cfg = baselines.LocalSearchConfig(max_iters=60)
        sol = baselines.gradient_local_search(inst, inst.U, cfg)
        assert check_feasibility(inst, sol.prices, 1e-6) == []
        start_rev = revenue(inst, baselines.project_prices(inst, inst.U))
        assert sol.revenue >= start_rev - 1e-12


class TestMultistart:
    def test_single_start_equals_plain_search(self):
        inst = bimodal_instance()
        cfg = baselines.LocalSearchConfig(n_starts=1, seed=5)
        ms = baselines.multistart(inst, cfg)
        rng = np.random.default_rng(np.random.SeedSequence(entropy=5, spawn_key=(0,)))
        p0 = inst.L + rng.random(inst.m) * (inst.U - inst.L)
        single = baselines.gradient_local_search(inst, p0, cfg)
        assert ms.revenue == pytest.approx(single.revenue, abs=0)

    def test_monotone_in_starts(self):
        inst = bimodal_instance()
        revs = []
        for n in (1, 2, 4, 8):
            cfg = baselines.LocalSearchConfig(n_starts=n, seed=12)
            revs.append(baselines.multistart(inst, cfg).revenue)
        assert all(b >= a - 1e-12 for a, b in zip(revs, revs[1:]))

    def test_many_starts_find_global_mode(self):
        inst = bimodal_instance()
        cfg = baselines.LocalSearchConfig(n_starts=16, seed=3, max_iters=300)
        sol = baselines.multistart(inst, cfg)
        assert sol.revenue == pytest.approx(BIMODAL_GLOBAL_REV, abs=1e-5)

    def test_deterministic(self):
        inst = random_instance(9, m=2, T=2, mode="C")
        cfg = baselines.LocalSearchConfig(n_starts=3, seed=77)
        a = baselines.multistart(inst, cfg)
        b = baselines.multistart(inst, cfg)
        assert a.revenue == b.revenue
        assert np.array_equal(a.prices, b.prices)


class TestProjection:
    def test_interior_point_returned_exactly(self):
        inst = two_product_capacity()
        p = baselines.project_prices(inst, [0.5, 0.5])
        assert np.array_equal(p, [0.5, 0.5])

    def test_box_clip_without_couplings(self):
        inst = single_product(U=3.0)
        assert baselines.project_prices(inst, [7.0])[0] == 3.0
        assert baselines.project_prices(inst, [-2.0])[0] == 0.0

    def test_halfspace_projection_closed_form(self):
        inst = two_product_capacity()
        p = baselines.project_prices(inst, [3.0, 1.0])
        assert p == pytest.approx([2.0, 0.0], abs=1e-8)

    def test_idempotent(self):
        inst = two_product_capacity()
        for p0 in ([9.0, 9.0], [3.0, 1.0], [1.5, 0.1], [0.2, 0.3]):
            p1 = baselines.project_prices(inst, p0)
            p2 = baselines.project_prices(inst, p1)
            assert np.max(np.abs(p2 - p1)) <= 1e-8

    def test_projection_feasible(self, rng):
        inst = random_instance(55, m=4, T=1, mode="CP")
        for _ in range(10):
            p0 = rng.uniform(-0.5, 2.0, 4) * inst.U
            p = baselines.project_prices(inst, p0)
            assert check_feasibility(inst, p, 1e-8) == []

    def test_projection_is_nearest_feasible(self, rng):
        """No random feasible point may sit closer to p0 than the projection."""
        inst = two_product_capacity()
        p0 = np.array([4.0, 3.0])
        proj = baselines.project_prices(inst, p0)
        dist = np.linalg.norm(proj - p0)
        for _ in range(500):
            q = rng.uniform(0, 2, 2)
            if q.sum() <= 2.0:
                assert np.linalg.norm(q - p0) >= dist - 1e-7


class TestAggregation:
    def test_identity_for_single_segment(self):
        inst = single_product(a=1.5)
        agg = baselines.aggregate_segments(inst)
        assert agg.T == 1
        assert np.array_equal(agg.a, inst.a)

    def test_mean_intercepts(self):
        inst = PricingInstance(m=1, T=2, a=[[4.0], [-2.0]], b=[0.8],
                               d=[0.5, 0.5], L=[0.0], U=[12.0])
        agg = baselines.aggregate_segments(inst)
        assert agg.a[0, 0] == pytest.approx(1.0)
        assert agg.d.tolist() == [1.0]

    def test_weighted_variant(self):
        inst = PricingInstance(m=1, T=2, a=[[4.0], [-2.0]], b=[0.8],
                               d=[0.25, 0.75], L=[0.0], U=[12.0])
        agg = baselines.aggregate_segments(inst, weighted=True)
        assert agg.a[0, 0] == pytest.approx(0.25 * 4.0 + 0.75 * (-2.0))

    def test_constraints_carried_over(self):
        inst = random_instance(21, m=4, T=3, mode="CP")
        agg = baselines.aggregate_segments(inst)
        assert len(agg.capacity) == len(inst.capacity)
        assert len(agg.pairwise) == len(inst.pairwise)

    def test_aggregate_prices_never_beat_global(self):
        inst = bimodal_instance()
        agg = baselines.aggregate_segments(inst)
        agg_sol = mnl.bisection_solve(agg, eps=1e-4)
        true_rev = revenue(inst, agg_sol.prices)
        global_sol, _ = bnb.solve_bnb(inst, eps=1e-3)
        assert true_rev <= global_sol.revenue + 1e-3


class TestGradientCheck:
    def test_analytic_matches_central_differences(self, rng):
        inst = random_instance(61, m=3, T=2, mode="U")
        h = 1e-6
        for _ in range(25):
            p = rng.uniform(inst.L + 0.1, inst.U - 0.1)
            g = revenue_gradient(inst, p)
            for i in range(inst.m):
                e = np.zeros(inst.m)
                e[i] = h
                fd = (revenue(inst, p + e) - revenue(inst, p - e)) / (2 * h)
                denom = max(abs(fd), 1e-12)
                assert abs(g[i] - fd) / denom < 1e-5 or abs(g[i] - fd) < 1e-10


class TestInteriorPoint:
    def test_feasible_instance(self):
        inst = two_product_capacity()
        p = baselines.feasible_interior_point(inst)
        assert check_feasibility(inst, p) == []

    def test_infeasible_polytope_raises(self):
        inst = PricingInstance(m=2, T=1, a=[[0, 0]], b=[1, 1], d=[1.0],
                               L=[2.0, 2.0], U=[10, 10],
                               capacity=[CapacityRow(alpha=[1.0, 1.0], beta=1.0)])
        with pytest.raises(Exception):
            baselines.feasible_interior_point(inst)
