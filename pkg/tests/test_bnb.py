"""Spatial branch-and-bound: bounds, envelopes, search behavior."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logitprice import bnb, mnl
from logitprice.model import PricingInstance, check_feasibility, revenue
from conftest import (
    SPEC_MIXTURE_REV,
    SPEC_MIXTURE_P,
    random_instance,
    single_product,
    spec_mixture_instance,
    two_product_capacity,
)


class TestSBounds:
    def test_interval_containing_inverse_e(self):
        s_lo, s_hi = bnb.s_bounds(0.1, 0.5)
        assert s_lo == pytest.approx(-1.0 / math.e, abs=1e-12)
        assert s_hi == pytest.approx(0.1 * math.log(0.1), abs=1e-12)

    def test_interval_right_of_minimum(self):
        s_lo, s_hi = bnb.s_bounds(0.5, 0.9)
        assert s_lo == pytest.approx(0.5 * math.log(0.5), abs=1e-12)
        assert s_hi == pytest.approx(0.9 * math.log(0.9), abs=1e-12)

    def test_interval_above_one(self):
        s_lo, s_hi = bnb.s_bounds(1.0, 2.0)
        assert s_lo == pytest.approx(0.0, abs=1e-12)
        assert s_hi == pytest.approx(2.0 * math.log(2.0), abs=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            bnb.s_bounds(0.0, 1.0)

    @given(st.floats(1e-4, 5.0), st.floats(1e-4, 5.0))
    @settings(max_examples=200, deadline=None)
    def test_is_exact_range(self, x1, x2):
        lo, hi = min(x1, x2), max(x1, x2)
        s_lo, s_hi = bnb.s_bounds(lo, hi)
        u = np.linspace(lo, hi, 500)
        vals = u * np.log(u)
        assert vals.min() >= s_lo - 1e-9
        assert vals.max() <= s_hi + 1e-9
        assert vals.min() <= s_lo + 1e-4 * (1 + abs(s_lo))
        assert vals.max() >= s_hi - 1e-4 * (1 + abs(s_hi))


class TestInitGlobalBounds:
    def test_closed_form_example(self):
        inst = single_product(U=2.0)
        nb = bnb.init_global_bounds(inst)
        assert nb.z_lo[0] == pytest.approx(1.0 + math.exp(-2.0), abs=1e-9)
        assert nb.z_hi[0] == pytest.approx(2.0, abs=1e-12)
        assert nb.theta_lo[0] == pytest.approx(0.0, abs=1e-12)
        assert nb.theta_hi[0] == pytest.approx(
            (1.0 / math.e) / (1.0 + math.exp(-2.0)), abs=1e-9)

    def test_literal_division_would_cut_off_optimum(self):
        """The formula theta_hi = y_hi/z_hi excludes the true optimum."""
        inst = single_product(U=2.0)
        nb = bnb.init_global_bounds(inst)
        y_hi = 1.0 / math.e
        literal_theta_hi = y_hi / nb.z_hi[0]
        true_opt = 0.2784645427610738  # 1-D grid optimum on [0, 2]
        assert literal_theta_hi < true_opt
        assert nb.theta_hi[0] > true_opt

    def test_degenerate_box_collapses(self):
        inst = single_product(L=1.0, U=1.0)
        nb = bnb.init_global_bounds(inst)
        assert nb.z_lo[0] == pytest.approx(nb.z_hi[0], abs=1e-12)
        ratio = revenue(inst, [1.0]) * nb.z_lo[0] / nb.z_lo[0]
        assert nb.theta_lo[0] == pytest.approx(nb.theta_hi[0], abs=1e-12)
        assert nb.theta_lo[0] == pytest.approx(revenue(inst, [1.0]), abs=1e-9)

    def test_containment_of_feasible_points(self, rng):
        inst = random_instance(3, m=3, T=2, mode="C")
        nb = bnb.init_global_bounds(inst)
        for _ in range(200):
            p = rng.uniform(inst.L, inst.U)
            w = np.exp(inst.a - inst.b * p)
            z = 1.0 + w.sum(axis=1)
            y = w @ p
            theta = y / z
            assert np.all(z >= nb.z_lo - 1e-9) and np.all(z <= nb.z_hi + 1e-9)
            assert np.all(theta >= nb.theta_lo - 1e-9)
            assert np.all(theta <= nb.theta_hi + 1e-9)


class TestMcCormick:
    BOX = ((0.0, 2.0), (1.0, 3.0))

    @staticmethod
    def _envelope(rows, theta, z):
        lo, hi = -math.inf, math.inf
        for cy, cth, cz, rhs in rows:
            bound = rhs - cth * theta - cz * z
            if cy < 0:       # -y + ... <= rhs  ->  y >= -bound
                lo = max(lo, -bound)
            else:            # y + ... <= rhs   ->  y <= bound
                hi = min(hi, bound)
        return lo, hi

    def test_corner_exact(self):
        rows = bnb.mccormick(*self.BOX)
        lo, hi = self._envelope(rows, 0.0, 1.0)
        assert lo == pytest.approx(0.0, abs=1e-12)
        assert hi == pytest.approx(0.0, abs=1e-12)

    def test_midpoint_gap(self):
        rows = bnb.mccormick(*self.BOX)
        lo, hi = self._envelope(rows, 1.0, 2.0)
        assert lo == pytest.approx(1.0, abs=1e-12)
        assert hi == pytest.approx(3.0, abs=1e-12)
        # max gap to the true product equals width_theta*width_z/4
        assert max(hi - 2.0, 2.0 - lo) == pytest.approx(2.0 * 2.0 / 4.0, abs=1e-12)

    def test_collapsed_box_is_exact(self):
        rows = bnb.mccormick((1.5, 1.5), (1.0, 3.0))
        for z in (1.0, 1.7, 3.0):
            lo, hi = self._envelope(rows, 1.5, z)
            assert lo == pytest.approx(1.5 * z, abs=1e-12)
            assert hi == pytest.approx(1.5 * z, abs=1e-12)

    def test_envelope_validity_random(self, rng):
        for _ in range(50):
            t_lo = rng.uniform(0, 2)
            t_hi = t_lo + rng.uniform(0.01, 3)
            z_lo = rng.uniform(1, 4)
            z_hi = z_lo + rng.uniform(0.01, 3)
            rows = bnb.mccormick((t_lo, t_hi), (z_lo, z_hi))
            thetas = rng.uniform(t_lo, t_hi, 200)
            zs = rng.uniform(z_lo, z_hi, 200)
            for theta, z in zip(thetas, zs):
                lo, hi = self._envelope(rows, theta, z)
                y = theta * z
                assert lo - 1e-12 <= y <= hi + 1e-12
                gap = max(y - lo, hi - y)
                assert gap <= (t_hi - t_lo) * (z_hi - z_lo) / 4 + 1e-12


class TestBilinearViolation:
    def test_exact_zero(self):
        delta, t = bnb.bilinear_violation([2.0], [1.0], [2.0])
        assert delta == 0.0 and t == 0

    def test_arithmetic(self):
        delta, t = bnb.bilinear_violation([1.0, 2.0], [1.0, 1.0], [1.0, 1.0])
        assert delta == pytest.approx(1.0) and t == 1

    def test_tie_takes_lowest_index(self):
        delta, t = bnb.bilinear_violation([1.5, 1.5], [1.0, 1.0], [1.0, 1.0])
        assert delta == pytest.approx(0.5) and t == 0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            bnb.bilinear_violation([1.0], [1.0, 2.0], [1.0])


class TestBranch:
    def _node(self, theta_box, z_box):
        nb = bnb.NodeBounds(theta_lo=[theta_box[0]], theta_hi=[theta_box[1]],
                            z_lo=[z_box[0]], z_hi=[z_box[1]])
        return bnb.BnBNode(bounds=nb, parent_ub=5.0, depth=2, id=4)

    def test_picks_wider_theta(self):
        node = self._node((0.0, 0.4), (1.0, 1.1))
        lo, hi = bnb.branch(node, ([9.0], [0.2], [1.05]))
        assert lo.bounds.theta_hi[0] == pytest.approx(0.2)
        assert hi.bounds.theta_lo[0] == pytest.approx(0.2)
        assert lo.bounds.z_lo[0] == 1.0 and lo.bounds.z_hi[0] == 1.1

    def test_tie_prefers_theta(self):
        node = self._node((0.0, 1.0), (1.0, 2.0))
        lo, hi = bnb.branch(node, ([9.0], [0.5], [1.5]))
        assert lo.bounds.theta_hi[0] == pytest.approx(0.5)
        assert lo.bounds.z_hi[0] == 2.0

    def test_children_partition_parent(self):
        node = self._node((0.2, 0.8), (1.0, 4.0))
        lo, hi = bnb.branch(node, ([9.0], [0.5], [2.0]))
        assert lo.bounds.z_hi[0] == pytest.approx(hi.bounds.z_lo[0])
        assert lo.bounds.z_lo[0] == node.bounds.z_lo[0]
        assert hi.bounds.z_hi[0] == node.bounds.z_hi[0]
        assert lo.depth == node.depth + 1
        assert lo.parent_ub == node.parent_ub

    def test_stall_raises(self):
        node = self._node((0.3, 0.3), (2.0, 2.0))
        with pytest.raises(bnb.BranchStallError):
            bnb.branch(node, ([9.0], [0.3], [2.0]))


class TestNodeRelaxation:
    def test_root_bound_dominates_grid(self, rng):
        for seed in range(10):
            inst = random_instance(100 + seed, m=2, T=2, mode="C")
            prog = bnb.build_node_relaxation(inst, bnb.init_global_bounds(inst))
            out = prog.solve(tol=1e-8)
            assert out.status == "optimal"
            best = 0.0
            grid0 = np.linspace(inst.L[0], inst.U[0], 60)
            grid1 = np.linspace(inst.L[1], inst.U[1], 60)
            P = np.array(np.meshgrid(grid0, grid1)).reshape(2, -1).T
            feas = np.array([not check_feasibility(inst, p) for p in P])
            best = revenue(inst, P[feas]).max()
            assert out.objective >= best - 1e-6

    def test_collapsed_boxes_pin_value(self):
        # Exactly-singleton boxes leave the interior-point engine no strict
        # interior, so "collapsed" means degenerate width here.
        inst = single_product(U=2.0)
        p_star = 1.0 + 0.2784645427610738
        w = math.exp(-p_star)
        z_star = 1.0 + w
        theta_star = p_star * w / z_star
        eps_box = 1e-3
        nb = bnb.NodeBounds(
            theta_lo=[theta_star - eps_box], theta_hi=[theta_star + eps_box],
            z_lo=[z_star - eps_box], z_hi=[z_star + eps_box])
        prog = bnb.build_node_relaxation(inst, nb)
        out = prog.solve(tol=1e-8)
        assert out.status == "optimal"
        assert out.objective == pytest.approx(theta_star, abs=1e-4)

    def test_log_hypograph_consistency(self):
        inst = two_product_capacity()
        prog = bnb.build_node_relaxation(inst, bnb.init_global_bounds(inst))
        out = prog.solve(tol=1e-8)
        for i in range(inst.m):
            u = out.point[f"u{i}"]
            v = out.point[f"v{i}"]
            assert v <= math.log(u) + 1e-8


class TestSolveBnB:
    def test_single_product_tight_box(self):
        sol, stats = bnb.solve_bnb(single_product(U=2.0), eps=1e-3)
        assert sol.status == "eps_optimal"
        assert sol.revenue == pytest.approx(0.2784645427610738, abs=1e-3)
        assert stats.best_ub >= sol.revenue - 1e-9
        assert sol.gap <= 1e-3 + 1e-12

    def test_spec_mixture_matches_grid(self):
        sol, stats = bnb.solve_bnb(spec_mixture_instance(), eps=1e-2)
        assert sol.status == "eps_optimal"
        assert sol.revenue == pytest.approx(SPEC_MIXTURE_REV, abs=1e-3)
        assert sol.prices[0] == pytest.approx(SPEC_MIXTURE_P, abs=0.05)

    def test_mixture_collapse_matches_single_segment(self):
        inst2 = PricingInstance(m=1, T=2, a=[[1.0], [1.0]], b=[1.0],
                                d=[0.5, 0.5], L=[0.0], U=[5.0])
        inst1 = PricingInstance(m=1, T=1, a=[[1.0]], b=[1.0], d=[1.0],
                                L=[0.0], U=[5.0])
        s2, _ = bnb.solve_bnb(inst2, eps=1e-3)
        s1, _ = bnb.solve_bnb(inst1, eps=1e-3)
        assert s2.revenue == pytest.approx(s1.revenue, abs=1e-6)

    def test_agrees_with_bisection_on_t1(self):
        eps = 1e-2
        for seed in range(5):
            inst = random_instance(200 + seed, m=3, T=1, mode="C")
            sol_b, _ = bnb.solve_bnb(inst, eps=eps)
            sol_m = mnl.bisection_solve(inst, eps=eps)
            scale = max(1.0, abs(sol_b.revenue))
            assert abs(sol_b.revenue - sol_m.revenue) <= 2 * eps * scale

    def test_incumbent_feasible_and_consistent(self):
        inst = random_instance(11, m=3, T=2, mode="CP")
        sol, stats = bnb.solve_bnb(inst, eps=1e-2)
        assert check_feasibility(inst, sol.prices, 1e-6) == []
        assert sol.revenue == pytest.approx(revenue(inst, sol.prices), abs=1e-8)
        assert sol.diagnostics["ub_monotone"]
        assert sol.diagnostics["lb_monotone"]
        assert stats.best_lb <= stats.best_ub + 1e-9

    def test_trace_file(self, tmp_path):
        path = tmp_path / "trace.csv"
        bnb.solve_bnb(spec_mixture_instance(), eps=1e-2, trace_path=path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "node_id,depth,ub,delta_max,branch_variable"
        assert len(lines) >= 2
        first = lines[1].split(",")
        assert first[0] == "0" and first[1] == "0"

    def test_node_cap_reports_time_limit(self):
        sol, stats = bnb.solve_bnb(spec_mixture_instance(), eps=1e-6, node_cap=3)
        assert sol.status == "time_limit"
        assert stats.nodes_explored <= 3

    def test_rejects_bad_eps(self):
        with pytest.raises(ValueError):
            bnb.solve_bnb(single_product(), eps=0.0)
