"""Spatial branch-and-bound for constrained mixture-of-logit pricing.

The mixture objective sum_t d_t y_t / z_t is rewritten with per-segment
ratio variables theta_t (y_t = theta_t z_t); everything else — entropy
epigraphs for u ln u, log hypographs for capacity rows, pairwise rows in
u — is convex, so the only nonconvexity is the T bilinear equalities.
Each node relaxes y_t = theta_t z_t by its McCormick envelope over the
node's (theta_t, z_t) boxes and solves the resulting concave program for
an upper bound; branching bisects the box of the most violated segment.
Best-first search with incumbent pruning makes the whole scheme converge
to an eps-optimal price vector.

One persistent program is kept per run: node moves only update the
theta/z boxes and rewrite the 4T McCormick rows in place.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import convex
from .baselines import LocalSearchConfig, gradient_local_search
from .model import (
    EPS_OPTIMAL,
    TIME_LIMIT,
    InfeasibleProblemError,
    PricingInstance,
    Solution,
    check_feasibility,
    fmnl_untransform,
    pairwise_to_u,
    revenue,
)

_WIDTH_STALL = 1e-12
_POLISH_STEPS = 20
_DEFAULT_NODE_CAP = 10 ** 6


class BranchStallError(RuntimeError):
    """Both candidate boxes of the branch segment are numerically flat."""


def s_bounds(u_lo, u_hi):
    """Exact range of u*ln(u) over [u_lo, u_hi] with 0 < u_lo <= u_hi.

    The function is convex with its minimum at u = 1/e, so the lower end
    is -1/e whenever 1/e lies in the interval and the better endpoint
    otherwise; the upper end is always attained at an endpoint.
    """
    u_lo = np.asarray(u_lo, dtype=float)
    u_hi = np.asarray(u_hi, dtype=float)
    if np.any(u_lo <= 0) or np.any(u_lo > u_hi):
        raise ValueError("need 0 < u_lo <= u_hi")
    end_lo = u_lo * np.log(u_lo)
    end_hi = u_hi * np.log(u_hi)
    inv_e = 1.0 / math.e
    inside = (u_lo <= inv_e) & (inv_e <= u_hi)
    s_lo = np.where(inside, -inv_e, np.minimum(end_lo, end_hi))
    s_hi = np.maximum(end_lo, end_hi)
    if s_lo.ndim == 0:
        return float(s_lo), float(s_hi)
    return s_lo, s_hi


@dataclass
class NodeBounds:
    """Per-segment boxes on the ratio theta_t and the denominator z_t."""

    theta_lo: np.ndarray
    theta_hi: np.ndarray
    z_lo: np.ndarray
    z_hi: np.ndarray

    def __post_init__(self):
        self.theta_lo = np.asarray(self.theta_lo, dtype=float)
        self.theta_hi = np.asarray(self.theta_hi, dtype=float)
        self.z_lo = np.asarray(self.z_lo, dtype=float)
        self.z_hi = np.asarray(self.z_hi, dtype=float)
        if np.any(self.theta_lo > self.theta_hi) or np.any(self.z_lo > self.z_hi):
            raise ValueError("node bounds must satisfy lo <= hi")
        if np.any(self.z_lo < 1.0 - 1e-12):
            raise ValueError("denominator bounds must satisfy z_lo >= 1")

    def copy(self) -> "NodeBounds":
        return NodeBounds(self.theta_lo.copy(), self.theta_hi.copy(),
                          self.z_lo.copy(), self.z_hi.copy())


@dataclass
class BnBNode:
    bounds: NodeBounds
    parent_ub: float
    depth: int
    id: int
    warm: np.ndarray | None = field(default=None, repr=False, compare=False)


@dataclass
class BnBStats:
    nodes_explored: int = 0
    nodes_pruned_bound: int = 0
    nodes_pruned_infeasible: int = 0
    best_ub: float = math.inf
    best_lb: float = -math.inf
    wall_time: float = 0.0
    max_depth: int = 0


@dataclass(frozen=True)
class _StaticBoxes:
    u_lo: np.ndarray
    u_hi: np.ndarray
    s_lo: np.ndarray
    s_hi: np.ndarray
    v_lo: np.ndarray
    v_hi: np.ndarray
    y_lo: np.ndarray
    y_hi: np.ndarray
    E: np.ndarray      # exp(a), T x m
    C: np.ndarray      # -exp(a)/b, T x m


def _static_boxes(instance: PricingInstance) -> _StaticBoxes:
    u_lo = np.exp(-instance.b * instance.U)
    u_hi = np.exp(-instance.b * instance.L)
    s_lo, s_hi = s_bounds(u_lo, u_hi)
    v_lo, v_hi = -instance.b * instance.U, -instance.b * instance.L
    E = np.exp(instance.a)
    C = -E / instance.b
    y_lo = C @ s_hi
    y_hi = C @ s_lo
    return _StaticBoxes(u_lo, u_hi, np.atleast_1d(s_lo), np.atleast_1d(s_hi),
                        v_lo, v_hi, y_lo, y_hi, E, C)


def init_global_bounds(instance: PricingInstance) -> NodeBounds:
    """Root boxes from interval arithmetic over the price box.

    theta bounds use sign-safe corner division min/max{y/z over the four
    corner pairs}: with nonnegative prices y_t >= 0, so pairing the lower
    y with the lower z (and upper with upper) would shrink the interval
    below the attainable ratios and can cut off the optimum.
    """
    sb = _static_boxes(instance)
    z_lo = 1.0 + sb.E @ sb.u_lo
    z_hi = 1.0 + sb.E @ sb.u_hi
    corners = np.stack([sb.y_lo / z_lo, sb.y_lo / z_hi,
                        sb.y_hi / z_lo, sb.y_hi / z_hi])
    return NodeBounds(theta_lo=corners.min(axis=0), theta_hi=corners.max(axis=0),
                      z_lo=z_lo, z_hi=z_hi)


def mccormick(theta_box, z_box):
    """Four envelope rows for y = theta*z over a box.

    Returns tuples (c_y, c_theta, c_z, rhs) encoding
    c_y*y + c_theta*theta + c_z*z <= rhs.
    """
    t_lo, t_hi = float(theta_box[0]), float(theta_box[1])
    z_lo, z_hi = float(z_box[0]), float(z_box[1])
    return [
        (-1.0, z_lo, t_lo, t_lo * z_lo),   # y >= t_lo*z + z_lo*t - t_lo*z_lo
        (-1.0, z_hi, t_hi, t_hi * z_hi),   # y >= t_hi*z + z_hi*t - t_hi*z_hi
        (1.0, -z_lo, -t_hi, -t_hi * z_lo),  # y <= t_hi*z + z_lo*t - t_hi*z_lo
        (1.0, -z_hi, -t_lo, -t_lo * z_hi),  # y <= t_lo*z + z_hi*t - t_lo*z_hi
    ]


def bilinear_violation(y, theta, z):
    """Largest |y_t - theta_t z_t| and its segment (first index on ties)."""
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    z = np.asarray(z, dtype=float)
    if not (y.shape == theta.shape == z.shape):
        raise ValueError("y, theta, z must have equal length")
    delta = np.abs(y - theta * z)
    t_star = int(np.argmax(delta))
    return float(delta[t_star]), t_star


class _NodeModel:
    """Persistent relaxation program plus the handles node updates need."""

    def __init__(self, instance: PricingInstance, tol: float):
        self.instance = instance
        self.tol = tol
        self.static = _static_boxes(instance)
        m, T = instance.m, instance.T
        sb = self.static
        prog = convex.ConvexProgram()
        self.u_idx = np.array([prog.add_variable(f"u{i}", sb.u_lo[i], sb.u_hi[i])
                               for i in range(m)])
        self.s_idx = np.array([prog.add_variable(f"s{i}", sb.s_lo[i], sb.s_hi[i])
                               for i in range(m)])
        self.v_idx = np.array([prog.add_variable(f"v{i}", sb.v_lo[i], sb.v_hi[i])
                               for i in range(m)])
        self.y_idx = np.array([prog.add_variable(f"y{t}", sb.y_lo[t], sb.y_hi[t])
                               for t in range(T)])
        self.z_idx = np.array([prog.add_variable(f"z{t}", 1.0, 2.0) for t in range(T)])
        self.th_idx = np.array([prog.add_variable(f"th{t}", 0.0, 1.0) for t in range(T)])
        for t in range(T):
            prog.set_linear_objective(f"th{t}", float(instance.d[t]))
        for i in range(m):
            prog.add_entropy_epigraph(f"s{i}", f"u{i}")
            prog.add_log_hypograph(f"v{i}", f"u{i}")
        for t in range(T):
            # y_t <= sum_i C_ti s_i
            coeffs = {f"y{t}": 1.0}
            for i in range(m):
                coeffs[f"s{i}"] = -sb.C[t, i]
            prog.add_linear_constraint(coeffs, 0.0)
            # z_t >= 1 + sum_j E_tj u_j
            coeffs = {f"z{t}": -1.0}
            for j in range(m):
                coeffs[f"u{j}"] = sb.E[t, j]
            prog.add_linear_constraint(coeffs, -1.0)
        for row in instance.capacity:
            coeffs = {f"v{i}": row.alpha[i] / instance.b[i] for i in range(m)
                      if row.alpha[i] != 0.0}
            if coeffs:
                # sum_i (alpha_i/b_i)(-v_i) <= beta  =>  sum (alpha/b) v >= -beta
                coeffs = {k: -c for k, c in coeffs.items()}
                prog.add_linear_constraint(coeffs, row.beta)
        for i, j, factor in pairwise_to_u(instance, "fmnl"):
            prog.add_linear_constraint({f"u{j}": 1.0, f"u{i}": -factor}, 0.0)
        self.mc_rows = []
        for t in range(T):
            rows = [prog.add_linear_constraint({f"y{t}": 1.0}, 0.0) for _ in range(4)]
            self.mc_rows.append(rows)
        self.program = prog

    def set_bounds(self, nb: NodeBounds) -> None:
        prog = self.program
        T = self.instance.T
        for t in range(T):
            prog.update_box(int(self.th_idx[t]), nb.theta_lo[t], nb.theta_hi[t])
            prog.update_box(int(self.z_idx[t]), nb.z_lo[t], nb.z_hi[t])
            rows = mccormick((nb.theta_lo[t], nb.theta_hi[t]),
                             (nb.z_lo[t], nb.z_hi[t]))
            for handle, (cy, cth, cz, rhs) in zip(self.mc_rows[t], rows):
                prog.set_linear_constraint(
                    handle,
                    {f"y{t}": cy, f"th{t}": cth, f"z{t}": cz},
                    rhs,
                )

    def solve(self, warm=None) -> convex.SolveOutcome:
        out = self.program.solve(tol=self.tol, start=warm)
        if out.status not in (convex.OPTIMAL, convex.INFEASIBLE) and warm is not None:
            self.program._last_t = None
            out = self.program.solve(tol=self.tol)
        return out


def build_node_relaxation(instance: PricingInstance, bounds: NodeBounds) -> convex.ConvexProgram:
    """Concave relaxation of the pricing problem over one node's boxes."""
    model = _NodeModel(instance, tol=1e-8)
    model.set_bounds(bounds)
    return model.program


def branch(node: BnBNode, point, child_ids=None):
    """Split the node at the most violated segment's wider box side."""
    y, theta, z = point
    _, t_star = bilinear_violation(y, theta, z)
    nb = node.bounds
    w_theta = nb.theta_hi[t_star] - nb.theta_lo[t_star]
    w_z = nb.z_hi[t_star] - nb.z_lo[t_star]
    if max(w_theta, w_z) < _WIDTH_STALL:
        raise BranchStallError(
            f"segment {t_star} boxes below width {_WIDTH_STALL}")
    if child_ids is None:
        child_ids = (2 * node.id + 1, 2 * node.id + 2)
    lo_b, hi_b = nb.copy(), nb.copy()
    if w_theta >= w_z:
        mid = 0.5 * (nb.theta_lo[t_star] + nb.theta_hi[t_star])
        lo_b.theta_hi[t_star] = mid
        hi_b.theta_lo[t_star] = mid
    else:
        mid = 0.5 * (nb.z_lo[t_star] + nb.z_hi[t_star])
        lo_b.z_hi[t_star] = mid
        hi_b.z_lo[t_star] = mid
    child_lo = BnBNode(lo_b, node.parent_ub, node.depth + 1, child_ids[0])
    child_hi = BnBNode(hi_b, node.parent_ub, node.depth + 1, child_ids[1])
    return child_lo, child_hi


def solve_bnb(instance: PricingInstance, eps: float,
              time_limit: float = math.inf, trace_path=None,
              node_cap: int = _DEFAULT_NODE_CAP):
    """Globally eps-optimal constrained FMNL pricing.

    Returns (Solution, BnBStats).  Terminates when the best node's
    bilinear violation falls below eps, when the relative revenue gap
    closes, or when the queue empties; hitting the time limit or node
    cap returns the incumbent with status "time_limit".
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    t_start = time.perf_counter()
    tol = min(1e-8, eps / 10.0)
    model = _NodeModel(instance, tol)
    root_bounds = init_global_bounds(instance)
    root_ub = float(instance.d @ root_bounds.theta_hi)
    root = BnBNode(root_bounds, root_ub, 0, 0)

    heap = [(-root_ub, 0, root)]
    next_id = 1
    best_rev = -math.inf
    best_p = None
    pruned_ub_max = -math.inf
    stats = BnBStats()
    warnings = []
    polish_config = LocalSearchConfig(max_iters=_POLISH_STEPS)
    ub_monotone = True
    lb_monotone = True
    last_key = math.inf
    polish_improvements = 0
    status = EPS_OPTIMAL
    trace_fh = open(trace_path, "w", encoding="utf-8") if trace_path else None
    if trace_fh:
        trace_fh.write("node_id,depth,ub,delta_max,branch_variable\n")

    def rel_gap_tol():
        return eps * max(1.0, abs(best_rev))

    try:
        while heap:
            elapsed = time.perf_counter() - t_start
            if elapsed > time_limit or stats.nodes_explored >= node_cap:
                status = TIME_LIMIT
                pruned_ub_max = max(pruned_ub_max, -heap[0][0])
                break
            neg_key, node_id, node = heapq.heappop(heap)
            key = -neg_key
            if key > last_key + 1e-9:
                ub_monotone = False
            last_key = min(last_key, key)
            if best_rev > -math.inf and key <= best_rev + rel_gap_tol():
                stats.nodes_pruned_bound += 1 + len(heap)
                pruned_ub_max = max(pruned_ub_max, key)
                heap.clear()
                break
            model.set_bounds(node.bounds)
            out = model.solve(warm=node.warm)
            if out.status == convex.INFEASIBLE:
                stats.nodes_pruned_infeasible += 1
                continue
            if out.status != convex.OPTIMAL:
                warnings.append(f"node {node.id}: solver status {out.status}; dropped")
                pruned_ub_max = max(pruned_ub_max, key)
                continue
            stats.nodes_explored += 1
            stats.max_depth = max(stats.max_depth, node.depth)
            ub_n = min(out.objective, node.parent_ub)
            node.parent_ub = ub_n
            x = out.x
            u_hat = x[model.u_idx]
            y_hat = x[model.y_idx]
            z_hat = x[model.z_idx]
            th_hat = x[model.th_idx]
            p_hat = np.clip(fmnl_untransform(instance, u_hat), instance.L, instance.U)
            rev_hat = float(revenue(instance, p_hat))
            if rev_hat > best_rev and not check_feasibility(instance, p_hat, 1e-6):
                candidate_p, candidate_rev = p_hat, rev_hat
                polished = gradient_local_search(instance, p_hat, polish_config)
                if (polished.revenue > candidate_rev
                        and not check_feasibility(instance, polished.prices, 1e-6)):
                    candidate_p, candidate_rev = polished.prices, polished.revenue
                    polish_improvements += 1
                if candidate_rev < best_rev:
                    lb_monotone = False
                best_rev = max(best_rev, candidate_rev)
                best_p = candidate_p
            delta, t_star = bilinear_violation(y_hat, th_hat, z_hat)
            if trace_fh:
                w_t = node.bounds.theta_hi[t_star] - node.bounds.theta_lo[t_star]
                w_z = node.bounds.z_hi[t_star] - node.bounds.z_lo[t_star]
                var = f"theta[{t_star}]" if w_t >= w_z else f"z[{t_star}]"
                trace_fh.write(
                    f"{node.id},{node.depth},{ub_n:.12g},{delta:.12g},{var}\n")
            heap_max = -heap[0][0] if heap else -math.inf
            if delta <= eps and max(ub_n, heap_max) - best_rev <= rel_gap_tol():
                # Best-first: once sibling bounds in the queue are also inside
                # the tolerance, a small bilinear violation at the best node
                # certifies global eps-optimality.
                pruned_ub_max = max(pruned_ub_max, ub_n)
                break
            if ub_n <= best_rev + rel_gap_tol():
                stats.nodes_pruned_bound += 1
                pruned_ub_max = max(pruned_ub_max, ub_n)
                continue
            try:
                children = branch(node, (y_hat, th_hat, z_hat),
                                  child_ids=(next_id, next_id + 1))
                next_id += 2
            except BranchStallError as exc:
                warnings.append(f"node {node.id}: {exc}; dropped")
                pruned_ub_max = max(pruned_ub_max, ub_n)
                continue
            for child in children:
                child.warm = x
                heapq.heappush(heap, (-ub_n, child.id, child))
    finally:
        if trace_fh:
            trace_fh.close()

    if best_p is None:
        raise InfeasibleProblemError("price polytope is empty")
    heap_max = max((-k for k, _, _ in heap), default=-math.inf)
    best_ub = max(best_rev, pruned_ub_max, heap_max)
    gap = max(0.0, best_ub - best_rev) / max(1.0, abs(best_rev))
    if status == EPS_OPTIMAL and gap > eps * (1.0 + 1e-9):
        status = TIME_LIMIT
    stats.best_ub = best_ub
    stats.best_lb = best_rev
    stats.wall_time = time.perf_counter() - t_start
    solution = Solution(
        prices=best_p,
        revenue=best_rev,
        status=status,
        gap=gap,
        diagnostics={
            "nodes_explored": stats.nodes_explored,
            "nodes_pruned_bound": stats.nodes_pruned_bound,
            "nodes_pruned_infeasible": stats.nodes_pruned_infeasible,
            "max_depth": stats.max_depth,
            "polish_improvements": polish_improvements,
            "ub_monotone": ub_monotone,
            "lb_monotone": lb_monotone,
            "warnings": warnings,
            "wall_time": stats.wall_time,
        },
    )
    return solution, stats
