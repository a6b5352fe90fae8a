"""Comparison methods: projected-gradient local search, Euclidean
projection onto the price polytope, and single-segment aggregation.

These are the heuristics the exact methods are benchmarked against.
Local search is projected gradient ascent with backtracking and an
adaptive step, so every accepted iterate is feasible and revenue is
monotone along the run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import convex
from .model import (
    FEASIBLE_HEURISTIC,
    InfeasibleProblemError,
    PricingInstance,
    Solution,
    as_price_vector,
    check_feasibility,
    revenue,
    revenue_gradient,
)


@dataclass
class LocalSearchConfig:
    max_iters: int = 200
    kkt_tol: float = 1e-6
    n_starts: int = 8
    seed: int = 0
    step_init: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4

    def __post_init__(self):
        if self.max_iters <= 0 or self.n_starts <= 0:
            raise ValueError("iteration and start counts must be positive")
        if self.kkt_tol < 0 or self.step_init <= 0 or self.armijo <= 0:
            raise ValueError("tolerances and step parameters must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink factor must lie in (0, 1)")


def _polytope_program(instance: PricingInstance) -> convex.ConvexProgram:
    """Price-space polytope (boxes + capacity + pairwise) as a program."""
    prog = convex.ConvexProgram()
    for i in range(instance.m):
        prog.add_variable(f"p{i}", instance.L[i], instance.U[i])
    for row in instance.capacity:
        coeffs = {f"p{i}": float(row.alpha[i]) for i in range(instance.m)
                  if row.alpha[i] != 0.0}
        if coeffs:
            prog.add_linear_constraint(coeffs, row.beta)
    for rule in instance.pairwise:
        prog.add_linear_constraint({f"p{rule.i}": 1.0, f"p{rule.j}": -1.0}, rule.r)
    return prog


def feasible_interior_point(instance: PricingInstance) -> np.ndarray:
    """A strictly interior point of the price polytope.

    Raises InfeasibleProblemError when the polytope is empty.
    """
    ph = _polytope_program(instance).phase_one()
    if not ph.feasible:
        raise InfeasibleProblemError(
            f"price polytope is empty (aggregate infeasibility {ph.infeasibility:.3g})")
    return ph.point


class _Projector:
    """Euclidean projection onto one instance's polytope, reusable.

    Keeps a persistent engine program so repeated projections (every
    projected-gradient step) warm-start instead of rebuilding.
    """

    def __init__(self, instance: PricingInstance):
        self.instance = instance
        self.box_only = not instance.capacity and not instance.pairwise
        if not self.box_only:
            self.program = _polytope_program(instance)
            for i in range(instance.m):
                self.program.set_quadratic_objective(f"p{i}", 1.0)

    def __call__(self, p0) -> np.ndarray:
        instance = self.instance
        p0 = as_price_vector(p0, instance.m)
        if self.box_only:
            return np.clip(p0, instance.L, instance.U)
        if not check_feasibility(instance, p0, tol=0.0):
            return p0.copy()
        for i in range(instance.m):
            self.program.set_linear_objective(f"p{i}", 2.0 * p0[i])
        # Objective-relative tolerance; the active-set refit below restores
        # exactness, so the barrier stage only has to identify the geometry.
        tol = 1e-8 * (1.0 + float(p0 @ p0))
        out = self.program.solve(tol=tol, start=self.program._warm)
        if out.status == convex.INFEASIBLE:
            raise InfeasibleProblemError("price polytope is empty")
        if out.status != convex.OPTIMAL:
            self.program._last_t = None
            out = self.program.solve(tol=tol)
        if out.x is None or out.status == convex.INFEASIBLE:
            raise InfeasibleProblemError("price polytope is empty")
        if out.status != convex.OPTIMAL:
            raise RuntimeError(f"projection solve failed with status {out.status}")
        p_bar = out.x[: instance.m].copy()
        p_ref = _active_set_refit(instance, p0, p_bar)
        return p_ref if p_ref is not None else p_bar


def project_prices(instance: PricingInstance, p0) -> np.ndarray:
    """Euclidean projection of p0 onto the price polytope.

    Solved through the convex engine's quadratic objective, then refined
    by an exact KKT solve on the detected active set so that projecting
    an already-feasible point returns it unchanged.
    """
    return _Projector(instance)(p0)


def _active_set_refit(instance, p0, p_bar):
    """Exact projection on the active set guessed from the barrier point."""
    m = instance.m
    rows, rhs = [], []
    for i in range(m):
        thr = 1e-5 * (1.0 + abs(instance.U[i] - instance.L[i]))
        if p_bar[i] - instance.L[i] <= thr:
            e = np.zeros(m); e[i] = -1.0
            rows.append(e); rhs.append(-instance.L[i])
        elif instance.U[i] - p_bar[i] <= thr:
            e = np.zeros(m); e[i] = 1.0
            rows.append(e); rhs.append(instance.U[i])
    for row in instance.capacity:
        if row.beta - float(row.alpha @ p_bar) <= 1e-5 * (1.0 + abs(row.beta)):
            rows.append(np.asarray(row.alpha, dtype=float)); rhs.append(row.beta)
    for rule in instance.pairwise:
        if rule.r - (p_bar[rule.i] - p_bar[rule.j]) <= 1e-5 * (1.0 + abs(rule.r)):
            e = np.zeros(m); e[rule.i] = 1.0; e[rule.j] = -1.0
            rows.append(e); rhs.append(rule.r)
    if not rows:
        return p0.copy() if not check_feasibility(instance, p0, tol=1e-12) else None
    A = np.vstack(rows)
    bvec = np.asarray(rhs, dtype=float)
    k = A.shape[0]
    kkt = np.zeros((m + k, m + k))
    kkt[:m, :m] = 2.0 * np.eye(m)
    kkt[:m, m:] = A.T
    kkt[m:, :m] = A
    sol, *_ = np.linalg.lstsq(kkt, np.concatenate([2.0 * p0, bvec]), rcond=None)
    p_ref, mu = sol[:m], sol[m:]
    if np.any(mu < -1e-7):
        return None
    if check_feasibility(instance, p_ref, tol=1e-9):
        return None
    if float(np.max(np.abs(p_ref - p_bar))) > 1e-3 * (1.0 + float(np.max(np.abs(p_bar)))):
        return None
    return np.clip(p_ref, instance.L, instance.U)


def gradient_local_search(instance: PricingInstance, start,
                          config: LocalSearchConfig | None = None,
                          _projector: _Projector | None = None) -> Solution:
    """Projected gradient ascent from one start point."""
    config = config or LocalSearchConfig()
    project = _projector if _projector is not None else _Projector(instance)
    p = project(start)
    rev = revenue(instance, p)
    eta = config.step_init
    iterations = 0
    pg_norm = math.inf
    for _ in range(config.max_iters):
        g = revenue_gradient(instance, p)
        accepted = False
        for _bt in range(60):
            cand = project(p + eta * g)
            move = cand - p
            mn = float(np.linalg.norm(move))
            pg_norm = mn / eta
            if pg_norm <= config.kkt_tol:
                break
            rc = revenue(instance, cand)
            if rc >= rev + config.armijo * mn * mn / eta:
                p, rev = cand, float(rc)
                eta = min(eta * 2.0, 1e12)
                accepted = True
                break
            eta *= config.shrink
            if eta < 1e-16:
                break
        iterations += 1
        if not accepted:
            break
    return Solution(
        prices=p, revenue=rev, status=FEASIBLE_HEURISTIC, gap=math.inf,
        diagnostics={"iterations": iterations, "pg_norm": pg_norm,
                     "converged": pg_norm <= config.kkt_tol},
    )


def multistart(instance: PricingInstance, config: LocalSearchConfig | None = None) -> Solution:
    """Best of n_starts seeded local searches; deterministic given the seed."""
    config = config or LocalSearchConfig()
    best = None
    projector = _Projector(instance)
    for k in range(config.n_starts):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=config.seed, spawn_key=(k,)))
        p0 = instance.L + rng.random(instance.m) * (instance.U - instance.L)
        sol = gradient_local_search(instance, p0, config, _projector=projector)
        if best is None or sol.revenue > best.revenue:
            best = sol
            best.diagnostics["start_index"] = k
    best.diagnostics["n_starts"] = config.n_starts
    return best


def aggregate_segments(instance: PricingInstance, weighted: bool = False) -> PricingInstance:
    """Collapse the mixture to a single segment by averaging intercepts.

    The default averages rows of `a` with equal weights; ``weighted=True``
    uses the segment weights d instead (sensitivity variant).
    """
    if weighted:
        a_bar = instance.d @ instance.a
    else:
        a_bar = instance.a.mean(axis=0)
    return PricingInstance(
        m=instance.m, T=1, a=a_bar.reshape(1, -1), b=instance.b, d=[1.0],
        L=instance.L, U=instance.U, capacity=instance.capacity,
        pairwise=instance.pairwise, seed=instance.seed,
    )
