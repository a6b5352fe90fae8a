"""Brute-force ground truth on tiny instances.

Exhaustive grid search over the price box intersected with the
constraints.  The returned value is a lower bound on the true optimum
with error at most (max grid spacing) x (sampled revenue-gradient
bound); both are logged in the diagnostics so callers can budget the
slack explicitly.
"""

from __future__ import annotations

import math

import numpy as np

from .model import (
    FEASIBLE_HEURISTIC,
    PricingInstance,
    Solution,
    revenue,
    revenue_gradient,
)

_GRID_FEAS_TOL = 1e-9
_CHUNK = 1 << 16
_MAX_GRID_DIM = 4


class NoFeasibleGridPointError(RuntimeError):
    """No grid point satisfied the constraints; refine or check interior."""


def _feasible_mask(instance: PricingInstance, P: np.ndarray) -> np.ndarray:
    mask = np.ones(P.shape[0], dtype=bool)
    for row in instance.capacity:
        mask &= P @ row.alpha <= row.beta + _GRID_FEAS_TOL
    for rule in instance.pairwise:
        mask &= P[:, rule.i] - P[:, rule.j] <= rule.r + _GRID_FEAS_TOL
    return mask


def grid_search(instance: PricingInstance, points_per_dim: int) -> Solution:
    """Best feasible grid point of the boxed price lattice."""
    if instance.m > _MAX_GRID_DIM:
        raise ValueError(f"grid search supports m <= {_MAX_GRID_DIM}")
    if points_per_dim < 2:
        raise ValueError("points_per_dim must be at least 2")
    axes = [np.linspace(instance.L[i], instance.U[i], points_per_dim)
            for i in range(instance.m)]
    spacing = max(
        (float(instance.U[i] - instance.L[i]) / (points_per_dim - 1)
         for i in range(instance.m)),
        default=0.0,
    )
    mesh = np.meshgrid(*axes, indexing="ij")
    P = np.stack([g.ravel() for g in mesh], axis=1)
    best_val = -math.inf
    best_p = None
    n_feasible = 0
    lipschitz = 0.0
    grad_stride = max(1, P.shape[0] // 10000)
    for lo in range(0, P.shape[0], _CHUNK):
        block = P[lo:lo + _CHUNK]
        mask = _feasible_mask(instance, block)
        feas = block[mask]
        if feas.shape[0] == 0:
            continue
        n_feasible += feas.shape[0]
        vals = revenue(instance, feas)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val = float(vals[k])
            best_p = feas[k].copy()
        grads = revenue_gradient(instance, feas[::grad_stride])
        lipschitz = max(lipschitz, float(np.abs(grads).max()))
    if best_p is None:
        raise NoFeasibleGridPointError(
            "no feasible grid point; the feasible set may have empty interior")
    slack = lipschitz * spacing * instance.m
    return Solution(
        prices=best_p,
        revenue=best_val,
        status=FEASIBLE_HEURISTIC,
        gap=slack,
        diagnostics={
            "points_per_dim": points_per_dim,
            "total_points": P.shape[0],
            "feasible_points": n_feasible,
            "grid_spacing": spacing,
            "lipschitz": lipschitz,
            "slack": slack,
            "refinements": 0,
        },
    )


def refine(instance: PricingInstance, solution: Solution, radius: float,
           points_per_dim: int) -> Solution:
    """Re-grid a radius-box around the incumbent; never leaves [L, U]."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    center = solution.prices
    sub = PricingInstance(
        m=instance.m, T=instance.T, a=instance.a, b=instance.b, d=instance.d,
        L=np.maximum(instance.L, center - radius),
        U=np.minimum(instance.U, center + radius),
        capacity=instance.capacity, pairwise=instance.pairwise,
        seed=instance.seed,
    )
    try:
        finer = grid_search(sub, points_per_dim)
    except NoFeasibleGridPointError:
        return solution
    if finer.revenue <= solution.revenue:
        best = solution
    else:
        best = finer
    diag = dict(best.diagnostics)
    diag["refinements"] = solution.diagnostics.get("refinements", 0) + 1
    return Solution(prices=best.prices, revenue=best.revenue,
                    status=FEASIBLE_HEURISTIC, gap=best.gap, diagnostics=diag)
