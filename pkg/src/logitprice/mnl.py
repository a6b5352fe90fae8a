"""Bisection scheme for constrained single-segment (MNL) pricing.

The fractional revenue objective is handled by a parametric root search:
for a revenue level theta, the value function

    phi(theta) = max_{p feasible} sum_i p_i e^{a_i - b_i p_i}
                 - theta (1 + sum_j e^{a_j - b_j p_j})

is continuous and strictly decreasing, and phi(theta) >= 0 exactly when
theta is attainable.  Each evaluation is a concave program in the
transformed variables u_i = exp(a_i - b_i p_i), solved by the barrier
engine; the outer loop is plain bisection, so the whole scheme reaches an
eps-optimal revenue in O(log(1/eps)) subproblem solves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import convex
from .baselines import feasible_interior_point
from .convex import _xlogx_range
from .model import (
    EPS_OPTIMAL,
    InfeasibleProblemError,
    PricingInstance,
    Solution,
    as_price_vector,
    check_feasibility,
    mnl_untransform,
    pairwise_to_u,
    revenue,
)


@dataclass(frozen=True)
class ThetaInterval:
    theta_min: float
    theta_max: float

    def __post_init__(self):
        if not 0 <= self.theta_min <= self.theta_max:
            raise ValueError("need 0 <= theta_min <= theta_max")

    @property
    def width(self) -> float:
        return self.theta_max - self.theta_min


def g_value(instance: PricingInstance, p, theta: float) -> float:
    """Dinkelbach objective G(p, theta) for a single-segment instance."""
    if instance.T != 1:
        raise ValueError("g_value requires a single-segment instance")
    p = as_price_vector(p, instance.m)
    w = np.exp(np.clip(instance.a[0] - instance.b * p, -700.0, 700.0))
    return float(w @ p - theta * (1.0 + w.sum()))


class _SubproblemModel:
    """Persistent program for max G(u, theta); theta enters linearly."""

    def __init__(self, instance: PricingInstance):
        if instance.T != 1:
            raise ValueError("subproblem requires a single-segment instance")
        self.instance = instance
        a, b = instance.a[0], instance.b
        m = instance.m
        self.u_lo = np.exp(a - b * instance.U)
        self.u_hi = np.exp(a - b * instance.L)
        prog = convex.ConvexProgram()
        self.u_idx = np.array(
            [prog.add_variable(f"u{i}", self.u_lo[i], self.u_hi[i]) for i in range(m)])
        s_idx, v_idx = [], []
        for i in range(m):
            s_lo, s_hi = _xlogx_range(self.u_lo[i], self.u_hi[i])
            s_idx.append(prog.add_variable(f"s{i}", s_lo - 1.0, s_hi + 1.0))
            v_lo, v_hi = a[i] - b[i] * instance.U[i], a[i] - b[i] * instance.L[i]
            v_idx.append(prog.add_variable(f"v{i}", v_lo - 0.5, v_hi + 0.5))
        for i in range(m):
            prog.add_entropy_epigraph(f"s{i}", f"u{i}")
            prog.add_log_hypograph(f"v{i}", f"u{i}")
            prog.set_linear_objective(f"s{i}", -1.0 / b[i])
        for row in instance.capacity:
            # sum_i (alpha_i / b_i) v_i >= sum_i alpha_i a_i / b_i - beta
            coeffs = {f"v{i}": -row.alpha[i] / b[i] for i in range(m)
                      if row.alpha[i] != 0.0}
            if coeffs:
                rhs = row.beta - float(np.sum(row.alpha * a / b))
                prog.add_linear_constraint(coeffs, rhs)
        for i, j, factor in pairwise_to_u(instance, "mnl"):
            prog.add_linear_constraint({f"u{j}": 1.0, f"u{i}": -factor}, 0.0)
        self.program = prog
        self._theta = None

    def solve(self, theta: float, tol: float, warm=None):
        """Return (phi(theta), maximizing u, raw solver point)."""
        a, b = self.instance.a[0], self.instance.b
        if self._theta != theta:
            for i in range(self.instance.m):
                self.program.set_linear_objective(f"u{i}", a[i] / b[i] - theta)
            self._theta = theta
        out = self.program.solve(tol=tol, start=warm)
        if out.status not in (convex.OPTIMAL, convex.INFEASIBLE) and warm is not None:
            # Retry once from scratch; a stale warm point can sink the solve.
            self.program._last_t = None
            out = self.program.solve(tol=tol)
        if out.status == convex.INFEASIBLE:
            raise InfeasibleProblemError("price polytope is empty")
        if out.status != convex.OPTIMAL or out.x is None:
            raise RuntimeError(f"subproblem solve failed: {out.status}")
        phi = out.objective - theta
        return phi, out.x[self.u_idx].copy(), out.x


def solve_subproblem(instance: PricingInstance, theta: float, tol: float = 1e-8):
    """phi(theta) and its maximizer in transformed variables."""
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    phi, u_star, _ = _SubproblemModel(instance).solve(theta, tol)
    return phi, u_star


def init_theta_interval(instance: PricingInstance) -> ThetaInterval:
    """Initial revenue bracket: a feasible point's revenue up to max_i U_i."""
    if instance.T != 1:
        raise ValueError("requires a single-segment instance")
    if not check_feasibility(instance, instance.L, tol=1e-9):
        p0 = instance.L
    else:
        p0 = feasible_interior_point(instance)
    theta_min = max(0.0, revenue(instance, p0))
    theta_max = max(float(instance.U.max()), theta_min)
    return ThetaInterval(theta_min, theta_max)


def bisection_solve(instance: PricingInstance, eps: float) -> Solution:
    """eps-optimal constrained MNL pricing via bisection on theta."""
    if instance.T != 1:
        raise ValueError("bisection requires a single-segment instance")
    if eps <= 0:
        raise ValueError("eps must be positive")
    interval = init_theta_interval(instance)
    tmin, tmax = interval.theta_min, interval.theta_max
    tol_sub = eps / 10.0
    model = _SubproblemModel(instance)
    best_u = None
    warm = None
    iterations = 0
    # Stop a shade below eps so the eps/10 subproblem error budget keeps
    # |revenue - theta*| within eps overall.
    target = 0.8 * eps
    while tmax - tmin > target:
        theta = 0.5 * (tmin + tmax)
        phi, u, warm = model.solve(theta, tol_sub, warm=warm)
        iterations += 1
        if phi >= -tol_sub:
            tmin, best_u = theta, u
        else:
            tmax = theta
    if best_u is None:
        _, best_u, _ = model.solve(tmin, tol_sub, warm=warm)
    p = np.clip(mnl_untransform(instance, best_u), instance.L, instance.U)
    rev = float(revenue(instance, p))
    return Solution(
        prices=p,
        revenue=rev,
        status=EPS_OPTIMAL,
        gap=max(0.0, tmax - rev),
        diagnostics={
            "iterations": iterations,
            "theta_min": tmin,
            "theta_max": tmax,
            "initial_interval": (interval.theta_min, interval.theta_max),
            "subproblem_tol": tol_sub,
        },
    )
