"""Pricing instances and exact evaluation of mixture-of-logit demand.

A pricing instance holds ``m`` products, ``T`` customer segments with
weights ``d``, utility intercepts ``a`` (T x m), shared price
sensitivities ``b > 0``, price boxes ``[L, U]``, and optional capacity
rows ``sum_i alpha_i p_i <= beta`` plus pairwise rules ``p_i <= p_j + r``.
Expected revenue is the d-weighted mixture of per-segment logit ratios;
the no-purchase option contributes the ``1 +`` in every denominator.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

# Utilities a - b*p are clamped here before exponentiation so that revenue
# evaluation stays total; instances whose price box drives utilities past
# the guard are rejected at validation.
UTILITY_CLAMP = 700.0

# Default absolute feasibility tolerance per constraint row.
FEASIBILITY_TOL = 1e-8

# Solution statuses.
OPTIMAL = "optimal"
EPS_OPTIMAL = "eps_optimal"
FEASIBLE_HEURISTIC = "feasible_heuristic"
INFEASIBLE = "infeasible"
TIME_LIMIT = "time_limit"
SOLUTION_STATUSES = frozenset(
    {OPTIMAL, EPS_OPTIMAL, FEASIBLE_HEURISTIC, INFEASIBLE, TIME_LIMIT}
)


class InfeasibleProblemError(RuntimeError):
    """Raised when the price polytope of an instance is empty."""


def _readonly(x, dtype=float):
    arr = np.array(x, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CapacityRow:
    """One coupling constraint sum_i alpha_i * p_i <= beta with alpha >= 0."""

    alpha: np.ndarray
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", _readonly(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))


@dataclass(frozen=True)
class PairwiseRule:
    """Price rule p_i <= p_j + r (0-based product indices)."""

    i: int
    j: int
    r: float


@dataclass(frozen=True)
class PricingInstance:
    m: int
    T: int
    a: np.ndarray            # (T, m) utility intercepts
    b: np.ndarray            # (m,) price sensitivities, > 0
    d: np.ndarray            # (T,) segment weights, > 0, sum to 1
    L: np.ndarray            # (m,) price lower bounds, >= 0
    U: np.ndarray            # (m,) price upper bounds
    capacity: tuple = ()     # tuple[CapacityRow]
    pairwise: tuple = ()     # tuple[PairwiseRule]
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "T", int(self.T))
        object.__setattr__(self, "a", _readonly(np.atleast_2d(self.a)))
        object.__setattr__(self, "b", _readonly(self.b))
        object.__setattr__(self, "d", _readonly(np.atleast_1d(self.d)))
        object.__setattr__(self, "L", _readonly(self.L))
        object.__setattr__(self, "U", _readonly(self.U))
        object.__setattr__(self, "capacity", tuple(self.capacity))
        object.__setattr__(self, "pairwise", tuple(self.pairwise))
        self._validate()

    def _validate(self):
        m, T = self.m, self.T
        if m < 1 or T < 1:
            raise ValueError("need at least one product and one segment")
        if self.a.shape != (T, m):
            raise ValueError(f"a must have shape ({T}, {m}), got {self.a.shape}")
        for name, vec, n in (("b", self.b, m), ("d", self.d, T),
                             ("L", self.L, m), ("U", self.U, m)):
            if vec.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
        for name, arr in (("a", self.a), ("b", self.b), ("d", self.d),
                          ("L", self.L), ("U", self.U)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        if np.any(self.b <= 0):
            raise ValueError("price sensitivities b must be strictly positive")
        if np.any(self.d <= 0):
            raise ValueError("segment weights d must be strictly positive")
        if abs(float(self.d.sum()) - 1.0) > 1e-12:
            raise ValueError("segment weights d must sum to 1 within 1e-12")
        if np.any(self.L < 0):
            raise ValueError("negative price lower bounds are not supported")
        if np.any(self.L > self.U):
            raise ValueError("need L <= U componentwise")
        for k, row in enumerate(self.capacity):
            if row.alpha.shape != (m,):
                raise ValueError(f"capacity row {k}: alpha must have shape ({m},)")
            if np.any(row.alpha < 0) or not np.all(np.isfinite(row.alpha)):
                raise ValueError(f"capacity row {k}: alpha must be finite and >= 0")
            if not math.isfinite(row.beta):
                raise ValueError(f"capacity row {k}: beta must be finite")
        for rule in self.pairwise:
            if not (0 <= rule.i < m and 0 <= rule.j < m) or rule.i == rule.j:
                raise ValueError(f"pairwise rule has invalid indices ({rule.i}, {rule.j})")
            if not math.isfinite(rule.r):
                raise ValueError("pairwise margin r must be finite")
        if self.pairwise and float(np.ptp(self.b)) > 1e-12:
            raise ValueError("pairwise rules require a common price sensitivity b")
        # Utilities over the whole price box must stay inside the exp guard.
        hi = self.a - self.b[None, :] * self.L[None, :]
        lo = self.a - self.b[None, :] * self.U[None, :]
        if float(hi.max()) > UTILITY_CLAMP or float(lo.min()) < -UTILITY_CLAMP:
            raise ValueError("price box drives utilities beyond the +-700 guard")

    @property
    def common_b(self) -> float:
        if float(np.ptp(self.b)) > 1e-12:
            raise ValueError("instance does not have a common price sensitivity")
        return float(self.b[0])


def as_price_vector(p, m: int) -> np.ndarray:
    """Validate and return a finite price vector of length m."""
    arr = np.asarray(p, dtype=float)
    if arr.shape != (m,):
        raise ValueError(f"price vector must have shape ({m},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("price vector contains non-finite entries")
    return arr


def _segment_weights(instance: PricingInstance, p: np.ndarray) -> np.ndarray:
    """exp(a - b*p) per segment, clamped; p may be (m,) or (N, m)."""
    util = instance.a - instance.b * p[..., None, :]
    return np.exp(np.clip(util, -UTILITY_CLAMP, UTILITY_CLAMP))


def revenue(instance: PricingInstance, p) -> float | np.ndarray:
    """Expected revenue at prices p; accepts (m,) or a batch (N, m)."""
    p = np.asarray(p, dtype=float)
    w = _segment_weights(instance, p)                    # (..., T, m)
    if p.ndim == 1:
        num = w @ p
    else:
        num = np.einsum("nm,ntm->nt", p, w)
    den = 1.0 + w.sum(axis=-1)
    mix = (instance.d * (num / den)).sum(axis=-1)
    return float(mix) if p.ndim == 1 else mix


def revenue_gradient(instance: PricingInstance, p) -> np.ndarray:
    """Analytic gradient of revenue(); accepts (m,) or a batch (N, m)."""
    p = np.asarray(p, dtype=float)
    w = _segment_weights(instance, p)                    # (..., T, m)
    if p.ndim == 1:
        num = w @ p
    else:
        num = np.einsum("nm,ntm->nt", p, w)
    den = 1.0 + w.sum(axis=-1)
    # d(num_t/den_t)/dp_i = w_ti * ((1 - b_i p_i) den_t + b_i num_t) / den_t^2
    inner = ((1.0 - instance.b * p)[..., None, :] * den[..., None]
             + instance.b * num[..., None])
    return np.einsum("...t,...tm->...m", instance.d / den ** 2, w * inner)


def choice_probability(instance: PricingInstance, t: int, i: int | None, p) -> float:
    """P_t(i | p); pass i=None for the no-purchase option."""
    if not 0 <= t < instance.T:
        raise IndexError(f"segment index {t} out of range")
    if i is not None and not 0 <= i < instance.m:
        raise IndexError(f"product index {i} out of range")
    p = as_price_vector(p, instance.m)
    w = _segment_weights(instance, p)[t]
    den = 1.0 + w.sum()
    return float(1.0 / den) if i is None else float(w[i] / den)


@dataclass(frozen=True)
class Violation:
    """One violated constraint row: kind, identifying index, magnitude."""

    kind: str                 # lower_bound | upper_bound | capacity | pairwise
    index: int | tuple
    amount: float


def check_feasibility(instance: PricingInstance, p, tol: float = FEASIBILITY_TOL):
    """List every constraint violated by more than tol (empty iff feasible)."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    p = as_price_vector(p, instance.m)
    out = []
    for i in range(instance.m):
        if p[i] < instance.L[i] - tol:
            out.append(Violation("lower_bound", i, float(instance.L[i] - p[i])))
        if p[i] > instance.U[i] + tol:
            out.append(Violation("upper_bound", i, float(p[i] - instance.U[i])))
    for k, row in enumerate(instance.capacity):
        excess = float(row.alpha @ p - row.beta)
        if excess > tol:
            out.append(Violation("capacity", k, excess))
    for rule in instance.pairwise:
        excess = float(p[rule.i] - p[rule.j] - rule.r)
        if excess > tol:
            out.append(Violation("pairwise", (rule.i, rule.j), excess))
    return out


# ---------------------------------------------------------------------------
# Variable transforms
# ---------------------------------------------------------------------------

def _require_single_segment(instance: PricingInstance):
    if instance.T != 1:
        raise ValueError("operation requires a single-segment (T=1) instance")


def mnl_transform(instance: PricingInstance, p) -> np.ndarray:
    """u_i = exp(a_i - b_i p_i) for a single-segment instance."""
    _require_single_segment(instance)
    p = as_price_vector(p, instance.m)
    return np.exp(instance.a[0] - instance.b * p)


def mnl_untransform(instance: PricingInstance, u) -> np.ndarray:
    """Inverse map p_i = (a_i - ln u_i) / b_i; requires u > 0."""
    _require_single_segment(instance)
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise ValueError("transformed variables must be strictly positive")
    return (instance.a[0] - np.log(u)) / instance.b


def fmnl_transform(instance: PricingInstance, p) -> np.ndarray:
    """u_i = exp(-b_i p_i), the intercept-free map used for mixtures."""
    p = as_price_vector(p, instance.m)
    return np.exp(-instance.b * p)


def fmnl_untransform(instance: PricingInstance, u) -> np.ndarray:
    """Inverse map p_i = -ln(u_i) / b_i; requires u > 0."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise ValueError("transformed variables must be strictly positive")
    return -np.log(u) / instance.b


def transformed_revenue_mnl(instance: PricingInstance, u) -> float:
    """Single-segment revenue in transformed variables.

    R(u) = sum_i (1/b_i) u_i (a_i - ln u_i) / (1 + sum_j u_j); equals
    revenue(instance, mnl_untransform(u)) and is strictly quasiconcave
    on u > 0.
    """
    _require_single_segment(instance)
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise ValueError("transformed variables must be strictly positive")
    num = np.sum(u * (instance.a[0] - np.log(u)) / instance.b)
    return float(num / (1.0 + u.sum()))


def pairwise_to_u(instance: PricingInstance, variant: str):
    """Linear rows equivalent to the pairwise price rules in u-space.

    Returns a list of (i, j, factor) meaning u_j <= factor * u_i, one per
    rule p_i <= p_j + r.  ``variant`` selects the transform the caller is
    working in: "fmnl" for u = exp(-b p), "mnl" for u = exp(a - b p)
    (single segment only).
    """
    if variant not in ("fmnl", "mnl"):
        raise ValueError("variant must be 'fmnl' or 'mnl'")
    if not instance.pairwise:
        return []
    b = instance.common_b
    if variant == "mnl":
        _require_single_segment(instance)
        a = instance.a[0]
    rows = []
    for rule in instance.pairwise:
        if variant == "fmnl":
            factor = math.exp(b * rule.r)
        else:
            factor = math.exp(a[rule.j] - a[rule.i] + b * rule.r)
        rows.append((rule.i, rule.j, factor))
    return rows


# ---------------------------------------------------------------------------
# Solutions
# ---------------------------------------------------------------------------

@dataclass
class Solution:
    """Result of a pricing method: prices, revenue, certification status."""

    prices: np.ndarray | None
    revenue: float
    status: str
    gap: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status not in SOLUTION_STATUSES:
            raise ValueError(f"unknown solution status {self.status!r}")
        if self.gap < 0:
            raise ValueError("gap must be nonnegative")
        if self.prices is not None:
            self.prices = np.asarray(self.prices, dtype=float)


# ---------------------------------------------------------------------------
# Instance JSON format
# ---------------------------------------------------------------------------

_TOP_FIELDS = {"m", "T", "a", "b", "d", "L", "U", "capacity", "pairwise", "seed"}


def instance_to_dict(instance: PricingInstance) -> dict:
    return {
        "m": instance.m,
        "T": instance.T,
        "a": instance.a.tolist(),
        "b": instance.b.tolist(),
        "d": instance.d.tolist(),
        "L": instance.L.tolist(),
        "U": instance.U.tolist(),
        "capacity": [{"alpha": r.alpha.tolist(), "beta": r.beta} for r in instance.capacity],
        "pairwise": [{"i": r.i, "j": r.j, "r": r.r} for r in instance.pairwise],
        "seed": instance.seed,
    }


def instance_from_dict(doc: dict) -> PricingInstance:
    if not isinstance(doc, dict):
        raise ValueError("instance document must be a JSON object")
    unknown = set(doc) - _TOP_FIELDS
    if unknown:
        raise ValueError(f"unknown instance fields: {sorted(unknown)}")
    missing = _TOP_FIELDS - set(doc)
    if missing:
        raise ValueError(f"missing instance fields: {sorted(missing)}")
    capacity = []
    for k, row in enumerate(doc["capacity"]):
        extra = set(row) - {"alpha", "beta"}
        if extra:
            raise ValueError(f"capacity row {k}: unknown fields {sorted(extra)}")
        capacity.append(CapacityRow(alpha=row["alpha"], beta=row["beta"]))
    pairwise = []
    for k, rule in enumerate(doc["pairwise"]):
        extra = set(rule) - {"i", "j", "r"}
        if extra:
            raise ValueError(f"pairwise rule {k}: unknown fields {sorted(extra)}")
        pairwise.append(PairwiseRule(i=int(rule["i"]), j=int(rule["j"]), r=float(rule["r"])))
    return PricingInstance(
        m=doc["m"], T=doc["T"], a=doc["a"], b=doc["b"], d=doc["d"],
        L=doc["L"], U=doc["U"], capacity=capacity, pairwise=pairwise,
        seed=doc["seed"],
    )


def save_instance(instance: PricingInstance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_dict(instance), fh, indent=2)
        fh.write("\n")


def load_instance(path) -> PricingInstance:
    with open(path, "r", encoding="utf-8") as fh:
        return instance_from_dict(json.load(fh))
