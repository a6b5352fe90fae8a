"""Constrained price optimization under multinomial and mixture logit demand.

Exact methods (bisection for one segment, spatial branch-and-bound for
mixtures) over a built-in barrier interior-point engine, plus baselines,
a brute-force oracle, and a benchmark harness.
"""

from .model import (
    CapacityRow,
    PairwiseRule,
    PricingInstance,
    Solution,
    Violation,
    check_feasibility,
    choice_probability,
    load_instance,
    revenue,
    revenue_gradient,
    save_instance,
)

__all__ = [
    "CapacityRow",
    "PairwiseRule",
    "PricingInstance",
    "Solution",
    "Violation",
    "check_feasibility",
    "choice_probability",
    "load_instance",
    "revenue",
    "revenue_gradient",
    "save_instance",
]

__version__ = "0.1.0"
