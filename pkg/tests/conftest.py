"""Shared helpers for the test suite."""

import numpy as np
import pytest

from logitprice import harness
from logitprice.model import CapacityRow, PairwiseRule, PricingInstance


def single_product(a=0.0, b=1.0, L=0.0, U=10.0):
    return PricingInstance(m=1, T=1, a=[[a]], b=[b], d=[1.0], L=[L], U=[U])


def two_product_capacity():
    """a=0, b=1, box [0,10]^2, one row p1 + p2 <= 2."""
    return PricingInstance(
        m=2, T=1, a=[[0.0, 0.0]], b=[1.0, 1.0], d=[1.0],
        L=[0.0, 0.0], U=[10.0, 10.0],
        capacity=[CapacityRow(alpha=[1.0, 1.0], beta=2.0)],
    )


def bimodal_instance():
    """Verified bimodal single-product mixture.

    Modes at p ~ 1.85194 (revenue 0.17068737) and p ~ 5.23890
    (revenue 0.18862222, global); the dip between them sits at ~0.16909.
    """
    return PricingInstance(m=1, T=2, a=[[7.0], [-1.0]], b=[1.0],
                           d=[0.04, 0.96], L=[0.0], U=[12.0])


BIMODAL_POOR_P = 1.851940861381068
BIMODAL_POOR_REV = 0.17068737233974418
BIMODAL_GLOBAL_P = 5.238903313177234
BIMODAL_GLOBAL_REV = 0.18862222351438712


def spec_mixture_instance():
    """The m=1, T=2 mixture with intercepts (4, -2); grid optimum frozen."""
    return PricingInstance(m=1, T=2, a=[[4.0], [-2.0]], b=[0.8],
                           d=[0.5, 0.5], L=[0.0], U=[12.0])


SPEC_MIXTURE_REV = 1.3909409973609899
SPEC_MIXTURE_P = 3.988056


def random_instance(seed, m=2, T=1, mode="C"):
    return harness.generate_instance(m, T, mode, seed)


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
