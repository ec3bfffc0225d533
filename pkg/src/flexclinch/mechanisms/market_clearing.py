from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..agents import AgentPolicy, truthful_policies
from ..model import DegenerateDemandError, Instance, desired_reduction
from .outcome import MechanismTag, Outcome
from .welfare import DEFAULT_TOLERANCE


def clearing_price(instance: Instance, policies: Sequence[AgentPolicy],
                   tolerance: float = DEFAULT_TOLERANCE) -> float:
    """Lowest-bracket price at which reported supply meets operator demand."""
    reward = instance.reward
    if reward.b <= 0:
        raise DegenerateDemandError("market clearing needs b > 0")
    lo, hi = 0.0, reward.a
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if math.fsum(p.quantity(mid) for p in policies) >= desired_reduction(mid, reward):
            hi = mid
        else:
            lo = mid
    return lo


def run_market_clearing(
    instance: Instance,
    policies: Sequence[AgentPolicy] | None = None,
    tolerance: float = DEFAULT_TOLERANCE,
) -> Outcome:
    """Uniform-price benchmark: everyone is paid the clearing price per unit."""
    if instance.n == 0:
        return Outcome.empty(MechanismTag.MARKET_CLEARING)
    if policies is None:
        policies = truthful_policies(instance)
    lam = clearing_price(instance, policies, tolerance)
    allocation = np.array([p.quantity(lam) for p in policies], dtype=float)
    return Outcome.build(instance, allocation, lam * allocation, MechanismTag.MARKET_CLEARING,
                         final_price=lam)
