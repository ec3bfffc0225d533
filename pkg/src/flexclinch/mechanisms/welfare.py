from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..model import DegenerateDemandError, DiscomfortModel, RewardParams, User, desired_reduction

DEFAULT_TOLERANCE = 1e-10


def solve_welfare_max(
    users: Sequence[User],
    reward: RewardParams,
    tolerance: float = DEFAULT_TOLERANCE,
    discomforts: Sequence[DiscomfortModel] | None = None,
) -> tuple[np.ndarray, float]:
    """Welfare-maximizing reductions for ``users`` and the supporting price.

    Bisects on the per-unit reward for the point where aggregate best
    responses meet the operator's demand curve (marginal reward equals every
    interior user's marginal discomfort). The returned price is the lower end
    of the final bracket, so the allocation never overshoots demand.

    ``discomforts`` overrides the users' own models (reported functions).
    """
    if reward.b <= 0:
        raise DegenerateDemandError("welfare maximization needs b > 0")
    models = [u.discomfort for u in users] if discomforts is None else list(discomforts)
    caps = [u.q_max for u in users]

    def supply(lam: float) -> np.ndarray:
        return np.array([m.best_response(lam, c) for m, c in zip(models, caps)], dtype=float)

    lo, hi = 0.0, reward.a
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if math.fsum(supply(mid).tolist()) >= desired_reduction(mid, reward):
            hi = mid
        else:
            lo = mid
    return supply(lo), lo
