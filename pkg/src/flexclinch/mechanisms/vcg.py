from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..model import DiscomfortModel, Instance, reward_total
from .outcome import MechanismTag, Outcome
from .welfare import DEFAULT_TOLERANCE, solve_welfare_max


def run_vcg(
    instance: Instance,
    discomforts: Sequence[DiscomfortModel] | None = None,
    tolerance: float = DEFAULT_TOLERANCE,
    literal_pivot: bool = False,
    solver=solve_welfare_max,
) -> Outcome:
    """Direct-revelation VCG with Clarke pivot rewards.

    ``discomforts`` are the declared functions (defaults to the true ones).
    Each user is paid the welfare of the others with it present minus their
    welfare with it absent; the operator reward in the first term is taken at
    the full reduction including the user's own share. ``literal_pivot``
    evaluates that term at the others' reduction only, which breaks the
    equivalence with the clinching auction and is kept for comparison.
    """
    if instance.n == 0:
        return Outcome.empty(MechanismTag.VCG)
    models = [u.discomfort for u in instance.users] if discomforts is None else list(discomforts)
    reward = instance.reward

    allocation, lam = solver(instance.users, reward, tolerance, discomforts=models)
    costs = [m(float(q)) for m, q in zip(models, allocation)]
    D = min(math.fsum(allocation.tolist()), reward.L)

    payment = np.zeros(instance.n)
    for i in range(instance.n):
        others = [j for j in range(instance.n) if j != i]
        others_cost = math.fsum(costs[j] for j in others)
        if literal_pivot:
            with_i = reward_total(math.fsum(allocation[j] for j in others), reward) - others_cost
        else:
            with_i = reward_total(D, reward) - others_cost
        sub_users = [instance.users[j] for j in others]
        sub_models = [models[j] for j in others]
        alt, _ = solver(sub_users, reward, tolerance, discomforts=sub_models)
        D_alt = min(math.fsum(alt.tolist()), reward.L)
        without_i = reward_total(D_alt, reward) - math.fsum(
            m(float(q)) for m, q in zip(sub_models, alt)
        )
        payment[i] = with_i - without_i
    return Outcome.build(instance, allocation, payment, MechanismTag.VCG, final_price=lam)
