"""Descending-reward clinching auction.

The operator's per-unit reward starts at ``a`` and falls by ``epsilon`` per
iteration. While reported supply exceeds demand, each user clinches whatever
part of demand its rivals can no longer cover; those units are fixed at the
current reward. When supply first drops to demand, the leftover demand at the
previous reward is rationed among the previous bids.

All sums of quantities are exactly rounded (``math.fsum``), so the result is
independent of summation order. The distributed simulator in
:mod:`flexclinch.protocol` reproduces these numbers bit for bit and reuses
the scalar helpers below.
"""

from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np

from ..agents import AgentPolicy, truthful_policies
from ..model import DegenerateDemandError, InputError, Instance, desired_reduction_array, reward_total
from .outcome import ClinchLedger, MechanismError, MechanismTag, Outcome

log = logging.getLogger(__name__)

CHUNK = 4096


def price_at(a: float, k: int, epsilon: float) -> float:
    # multiplication, not repeated subtraction: no drift over 1e5+ steps
    return a - k * epsilon


def iteration_cap(a: float, epsilon: float) -> int:
    return math.ceil(a / epsilon) + 2


def clinchable(others_supply: float, demand: float) -> float:
    """Cumulative units a user is guaranteed: demand its rivals cannot cover."""
    return max(0.0, demand - others_supply)


def ration_share(excess: float, numerator: float, denominator: float) -> float:
    if denominator <= 0 or numerator <= 0:
        return 0.0
    return excess * numerator / denominator


def _others_supply(bids: Sequence[float]) -> list[float]:
    bids = [float(x) for x in bids]
    return [math.fsum(bids[:i] + bids[i + 1:]) for i in range(len(bids))]


def clinch_step(bids, demand: float, prior_cumulative) -> np.ndarray:
    """New clinches at one price given every bid and prior cumulative clinches.

    User ``i``'s increment depends only on ``demand``, the other bids and its
    own prior total.
    """
    bids = np.asarray(bids, dtype=float)
    prior = np.asarray(prior_cumulative, dtype=float)
    if (bids < 0).any() or (prior < 0).any() or demand < 0:
        raise InputError("quantities must be nonnegative")
    cum = np.array([clinchable(s, demand) for s in _others_supply(bids)])
    return np.maximum(0.0, cum - prior)


def final_rationing(bids, prior_cumulative, demand: float, literal: bool = False) -> np.ndarray:
    """Split the demand left at the second-to-last price among those bids.

    By default the residual ``demand - sum(prior)`` is shared in proportion
    to each bid net of its prior clinches, so totals reach ``demand``
    exactly. ``literal`` scales net bids by ``demand / sum(bids)`` instead.
    """
    bids = np.asarray(bids, dtype=float)
    prior = np.asarray(prior_cumulative, dtype=float)
    num, den, excess = rationing_terms(bids, prior, demand, literal)
    return np.array([ration_share(float(e), num, den) for e in excess])


def rationing_terms(bids: np.ndarray, prior: np.ndarray, demand: float, literal: bool):
    if literal:
        excess = bids - prior
        return demand, math.fsum(bids.tolist()), excess
    excess = np.maximum(0.0, bids - prior)
    return demand - math.fsum(prior.tolist()), math.fsum(excess.tolist()), excess


def run_mca(
    instance: Instance,
    policies: Sequence[AgentPolicy] | None = None,
    epsilon: float = 1e-5,
    literal_rationing: bool = False,
) -> tuple[Outcome, ClinchLedger]:
    ledger = ClinchLedger(instance.user_ids)
    n = instance.n
    if n == 0:
        return Outcome.empty(MechanismTag.MCA), ledger
    if not epsilon > 0:
        raise InputError(f"epsilon must be positive (got {epsilon})")
    reward = instance.reward
    if reward.b <= 0:
        raise DegenerateDemandError("the clinching auction needs b > 0")
    if policies is None:
        policies = truthful_policies(instance)
    a = reward.a

    # trivial case: at the top reward the whole offered supply is worth less
    # than what the operator would pay for it; everyone sheds its bid and the
    # reward is shared pro rata
    top = np.array([p.quantity(a) for p in policies], dtype=float)
    S = math.fsum(top.tolist())
    S_dom = min(S, reward.L)
    if a * S <= reward_total(S_dom, reward):
        log.info("full-shutdown case: supply %.6g at the top reward", S)
        pay = top * (reward_total(S_dom, reward) / S) if S > 0 else np.zeros(n)
        ledger.record(0, a, top)
        return Outcome.build(instance, top, pay, MechanismTag.MCA, final_price=a, iterations=0), ledger

    cap = iteration_cap(a, epsilon)
    prior = np.zeros(n)
    pay = np.zeros(n)
    prev = None  # (k, lam, bids, total, demand) of the latest non-terminal iteration
    terminal = None
    k0 = 0
    while terminal is None:
        ks = np.arange(k0, min(k0 + CHUNK, cap + 1))
        if ks.size == 0:
            raise MechanismError(f"no termination within {cap} iterations (epsilon={epsilon})")
        lams = a - ks.astype(float) * epsilon
        bids = np.column_stack([p.quantities(lams) for p in policies])
        demand = desired_reduction_array(lams, reward)
        totals = np.fromiter(map(math.fsum, bids.tolist()), dtype=float, count=ks.size)
        stop = demand >= totals
        end = int(np.argmax(stop)) if stop.any() else ks.size

        # cheap screen for rows where someone might clinch; exact check below
        approx = demand[:end, None] - (totals[:end, None] - bids[:end])
        slack = 1e-9 * (1.0 + np.abs(demand[:end]))
        for r in np.flatnonzero((approx > -slack[:, None]).any(axis=1)):
            cum = np.array([clinchable(s, demand[r]) for s in _others_supply(bids[r])])
            inc = np.maximum(0.0, cum - prior)
            if inc.any():
                ledger.record(ks[r], lams[r], inc)
                prior = prior + inc
                pay = pay + lams[r] * inc
        if end > 0:
            prev = (int(ks[end - 1]), float(lams[end - 1]), bids[end - 1].copy(),
                    float(totals[end - 1]), float(demand[end - 1]))
        if end < ks.size:
            terminal = int(ks[end])
        k0 += ks.size

    if prev is None:
        # demand already covered at the top reward: nothing offered at all
        return Outcome.build(instance, prior, pay, MechanismTag.MCA, final_price=a,
                             iterations=terminal), ledger

    k_prev, lam_prev, bids_prev, _, demand_prev = prev
    share = final_rationing(bids_prev, prior, demand_prev, literal=literal_rationing)
    ledger.record(k_prev, lam_prev, share, rationing=True)
    prior = prior + share
    pay = pay + lam_prev * share
    return Outcome.build(instance, prior, pay, MechanismTag.MCA, final_price=lam_prev,
                         iterations=terminal), ledger
