"""User-side decision logic: price-query responses and realized utility."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import DiscomfortModel, FeasibleSet, InputError, Instance, QuadraticDiscomfort


@dataclass(frozen=True)
class Bid:
    user_id: str
    lam: float
    quantity: float


def best_response(lam: float, discomfort: DiscomfortModel, feasible: FeasibleSet) -> float:
    """Maximizer of ``lam*q - d(q)`` over ``[0, q_max]``.

    Ties break toward the smaller quantity.
    """
    if lam < 0:
        raise InputError(f"negative reward {lam}")
    return discomfort.best_response(lam, feasible.q_max)


@dataclass(frozen=True)
class AgentPolicy:
    """How a user answers reward queries.

    With ``fake_discomfort`` set the user answers every query as if that were
    its discomfort function (a consistent misreport); otherwise it is truthful.
    """

    true_discomfort: DiscomfortModel
    feasible: FeasibleSet
    fake_discomfort: DiscomfortModel | None = None

    @property
    def kind(self) -> str:
        return "truthful" if self.fake_discomfort is None else "misreport"

    @property
    def reported(self) -> DiscomfortModel:
        return self.true_discomfort if self.fake_discomfort is None else self.fake_discomfort

    def quantity(self, lam: float) -> float:
        return self.reported.best_response(lam, self.feasible.q_max)

    def quantities(self, lams: np.ndarray) -> np.ndarray:
        return self.reported.best_response_array(lams, self.feasible.q_max)


@dataclass(frozen=True)
class RawBidPolicy:
    """Arbitrary bid schedule ``lam -> quantity``, clipped to the feasible box.

    Meant for tests that probe manipulations outside the convex bid language.
    """

    true_discomfort: DiscomfortModel
    feasible: FeasibleSet
    schedule: Callable[[float], float]

    kind = "raw"

    def quantity(self, lam: float) -> float:
        return min(max(float(self.schedule(lam)), 0.0), self.feasible.q_max)

    def quantities(self, lams: np.ndarray) -> np.ndarray:
        return np.array([self.quantity(float(x)) for x in lams], dtype=float)


def respond(policy: AgentPolicy | RawBidPolicy, lam: float, user_id: str = "") -> Bid:
    if lam < 0:
        raise InputError(f"negative reward {lam}")
    return Bid(user_id, lam, policy.quantity(lam))


def realized_utility(allocation: float, payment: float, true_discomfort: DiscomfortModel) -> float:
    if allocation < 0:
        raise InputError(f"negative allocation {allocation}")
    return payment - true_discomfort(allocation)


def truthful_policies(instance: Instance) -> list[AgentPolicy]:
    return [AgentPolicy(u.discomfort, u.feasible) for u in instance.users]


def with_cheater(instance: Instance, index: int, fake_omega: float) -> list[AgentPolicy]:
    """Truthful policies except user ``index``, who reports ``omega = fake_omega``."""
    policies = truthful_policies(instance)
    u = instance.users[index]
    policies[index] = AgentPolicy(u.discomfort, u.feasible, QuadraticDiscomfort(float(fake_omega)))
    return policies
