"""Domain types and economic primitives of a demand-response flexibility market.

A market instance is a set of users, each able to shed up to ``q_max`` kWh of
consumption at a private (convex) discomfort cost, and an operator whose
reward for an aggregate reduction ``D`` is the concave quadratic
``a*D - b*D**2`` on ``[0, L]``.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar


class InputError(ValueError):
    """Raised when an argument lies outside an operation's domain."""


class DegenerateDemandError(InputError):
    """The operator's demand curve is undefined (linear reward, b == 0)."""


@dataclass(frozen=True)
class RewardParams:
    """Operator reward ``R(D) = a*D - b*D**2`` for ``D`` in ``[0, L]``."""

    a: float
    b: float
    L: float

    def violations(self) -> list[str]:
        out = []
        if not self.a > 0:
            out.append(f"reward.a must be positive (got {self.a})")
        if not self.b >= 0:
            out.append(f"reward.b must be nonnegative (got {self.b})")
        if not self.L > 0:
            out.append(f"reward.L must be positive (got {self.L})")
        # small slack: L is usually a float sum of baselines
        if self.a < 2 * self.b * self.L * (1 - 1e-12):
            out.append(
                f"parameter condition a >= 2*b*L violated: a={self.a}, 2bL={2 * self.b * self.L}"
            )
        return out


class DiscomfortModel(ABC):
    """Convex, non-decreasing cost of shedding ``q`` units, with ``d(0) == 0``.

    Subclasses must implement :meth:`__call__`. The default best response is a
    bounded scalar search; models with a closed form should override
    :meth:`best_response` (and :meth:`best_response_array` for speed).
    """

    @abstractmethod
    def __call__(self, q):
        ...

    def violations(self) -> list[str]:
        return []

    def best_response(self, lam: float, q_max: float) -> float:
        if lam <= 0 or q_max <= 0:
            return 0.0
        res = minimize_scalar(
            lambda q: -(lam * q - self(q)),
            bounds=(0.0, q_max),
            method="bounded",
            options={"xatol": 1e-12},
        )
        best = float(res.x)
        # bounded search never lands exactly on the box edges
        candidates = [0.0, best, float(q_max)]
        values = [lam * q - self(q) for q in candidates]
        top = max(values)
        return next(q for q, v in zip(candidates, values) if v >= top - 1e-15)

    def best_response_array(self, lams: np.ndarray, q_max: float) -> np.ndarray:
        return np.array([self.best_response(float(x), q_max) for x in lams], dtype=float)


@dataclass(frozen=True)
class QuadraticDiscomfort(DiscomfortModel):
    """``d(q) = omega * q**2``; ``omega`` is the user's inelasticity."""

    omega: float

    def __call__(self, q):
        return self.omega * q * q

    def violations(self) -> list[str]:
        if not self.omega > 0:
            return [f"omega must be strictly positive (got {self.omega})"]
        return []

    # The scalar and array forms below must stay operation-for-operation
    # identical: the distributed simulator relies on bit-equal bids.
    def best_response(self, lam: float, q_max: float) -> float:
        return min(max(lam / (2 * self.omega), 0.0), q_max)

    def best_response_array(self, lams: np.ndarray, q_max: float) -> np.ndarray:
        return np.minimum(np.maximum(lams / (2 * self.omega), 0.0), q_max)


@dataclass(frozen=True)
class FeasibleSet:
    """The box ``[0, q_max]`` of admissible reductions."""

    q_max: float


@dataclass(frozen=True)
class User:
    id: str
    discomfort: DiscomfortModel
    feasible: FeasibleSet
    baseline_load: float

    @property
    def q_max(self) -> float:
        return self.feasible.q_max


@dataclass(frozen=True)
class Instance:
    users: tuple[User, ...]
    reward: RewardParams
    timeslot: int = 0
    slot_duration_hours: float = 1.0
    timeslots: int = 1
    dr_events: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "dr_events", tuple(self.dr_events))

    @property
    def n(self) -> int:
        return len(self.users)

    @property
    def user_ids(self) -> tuple[str, ...]:
        return tuple(u.id for u in self.users)

    def index_of(self, user_id: str) -> int:
        for i, u in enumerate(self.users):
            if u.id == user_id:
                return i
        raise InputError(f"unknown user id {user_id!r}")

    def without(self, index: int) -> "Instance":
        users = self.users[:index] + self.users[index + 1:]
        return Instance(users, self.reward, self.timeslot, self.slot_duration_hours,
                        self.timeslots, self.dr_events)


def make_instance(
    omegas: Sequence[float],
    q_maxes: Sequence[float],
    a: float = 3.0,
    b: float = 0.02,
    baselines: Sequence[float] | None = None,
    L: float | None = None,
    ids: Sequence[str] | None = None,
) -> Instance:
    """Build a single-slot instance of quadratic-discomfort users.

    Baselines default to the caps; ``L`` defaults to the sum of baselines.
    """
    if baselines is None:
        baselines = list(q_maxes)
    if ids is None:
        ids = [f"u{i}" for i in range(len(omegas))]
    users = tuple(
        User(str(uid), QuadraticDiscomfort(float(w)), FeasibleSet(float(qm)), float(bl))
        for uid, w, qm, bl in zip(ids, omegas, q_maxes, baselines)
    )
    if L is None:
        L = math.fsum(u.baseline_load for u in users)
    return Instance(users, RewardParams(float(a), float(b), float(L)))


def _check_domain(D: float, params: RewardParams) -> None:
    if D < 0 or D > params.L:
        raise InputError(f"reduction {D} outside [0, L={params.L}]")


def reward_total(D: float, params: RewardParams) -> float:
    _check_domain(D, params)
    return params.a * D - params.b * D * D


def marginal_reward(D: float, params: RewardParams) -> float:
    _check_domain(D, params)
    return params.a - 2 * params.b * D


def desired_reduction(lam: float, params: RewardParams) -> float:
    """Operator demand at per-unit reward ``lam``: ``(a - lam) / 2b`` on ``[0, L]``."""
    if params.b <= 0:
        raise DegenerateDemandError("desired reduction is undefined for b == 0; use fixed-price mode")
    if lam < 0 or lam > params.a:
        raise InputError(f"lambda {lam} outside [0, a={params.a}]")
    return min(max((params.a - lam) / (2 * params.b), 0.0), params.L)


def desired_reduction_array(lams: np.ndarray, params: RewardParams) -> np.ndarray:
    if params.b <= 0:
        raise DegenerateDemandError("desired reduction is undefined for b == 0; use fixed-price mode")
    return np.minimum(np.maximum((params.a - lams) / (2 * params.b), 0.0), params.L)


def fixed_price_reward(D: float, price: float) -> float:
    """Linear operator reward ``price * D`` (the b == 0 case)."""
    if D < 0:
        raise InputError(f"reduction {D} is negative")
    return price * D


def discomfort(q: float, model: DiscomfortModel) -> float:
    if q < 0:
        raise InputError(f"reduction {q} is negative")
    return model(q)


def validate_instance(instance: Instance) -> list[str]:
    """Return every violated invariant as a message; empty means valid."""
    report: list[str] = []
    if instance.n < 1:
        report.append("instance must contain at least one user")
    report.extend(instance.reward.violations())
    if not instance.slot_duration_hours > 0:
        report.append("slot_duration_hours must be positive")
    seen = set()
    for u in instance.users:
        if u.id in seen:
            report.append(f"duplicate user id {u.id!r}")
        seen.add(u.id)
        report.extend(f"user {u.id}: {msg}" for msg in u.discomfort.violations())
        if not u.q_max >= 0:
            report.append(f"user {u.id}: q_max must be nonnegative (got {u.q_max})")
        if u.q_max > u.baseline_load:
            report.append(
                f"user {u.id}: q_max {u.q_max} exceeds baseline load {u.baseline_load}"
            )
    total = math.fsum(u.baseline_load for u in instance.users)
    if instance.n and not math.isclose(total, instance.reward.L, rel_tol=1e-9, abs_tol=1e-9):
        report.append(f"reward.L={instance.reward.L} differs from summed baseline load {total}")
    return report
