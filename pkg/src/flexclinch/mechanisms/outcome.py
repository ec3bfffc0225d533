from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np

from ..model import InputError, Instance, reward_total


class MechanismError(RuntimeError):
    """Internal failure of a mechanism run (e.g. the iteration guard tripped)."""


class MechanismTag(str, Enum):
    MCA = "mca"
    VCG = "vcg"
    MARKET_CLEARING = "market-clearing"


def welfare_of(instance: Instance, allocation: np.ndarray) -> float:
    """Operator reward minus the users' true discomfort."""
    allocation = np.asarray(allocation, dtype=float)
    if allocation.shape != (instance.n,):
        raise InputError(f"allocation has shape {allocation.shape}, expected ({instance.n},)")
    for u, q in zip(instance.users, allocation):
        if q < -1e-12 or q > u.q_max * (1 + 1e-12) + 1e-12:
            raise InputError(f"allocation {q} for user {u.id} outside [0, {u.q_max}]")
    D = math.fsum(allocation.tolist())
    D = min(max(D, 0.0), instance.reward.L)
    return reward_total(D, instance.reward) - math.fsum(
        u.discomfort(max(float(q), 0.0)) for u, q in zip(instance.users, allocation)
    )


@dataclass
class Outcome:
    user_ids: tuple[str, ...]
    allocation: np.ndarray
    payment: np.ndarray
    total_reduction: float
    welfare: float
    mechanism_tag: MechanismTag
    final_price: float | None = None
    iterations: int | None = None

    @classmethod
    def build(cls, instance: Instance, allocation, payment, tag: MechanismTag,
              final_price=None, iterations=None) -> "Outcome":
        allocation = np.asarray(allocation, dtype=float)
        payment = np.asarray(payment, dtype=float)
        return cls(
            user_ids=instance.user_ids,
            allocation=allocation,
            payment=payment,
            total_reduction=math.fsum(allocation.tolist()),
            welfare=welfare_of(instance, allocation) if instance.n else 0.0,
            mechanism_tag=tag,
            final_price=final_price,
            iterations=iterations,
        )

    @classmethod
    def empty(cls, tag: MechanismTag) -> "Outcome":
        return cls((), np.zeros(0), np.zeros(0), 0.0, 0.0, tag)

    def __eq__(self, other):
        if not isinstance(other, Outcome):
            return NotImplemented
        return (
            self.user_ids == other.user_ids
            and np.array_equal(self.allocation, other.allocation)
            and np.array_equal(self.payment, other.payment)
            and self.total_reduction == other.total_reduction
            and self.welfare == other.welfare
            and self.mechanism_tag == other.mechanism_tag
        )

    def to_dict(self) -> dict:
        return {
            "mechanism": self.mechanism_tag.value,
            "users": [
                {"id": uid, "allocation": float(q), "payment": float(p)}
                for uid, q, p in zip(self.user_ids, self.allocation, self.payment)
            ],
            "total_reduction": self.total_reduction,
            "welfare": self.welfare,
            "final_price": self.final_price,
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class ClinchEvent:
    user_id: str
    lam: float
    quantity: float
    iteration: int
    rationing: bool = False


@dataclass
class ClinchLedger:
    """Every positive clinch of an MCA run, in the order it happened."""

    user_ids: tuple[str, ...]
    _iterations: list[int] = field(default_factory=list)
    _users: list[int] = field(default_factory=list)
    _lams: list[float] = field(default_factory=list)
    _quantities: list[float] = field(default_factory=list)
    _rationing: list[bool] = field(default_factory=list)

    def record(self, iteration: int, lam: float, increments: np.ndarray, rationing=False) -> None:
        for i in np.flatnonzero(increments > 0):
            self._iterations.append(int(iteration))
            self._users.append(int(i))
            self._lams.append(float(lam))
            self._quantities.append(float(increments[i]))
            self._rationing.append(rationing)

    def __len__(self) -> int:
        return len(self._iterations)

    def __iter__(self) -> Iterator[ClinchEvent]:
        return iter(self.events)

    @property
    def events(self) -> list[ClinchEvent]:
        return [
            ClinchEvent(self.user_ids[u], lam, q, k, r)
            for k, u, lam, q, r in zip(self._iterations, self._users, self._lams,
                                       self._quantities, self._rationing)
        ]

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "iteration": np.asarray(self._iterations, dtype=np.int64),
            "user": np.asarray(self._users, dtype=np.int64),
            "lambda": np.asarray(self._lams, dtype=float),
            "zeta": np.asarray(self._quantities, dtype=float),
            "rationing": np.asarray(self._rationing, dtype=bool),
        }

    def cumulative(self) -> np.ndarray:
        """Per-user clinched totals summed in event order."""
        out = np.zeros(len(self.user_ids))
        for u, q in zip(self._users, self._quantities):
            out[u] = out[u] + q
        return out

    def rows(self) -> Iterator[tuple[int, str, float, float]]:
        for k, u, lam, q in zip(self._iterations, self._users, self._lams, self._quantities):
            yield k, self.user_ids[u], lam, q
