"""Welfare, profit, loss-bound and strategic-sweep computations."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .agents import realized_utility, with_cheater
from .mechanisms import MechanismTag, Outcome, run_market_clearing, run_mca, run_vcg, welfare_of
from .model import DegenerateDemandError, InputError, Instance, QuadraticDiscomfort, reward_total


def social_welfare(outcome: Outcome, instance: Instance) -> float:
    if outcome.allocation.size == 0 and instance.n == 0:
        return 0.0
    return welfare_of(instance, outcome.allocation)


def fsp_profit(outcome: Outcome, instance: Instance) -> float:
    """Operator reward collected minus rewards paid out to users."""
    if outcome.allocation.size == 0:
        return 0.0
    D = min(math.fsum(outcome.allocation.tolist()), instance.reward.L)
    return reward_total(D, instance.reward) - math.fsum(outcome.payment.tolist())


def welfare_loss_bound(epsilon: float, lambda_max: float, b: float) -> float:
    if b <= 0:
        raise DegenerateDemandError("the loss bound needs b > 0")
    if not epsilon > 0:
        raise InputError(f"epsilon must be positive (got {epsilon})")
    return (epsilon * epsilon + lambda_max * epsilon) / (2 * b)


def proportional_welfare_loss(w_opt: float, w_mca: float) -> float:
    if not w_opt > 0:
        raise InputError(f"optimal welfare must be positive (got {w_opt})")
    return (w_opt - w_mca) / w_opt


def user_utilities(outcome: Outcome, instance: Instance) -> np.ndarray:
    return np.array([
        realized_utility(max(float(q), 0.0), float(p), u.discomfort)
        for u, q, p in zip(instance.users, outcome.allocation, outcome.payment)
    ])


def grid_welfare_max(instance: Instance, points: int = 200) -> tuple[float, np.ndarray]:
    """Brute-force welfare maximum over a regular grid of each user's box.

    Exponential in the number of users; refuses more than three.
    """
    if instance.n > 3:
        raise InputError("grid search is limited to 3 users")
    axes = [np.linspace(0.0, u.q_max, points) for u in instance.users]
    mesh = np.meshgrid(*axes, indexing="ij")
    D = sum(mesh)
    r = instance.reward
    W = r.a * D - r.b * D * D
    for u, q in zip(instance.users, mesh):
        W = W - u.discomfort(q)
    W = np.where(D <= r.L, W, -np.inf)
    idx = np.unravel_index(int(np.argmax(W)), W.shape)
    return float(W[idx]), np.array([ax[i] for ax, i in zip(axes, idx)])


def default_omega_grid(omega_real: float, points: int = 201, span: float = 10.0) -> np.ndarray:
    """Log-spaced misreports over ``[omega/span, omega*span]`` with the truth at the centre."""
    grid = omega_real * np.logspace(-np.log10(span), np.log10(span), points)
    if points % 2 == 1:
        grid[points // 2] = omega_real
    return grid


@dataclass
class SweepResult:
    grid: np.ndarray
    utilities: np.ndarray
    profits: np.ndarray
    argmax_omega: float
    omega_real: float
    truthful_utility: float
    fsp_profit_truthful: float
    fsp_profit_cheat: float

    @property
    def profit_ratio(self) -> float:
        return self.fsp_profit_cheat / self.fsp_profit_truthful

    def grid_steps_from_truth(self) -> int:
        i_max = int(np.argmax(self.utilities))
        i_true = int(np.argmin(np.abs(np.log(self.grid / self.omega_real))))
        return abs(i_max - i_true)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["omega_fake", "cheater_utility", "fsp_profit"])
            for row in zip(self.grid, self.utilities, self.profits):
                w.writerow([repr(float(x)) for x in row])


def _mechanism_runner(mechanism, epsilon: float, tolerance: float,
                      literal_rationing: bool = False) -> Callable[..., Outcome]:
    tag = MechanismTag(mechanism)
    if tag is MechanismTag.MCA:
        return lambda inst, pol: run_mca(inst, pol, epsilon, literal_rationing)[0]
    if tag is MechanismTag.MARKET_CLEARING:
        return lambda inst, pol: run_market_clearing(inst, pol, tolerance)
    raise InputError("cheater sweeps support the mca and market-clearing mechanisms")


def cheater_sweep(
    instance: Instance,
    mechanism: MechanismTag | str,
    cheater_id: str,
    omega_grid: Sequence[float] | None = None,
    epsilon: float = 1e-5,
    tolerance: float = 1e-10,
    literal_rationing: bool = False,
) -> SweepResult:
    """Cheater utility and operator-side profit across reported ``omega`` values.

    Everyone except the cheater answers truthfully. The cheater's utility is
    measured with its true discomfort. ``fsp_profit_cheat`` is the profit when
    the cheater plays the utility-maximizing grid point.
    """
    i = instance.index_of(cheater_id)
    true_model = instance.users[i].discomfort
    if not isinstance(true_model, QuadraticDiscomfort):
        raise InputError("cheater sweeps parameterize misreports by omega; need a quadratic model")
    omega_real = true_model.omega
    grid = default_omega_grid(omega_real) if omega_grid is None else np.asarray(omega_grid, float)
    if grid.size == 0:
        raise InputError("empty omega grid")
    run = _mechanism_runner(mechanism, epsilon, tolerance, literal_rationing)

    utilities = np.empty(grid.size)
    profits = np.empty(grid.size)
    for g, w in enumerate(grid):
        out = run(instance, with_cheater(instance, i, float(w)))
        utilities[g] = realized_utility(max(float(out.allocation[i]), 0.0),
                                        float(out.payment[i]), true_model)
        profits[g] = fsp_profit(out, instance)
    truthful = run(instance, with_cheater(instance, i, omega_real))
    best = int(np.argmax(utilities))
    return SweepResult(
        grid=grid,
        utilities=utilities,
        profits=profits,
        argmax_omega=float(grid[best]),
        omega_real=omega_real,
        truthful_utility=realized_utility(max(float(truthful.allocation[i]), 0.0),
                                          float(truthful.payment[i]), true_model),
        fsp_profit_truthful=fsp_profit(truthful, instance),
        fsp_profit_cheat=float(profits[best]),
    )


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def designated_cheater(instance: Instance) -> str:
    """Id of the user with the largest efficient allocation (first on ties).

    Sweeping the biggest supplier keeps profit comparisons meaningful: a user
    who supplies nothing cannot move the price.
    """
    out = run_vcg(instance)
    return instance.user_ids[int(np.argmax(out.allocation))]
