"""Synthetic market instances, day load profiles and the instance file format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .model import FeasibleSet, InputError, Instance, QuadraticDiscomfort, RewardParams, User

# omega_i ~ U[lo*omega_f, hi*omega_f] for the two event slots of the day
OMEGA_FAMILIES = {
    "slot11": (0.5, 1.5),
    "slot17": (0.05, 1.5),
}

DEFAULT_A = 3.0
DEFAULT_B = 0.02
DEFAULT_USERS = 20
Q_MAX_RANGE = (5.0, 50.0)
# share of the a/(2b) ceiling that the aggregate baseline may use
LOAD_FILL = 0.95


def load_ceiling(a: float, b: float) -> float:
    """Largest aggregate load compatible with ``a >= 2*b*L``."""
    return a / (2 * b)


def random_instance(
    seed: int,
    n: int = DEFAULT_USERS,
    omega_f: float = 1.0,
    family: str = "slot17",
    a: float = DEFAULT_A,
    b: float = DEFAULT_B,
    q_max_range: tuple[float, float] = Q_MAX_RANGE,
    total_load: float | None = None,
) -> Instance:
    """Draw ``n`` quadratic-discomfort users.

    Caps are drawn from ``q_max_range`` and baselines from ``[1, 1.5]`` times
    the cap; if the summed baseline would break ``a >= 2bL`` (or differ from
    ``total_load`` when given), caps and baselines are rescaled together.
    """
    if family not in OMEGA_FAMILIES:
        raise InputError(f"unknown omega family {family!r}")
    if n < 1:
        raise InputError("need at least one user")
    rng = np.random.default_rng(seed)
    lo, hi = OMEGA_FAMILIES[family]
    omegas = rng.uniform(lo * omega_f, hi * omega_f, size=n)
    caps = rng.uniform(*q_max_range, size=n)
    baselines = caps * rng.uniform(1.0, 1.5, size=n)
    ceiling = LOAD_FILL * load_ceiling(a, b)
    total = float(baselines.sum())
    target = total_load if total_load is not None else min(total, ceiling)
    if total_load is not None and total_load > load_ceiling(a, b):
        raise InputError(f"total load {total_load} breaks a >= 2bL (ceiling {load_ceiling(a, b)})")
    scale = target / total
    caps = caps * scale
    baselines = baselines * scale
    users = tuple(
        User(f"u{i}", QuadraticDiscomfort(float(w)), FeasibleSet(float(c)), float(bl))
        for i, (w, c, bl) in enumerate(zip(omegas, caps, baselines))
    )
    L = math.fsum(u.baseline_load for u in users)
    return Instance(users, RewardParams(a, b, L))


@dataclass(frozen=True)
class DayProfile:
    loads: tuple[float, ...]
    events: tuple[int, ...]

    def __post_init__(self):
        if len(self.loads) != 24:
            raise InputError(f"day profile needs 24 slots (got {len(self.loads)})")
        if any(not x > 0 for x in self.loads):
            raise InputError("day profile loads must be positive")
        if any(not 0 <= t < 24 for t in self.events):
            raise InputError("event slots must lie in 0..23")


def synthesize_day_profile(seed: int, events=(11, 17), a: float = DEFAULT_A,
                           b: float = DEFAULT_B) -> DayProfile:
    """Residential-looking aggregate load with peaks at 11 and 17.

    Peak slots sit just under the ``a/(2b)`` ceiling so event instances stay
    valid.
    """
    rng = np.random.default_rng(seed)
    hours = np.arange(24)
    shape = (
        0.45
        + 0.30 * np.exp(-0.5 * ((hours - 11) / 1.2) ** 2)
        + 0.45 * np.exp(-0.5 * ((hours - 17) / 1.0) ** 2)
        + 0.10 * np.exp(-0.5 * ((hours - 8) / 1.5) ** 2)
    )
    shape = shape * rng.uniform(0.97, 1.03, size=24)
    loads = shape / shape.max() * LOAD_FILL * load_ceiling(a, b)
    return DayProfile(tuple(float(x) for x in loads), tuple(int(t) for t in events))


# ---------------------------------------------------------------- file format

def instance_schema() -> dict:
    text = resources.files("flexclinch").joinpath("instance.schema.json").read_text()
    return json.loads(text)


def instance_from_dict(doc: dict) -> Instance:
    try:
        jsonschema.validate(doc, instance_schema())
    except jsonschema.ValidationError as exc:
        raise InputError(f"instance document invalid: {exc.message}") from exc
    users = tuple(
        User(str(u["id"]), QuadraticDiscomfort(float(u["omega"])), FeasibleSet(float(u["q_max"])),
             float(u["baseline_load"]))
        for u in doc["users"]
    )
    L = math.fsum(u.baseline_load for u in users)
    reward = doc["reward"]
    if "L" in reward:
        L = float(reward["L"])
    events = tuple(doc.get("dr_events", ()))
    return Instance(
        users,
        RewardParams(float(reward["a"]), float(reward["b"]), L),
        timeslot=events[0] if events else 0,
        slot_duration_hours=float(doc.get("slot_duration_hours", 1.0)),
        timeslots=int(doc.get("timeslots", 1)),
        dr_events=events,
    )


def instance_to_dict(instance: Instance) -> dict:
    users = []
    for u in instance.users:
        if not isinstance(u.discomfort, QuadraticDiscomfort):
            raise InputError("only quadratic discomfort models serialize to instance files")
        users.append({"id": u.id, "omega": u.discomfort.omega, "q_max": u.q_max,
                      "baseline_load": u.baseline_load})
    return {
        "reward": {"a": instance.reward.a, "b": instance.reward.b},
        "slot_duration_hours": instance.slot_duration_hours,
        "users": users,
        "timeslots": instance.timeslots,
        "dr_events": list(instance.dr_events),
    }


def load_instance(path) -> Instance:
    path = Path(path)
    with path.open() as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: not valid JSON ({exc})") from exc
    return instance_from_dict(doc)


def save_instance(instance: Instance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(instance), indent=2) + "\n")


def scale_omegas(instance: Instance, factor: float) -> Instance:
    """Same instance with every quadratic coefficient multiplied by ``factor``."""
    if not factor > 0:
        raise InputError(f"omega scale must be positive (got {factor})")
    users = []
    for u in instance.users:
        if not isinstance(u.discomfort, QuadraticDiscomfort):
            raise InputError("omega scaling needs quadratic discomfort models")
        users.append(replace(u, discomfort=QuadraticDiscomfort(u.discomfort.omega * factor)))
    return replace(instance, users=tuple(users))
