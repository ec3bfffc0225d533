"""Command-line experiment harness.

Every subcommand writes plain CSV/JSON into ``--out`` and prints a short
summary. Exit status: 0 on success, 1 when a checked property fails, 2 on
usage or input errors. ``FLEXCLINCH_LOG`` sets the log level (default
WARNING).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from .instances import (
    DEFAULT_USERS,
    load_instance,
    random_instance,
    scale_omegas,
    synthesize_day_profile,
)
from .mechanisms import (
    MechanismError,
    MechanismTag,
    run_market_clearing,
    run_mca,
    run_vcg,
)
from .metrics import (
    cheater_sweep,
    default_omega_grid,
    designated_cheater,
    fsp_profit,
    loglog_slope,
    proportional_welfare_loss,
    user_utilities,
    welfare_loss_bound,
)
from .model import InputError, Instance, validate_instance
from .protocol import ProtocolTrace, assert_privacy, run_protocol_mca

log = logging.getLogger("flexclinch")

EXIT_OK, EXIT_PROPERTY, EXIT_USAGE = 0, 1, 2


class PropertyFailure(Exception):
    """A checked property did not hold; maps to exit status 1."""


# ------------------------------------------------------------------ helpers


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive(text: str) -> float:
    x = float(text)
    if not x > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return x


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _instance(args, omega_f: float = 1.0, family: str = "slot17") -> Instance:
    """The ``--instance`` file (omegas scaled by ``omega_f``) or a seeded draw."""
    if args.instance:
        inst = load_instance(args.instance)
        if omega_f != 1.0:
            inst = scale_omegas(inst, omega_f)
    else:
        inst = random_instance(args.seed, n=args.users, omega_f=omega_f, family=family)
    problems = validate_instance(inst)
    if problems:
        raise InputError("invalid instance: " + "; ".join(problems))
    return inst


def _run_mechanism(inst: Instance, args):
    tag = MechanismTag(args.mechanism)
    if tag is MechanismTag.MCA:
        return run_mca(inst, epsilon=args.epsilon, literal_rationing=args.compat_line11)
    if tag is MechanismTag.VCG:
        return run_vcg(inst, literal_pivot=args.compat_eq6), None
    return run_market_clearing(inst), None


# ------------------------------------------------------------------ commands


def cmd_run(args) -> int:
    inst = _instance(args)
    out = _out_dir(args)
    outcome, ledger = _run_mechanism(inst, args)
    utilities = user_utilities(outcome, inst)
    profit = fsp_profit(outcome, inst)
    doc = outcome.to_dict()
    doc["fsp_profit"] = profit
    for row, u in zip(doc["users"], utilities):
        row["utility"] = float(u)
    _write_json(out / "outcome.json", doc)
    if ledger is not None:
        _write_csv(out / "ledger.csv", ["iteration", "user_id", "lambda", "zeta"],
                   ([k, uid, _fmt(lam), _fmt(z)] for k, uid, lam, z in ledger.rows()))
    print(f"mechanism {outcome.mechanism_tag.value}: welfare {outcome.welfare:.6f}, "
          f"fsp profit {profit:.6f}, total reduction {outcome.total_reduction:.6f}")
    for uid, q, p, u in zip(outcome.user_ids, outcome.allocation, outcome.payment, utilities):
        print(f"  {uid}: allocation {q:.6f} payment {p:.6f} utility {u:.6f}")
    return EXIT_OK


def cmd_sweep_cheat(args) -> int:
    out = _out_dir(args)
    base = _instance(args)
    cheater = args.cheater or designated_cheater(base)
    base.index_of(cheater)
    mechanisms = [MechanismTag.MCA, MechanismTag.MARKET_CLEARING]
    ratios: dict[MechanismTag, list[tuple[float, float]]] = {m: [] for m in mechanisms}
    failures = []
    for omega_f in args.omega_f:
        inst = scale_omegas(base, omega_f)
        omega_real = inst.users[inst.index_of(cheater)].discomfort.omega
        grid = default_omega_grid(omega_real, points=args.grid_points)
        for mech in mechanisms:
            res = cheater_sweep(inst, mech, cheater, grid, epsilon=args.epsilon,
                                literal_rationing=args.compat_line11)
            res.write_csv(out / f"cheat_{mech.value}_wf{omega_f:g}.csv")
            ratios[mech].append((omega_f, res.profit_ratio))
            gain = float(res.utilities.max() - res.truthful_utility)
            print(f"{mech.value} omega_f={omega_f:g}: argmax {res.argmax_omega:.6g} "
                  f"(truth {omega_real:.6g}, {res.grid_steps_from_truth()} steps), "
                  f"best gain {gain:.3g}, profit ratio {res.profit_ratio:.6f}")
            if mech is MechanismTag.MCA:
                if res.grid_steps_from_truth() > 1 or gain > 1e-6:
                    failures.append(f"MCA misreport gains at omega_f={omega_f:g}")
                if abs(res.profit_ratio - 1) > 1e-3:
                    failures.append(f"MCA profit ratio {res.profit_ratio} at omega_f={omega_f:g}")
    for mech in mechanisms:
        _write_csv(out / f"profit_ratio_{mech.value}.csv", ["omega_f", "profit_ratio"],
                   ([_fmt(w), _fmt(r)] for w, r in ratios[mech]))
    mc = [r for _, r in ratios[MechanismTag.MARKET_CLEARING]]
    monotone = all(y <= x + 1e-12 for x, y in zip(mc, mc[1:]))
    print(f"market-clearing profit ratio non-increasing in omega_f: {'yes' if monotone else 'no'}")
    if failures:
        raise PropertyFailure("; ".join(failures))
    return EXIT_OK


def cmd_sweep_epsilon(args) -> int:
    out = _out_dir(args)
    inst = _instance(args, omega_f=args.omega_f[0])
    vcg = run_vcg(inst, literal_pivot=args.compat_eq6)
    rows, losses, violations = [], [], []
    for eps in args.epsilons:
        mca, _ = run_mca(inst, epsilon=eps, literal_rationing=args.compat_line11)
        gap = vcg.welfare - mca.welfare
        bound = welfare_loss_bound(eps, inst.reward.a, inst.reward.b)
        prop = proportional_welfare_loss(vcg.welfare, mca.welfare)
        losses.append(prop)
        rows.append([_fmt(eps), _fmt(prop), _fmt(bound / vcg.welfare), _fmt(gap), _fmt(bound)])
        print(f"epsilon {eps:g}: loss {gap:.3e} (bound {bound:.3e}), proportional {prop:.3e}")
        if gap > bound + 1e-9:
            violations.append(f"epsilon {eps:g}: welfare loss {gap} exceeds bound {bound}")
    _write_csv(out / "epsilon_loss.csv",
               ["epsilon", "proportional_welfare_loss", "proportional_bound", "welfare_loss", "bound"],
               rows)
    if len(args.epsilons) >= 3:
        pairs = sorted(zip(args.epsilons, losses))[:3]
        if all(loss > 0 for _, loss in pairs):
            slope = loglog_slope([e for e, _ in pairs], [loss for _, loss in pairs])
            print(f"log-log slope over the three smallest epsilons: {slope:.3f}")
    if violations:
        raise PropertyFailure("; ".join(violations))
    return EXIT_OK


def cmd_simulate_day(args) -> int:
    out = _out_dir(args)
    profile = synthesize_day_profile(args.seed, events=tuple(args.events))
    omega_f = args.omega_f[0]
    with_dr = list(profile.loads)
    for slot in profile.events:
        family = "slot11" if slot == 11 else "slot17"
        inst = random_instance(args.seed * 24 + slot, n=args.users, omega_f=omega_f,
                               family=family, total_load=profile.loads[slot])
        outcome, _ = run_mca(inst, epsilon=args.epsilon, literal_rationing=args.compat_line11)
        with_dr[slot] = profile.loads[slot] - outcome.total_reduction
        print(f"slot {slot} ({family}): baseline {profile.loads[slot]:.3f}, "
              f"reduction {outcome.total_reduction:.3f}")
    _write_csv(out / "day_profile.csv", ["timeslot", "load_no_dr", "load_with_dr"],
               ([t, _fmt(x), _fmt(y)] for t, (x, y) in enumerate(zip(profile.loads, with_dr))))
    return EXIT_OK


def cmd_protocol(args) -> int:
    out = _out_dir(args)
    inst = _instance(args)
    if inst.n < 2:
        print("warning: fewer than two users, bids cannot be hidden", file=sys.stderr)
    outcome, trace = run_protocol_mca(inst, epsilon=args.epsilon, seed=args.seed,
                                      literal_rationing=args.compat_line11)
    trace.write(out / "trace.jsonl")
    _write_json(out / "outcome.json", outcome.to_dict())
    central, _ = run_mca(inst, epsilon=args.epsilon, literal_rationing=args.compat_line11)
    equal = outcome == central
    report = assert_privacy(trace)
    print(f"messages: {len(trace)}")
    print(f"centralized-equivalence: {'PASS' if equal else 'FAIL'}")
    for line in report.lines():
        print(line)
    if not equal:
        raise PropertyFailure("distributed outcome differs from the centralized run")
    if not report.passed:
        raise PropertyFailure("privacy check failed")
    return EXIT_OK


def cmd_check_trace(args) -> int:
    try:
        trace = ProtocolTrace.read(args.trace)
    except (ValueError, KeyError) as exc:
        raise InputError(f"{args.trace}: unreadable trace ({exc})") from exc
    report = assert_privacy(trace)
    for line in report.lines():
        print(line)
    if not report.passed:
        raise PropertyFailure("privacy check failed")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--instance", help="instance JSON file; omitted: draw a random instance")
    common.add_argument("--seed", type=int, default=0, help="seed for generated data and the overlay")
    common.add_argument("--users", type=int, default=DEFAULT_USERS,
                        help="user count for generated instances")
    common.add_argument("--epsilon", type=_positive, default=1e-5, help="auction price decrement")
    common.add_argument("--omega-f", type=_float_list, default=[1.0],
                        help="comma-separated omega scale factors")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--compat-line11", action="store_true",
                        help="use the unnormalized final-rationing formula")
    common.add_argument("--compat-eq6", action="store_true",
                        help="VCG pivot term evaluated at the allocation without user i")

    p = argparse.ArgumentParser(prog="flexclinch", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", parents=[common], help="run one mechanism on one instance")
    s.add_argument("--mechanism", choices=[m.value for m in MechanismTag], default="mca")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep-cheat", parents=[common], help="misreport sweeps for one user")
    s.add_argument("--cheater", help="user id of the misreporting user (default: largest supplier)")
    s.add_argument("--grid-points", type=int, default=61, help="omega_fake grid size (odd keeps the truth on grid)")
    s.set_defaults(func=cmd_sweep_cheat, omega_f=[1.0, 2.0, 3.0, 4.0, 5.0])

    s = sub.add_parser("sweep-epsilon", parents=[common], help="welfare loss against epsilon")
    s.add_argument("--epsilons", type=_float_list, default=[1e-1, 1e-2, 1e-3, 1e-4, 1e-5])
    s.set_defaults(func=cmd_sweep_epsilon)

    s = sub.add_parser("simulate-day", parents=[common], help="24-slot load with and without events")
    s.add_argument("--events", type=_int_list, default=[11, 17], help="event slots (empty for none)")
    s.set_defaults(func=cmd_simulate_day)

    s = sub.add_parser("protocol", parents=[common], help="distributed run with trace and privacy audit")
    s.set_defaults(func=cmd_protocol)

    s = sub.add_parser("check-trace", help="privacy audit of a saved trace")
    s.add_argument("trace", help="trace.jsonl written by the protocol command")
    s.set_defaults(func=cmd_check_trace)
    return p


def _configure_logging() -> None:
    level = os.environ.get("FLEXCLINCH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    if getattr(args, "users", 1) < 1:
        print("error: --users must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PropertyFailure, MechanismError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_PROPERTY


if __name__ == "__main__":
    sys.exit(main())
