"""Information-flow audit over a protocol message log."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from .trace import FSP, MessageKind, ProtocolTrace

BID_KEYS = frozenset({"bid", "bids"})
IDENTITY_KEYS = frozenset({"owner", "owner_id", "user", "user_id", "node", "node_id"})
PER_ITERATION_KEYS = frozenset({"zeta", "zetas", "increment", "increments", "clinchable", "share"})
FINAL_REPORT_KEYS = frozenset({"user_id", "total_clinched", "total_payment"})

CHECKS = (
    "no_bids_to_fsp",
    "store_bid_anonymous",
    "one_foreign_bid_per_node",
    "fsp_receives_aggregates_only",
)


@dataclass
class CheckResult:
    name: str
    offending: list[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.offending


@dataclass
class PrivacyReport:
    results: dict[str, CheckResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    def __getitem__(self, name: str) -> CheckResult:
        return self.results[name]

    def lines(self) -> list[str]:
        out = []
        for n, (name, r) in enumerate(self.results.items(), start=1):
            status = "PASS" if r.passed else f"FAIL (messages {r.offending[:10]})"
            out.append(f"privacy check {n} {name}: {status}")
        return out


def assert_privacy(trace: ProtocolTrace) -> PrivacyReport:
    """Run the four information-flow checks; never raises on a failed check.

    1. Nothing sent to the FSP before the first FinalReport carries a bid.
    2. StoreBid payloads never name the bid's owner.
    3. No peer receives more than one foreign bid in the same iteration.
    4. The FSP only ever sees aggregate tuples, never per-iteration clinches.
    """
    results = {name: CheckResult(name) for name in CHECKS}
    first_report = next(
        (m.seq for m in trace.messages if m.kind is MessageKind.FINAL_REPORT), None
    )
    received: dict[tuple[str, int], list[tuple[int, str]]] = defaultdict(list)

    for m in trace.messages:
        keys = set(m.payload)
        to_fsp = m.dst == FSP
        if to_fsp and (first_report is None or m.seq < first_report) and keys & BID_KEYS:
            results["no_bids_to_fsp"].offending.append(m.seq)
        if m.kind is MessageKind.STORE_BID:
            if keys & IDENTITY_KEYS:
                results["store_bid_anonymous"].offending.append(m.seq)
            if m.src != m.dst:
                received[(m.dst, m.iteration)].append((m.seq, str(m.payload.get("tag", m.seq))))
        if to_fsp:
            bad = keys & PER_ITERATION_KEYS
            if m.kind is MessageKind.FINAL_REPORT:
                bad = bad or not keys <= FINAL_REPORT_KEYS or any(
                    isinstance(v, (list, tuple, dict)) for v in m.payload.values()
                )
            if bad:
                results["fsp_receives_aggregates_only"].offending.append(m.seq)

    for msgs in received.values():
        if len({tag for _, tag in msgs}) > 1:
            results["one_foreign_bid_per_node"].offending.extend(seq for seq, _ in msgs[1:])
    results["one_foreign_bid_per_node"].offending.sort()
    return PrivacyReport(results)
