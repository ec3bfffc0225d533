from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable

FSP = "FSP"
TRACE_FORMAT = "flexclinch-trace/1"


class MessageKind(str, Enum):
    PRICE_QUERY = "PriceQuery"
    STORE_BID = "StoreBid"
    SUM_UPWARD = "SumUpward"
    DEMAND_FROM_FSP = "DemandFromFSP"
    STATUS = "Status"
    BROADCAST_TOTALS = "BroadcastTotals"
    CLINCH_UPDATE = "ClinchUpdate"
    TUPLE_HANDOFF = "TupleHandoff"
    RATION_REQUEST = "RationRequest"
    RATION_FACTORS = "RationFactors"
    RATION_REPLY = "RationReply"
    FINAL_REPORT = "FinalReport"


def node_label(node) -> str:
    """Wire form of an endpoint: ``FSP`` or a 40-digit hex node id."""
    if node == FSP:
        return FSP
    return f"{int(node):040x}"


@dataclass(frozen=True)
class ProtocolMessage:
    seq: int
    kind: MessageKind
    src: str
    dst: str
    iteration: int
    payload: dict[str, Any]

    def to_dict(self) -> dict:
        return {"seq": self.seq, "kind": self.kind.value, "from": self.src, "to": self.dst,
                "iteration": self.iteration, "payload": self.payload}

    @classmethod
    def from_dict(cls, d: dict) -> "ProtocolMessage":
        return cls(int(d["seq"]), MessageKind(d["kind"]), str(d["from"]), str(d["to"]),
                   int(d["iteration"]), dict(d["payload"]))


@dataclass
class ProtocolTrace:
    rng_seed: int
    messages: list[ProtocolMessage] = field(default_factory=list)

    def log(self, kind: MessageKind, src, dst, iteration: int, **payload) -> ProtocolMessage:
        msg = ProtocolMessage(len(self.messages), kind, node_label(src), node_label(dst),
                              iteration, payload)
        self.messages.append(msg)
        return msg

    def __len__(self) -> int:
        return len(self.messages)

    def of_kind(self, kind: MessageKind) -> list[ProtocolMessage]:
        return [m for m in self.messages if m.kind is kind]

    def routing(self) -> list[tuple[str, str, str, int]]:
        return [(m.kind.value, m.src, m.dst, m.iteration) for m in self.messages]

    def dump_lines(self) -> Iterable[str]:
        yield json.dumps({"format": TRACE_FORMAT, "rng_seed": self.rng_seed})
        for m in self.messages:
            yield json.dumps(m.to_dict(), separators=(",", ":"))

    def write(self, path) -> None:
        with Path(path).open("w") as fh:
            for line in self.dump_lines():
                fh.write(line + "\n")

    @classmethod
    def parse_lines(cls, lines: Iterable[str]) -> "ProtocolTrace":
        lines = [ln for ln in lines if ln.strip()]
        if not lines:
            raise ValueError("empty trace")
        header = json.loads(lines[0])
        if header.get("format") != TRACE_FORMAT:
            raise ValueError(f"unsupported trace format {header.get('format')!r}")
        return cls(int(header["rng_seed"]), [ProtocolMessage.from_dict(json.loads(ln)) for ln in lines[1:]])

    @classmethod
    def read(cls, path) -> "ProtocolTrace":
        with Path(path).open() as fh:
            return cls.parse_lines(fh)
