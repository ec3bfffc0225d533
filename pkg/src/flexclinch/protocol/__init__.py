"""Peer-to-peer execution of the clinching auction over a simulated DHT."""

from .overlay import Overlay, assign_node_ids
from .privacy import CHECKS, PrivacyReport, assert_privacy
from .simulation import AllocationTuple, DistributedMCA, ProtocolStallError, run_protocol_mca
from .trace import FSP, MessageKind, ProtocolMessage, ProtocolTrace

__all__ = [
    "AllocationTuple", "CHECKS", "DistributedMCA", "FSP", "MessageKind", "Overlay",
    "PrivacyReport", "ProtocolMessage", "ProtocolStallError", "ProtocolTrace",
    "assert_privacy", "assign_node_ids", "run_protocol_mca",
]
