"""Minimal DHT substrate: a 160-bit XOR-metric id space plus the placement
rules the protocol needs (where bids are stored, who holds each allocation
tuple, and the aggregation tree). No routing tables or churn."""

from __future__ import annotations

import hashlib
import logging
import random
from functools import lru_cache

log = logging.getLogger(__name__)

ID_BITS = 160


def assign_node_ids(n: int, seed: int) -> list[int]:
    """``n`` distinct pseudo-random 160-bit node ids."""
    if n < 1:
        raise ValueError("need at least one node")
    rng = random.Random(seed)
    ids: list[int] = []
    seen = set()
    while len(ids) < n:
        x = rng.getrandbits(ID_BITS)
        if x not in seen:
            seen.add(x)
            ids.append(x)
    return ids


def key_hash(*parts) -> int:
    h = hashlib.sha1("|".join(str(p) for p in parts).encode())
    return int.from_bytes(h.digest(), "big")


class Overlay:
    """Node ids of the participating users and seeded placement decisions.

    ``nonces`` are per-user secrets; placement hashes only ever see
    ``(seed, iteration, nonce)``, never a user's identity.
    """

    def __init__(self, n: int, seed: int):
        self.seed = seed
        self.ids = assign_node_ids(n, seed)
        rng = random.Random(key_hash("nonce", seed))
        self.nonces = [rng.getrandbits(64) for _ in range(n)]
        # parent has the higher id; root is the max-id node
        self.tree_order = sorted(self.ids, reverse=True)
        self.parent = {
            node: self.tree_order[(m - 1) // 2] for m, node in enumerate(self.tree_order) if m > 0
        }
        self.children: dict[int, list[int]] = {node: [] for node in self.ids}
        for child, parent in self.parent.items():
            self.children[parent].append(child)
        self.root = self.tree_order[0]
        self._placement = lru_cache(maxsize=4)(self._placement_uncached)

    @property
    def n(self) -> int:
        return len(self.ids)

    def tag(self, owner: int, iteration: int) -> str:
        """Per-iteration opaque handle for a user's bid, unlinkable across iterations."""
        return f"{key_hash('tag', self.nonces[owner], iteration):040x}"[:16]

    def _placement_uncached(self, iteration: int) -> tuple[int, ...]:
        # bids are arranged in a hash-determined cycle; each bid goes to the
        # node of the next bid in the cycle, so every node holds exactly one
        # foreign bid and the holder is uniform over the other nodes
        order = sorted(range(self.n), key=lambda i: key_hash("store", self.seed, iteration, self.nonces[i]))
        target = [0] * self.n
        for m, i in enumerate(order):
            target[i] = self.ids[order[(m + 1) % self.n]]
        return tuple(target)

    def storage_node(self, owner: int, iteration: int) -> int:
        if self.n == 1:
            log.warning("single-node overlay: bids are stored at their owner; no privacy")
        return self._placement(iteration)[owner]

    def next_custodian(self, current: int, handle: str, iteration: int, owner: int | None = None) -> int:
        """XOR-closest node to a hashed key, excluding the current holder.

        With three or more nodes the tuple's owner is excluded as well; two
        nodes leave no choice but to alternate.
        """
        if self.n == 1:
            return current
        banned = {current}
        if owner is not None and self.n >= 3:
            banned.add(owner)
        key = key_hash("custody", self.seed, iteration, handle)
        return min((x for x in self.ids if x not in banned), key=lambda x: x ^ key)

    def post_order(self) -> list[int]:
        """Nodes ordered so every child precedes its parent."""
        return list(reversed(self.tree_order))
