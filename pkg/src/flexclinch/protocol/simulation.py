"""In-process simulation of the clinching auction run by the users themselves.

Per iteration: the FSP announces the reward; every user stores its bid at a
different peer under a one-time tag; partial sums climb the id-ordered tree
to the max-id node, which gets the demand from the FSP and checks
termination; if the auction continues it broadcasts the totals, each storing
peer computes the clinchable amount of the bid it holds and forwards it to
whoever currently keeps that bid's allocation tuple; tuples then move to new
custodians. At the end the leftover demand is rationed, tuples return to
their owners, and only the owners' aggregate tuples reach the FSP.

Partial sums travel as exact rationals, so every total equals the exactly
rounded centralized sum and the outcome matches
:func:`flexclinch.mechanisms.run_mca` bit for bit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from ..agents import AgentPolicy, truthful_policies
from ..mechanisms import MechanismError, MechanismTag, Outcome
from ..mechanisms.mca import clinchable, iteration_cap, price_at, ration_share
from ..model import DegenerateDemandError, InputError, Instance, desired_reduction, reward_total
from .overlay import Overlay
from .trace import FSP, MessageKind, ProtocolTrace

log = logging.getLogger(__name__)


class ProtocolStallError(RuntimeError):
    """A step waited on data that never arrived."""


@dataclass
class AllocationTuple:
    """Running allocation and payment of one user, held by a custodian peer."""

    total_clinched: float = 0.0
    total_payment: float = 0.0

    def add(self, zeta: float, lam: float) -> None:
        self.total_clinched = self.total_clinched + zeta
        self.total_payment = self.total_payment + lam * zeta


class DistributedMCA:
    def __init__(self, instance: Instance, policies: Sequence[AgentPolicy] | None,
                 epsilon: float, seed: int, literal_rationing: bool = False):
        if instance.n == 0:
            raise InputError("the protocol needs at least one user")
        if not epsilon > 0:
            raise InputError(f"epsilon must be positive (got {epsilon})")
        if instance.reward.b <= 0:
            raise DegenerateDemandError("the clinching auction needs b > 0")
        if instance.n < 2:
            log.warning("fewer than two users: the protocol cannot hide bids")
        self.instance = instance
        self.policies = list(policies) if policies is not None else truthful_policies(instance)
        self.epsilon = epsilon
        self.literal = literal_rationing
        self.overlay = Overlay(instance.n, seed)
        self.trace = ProtocolTrace(seed)
        self.node_of = self.overlay.ids  # user index -> node id
        # storing node -> iteration -> (tag, bid)
        self.stored: dict[int, dict[int, tuple[str, float]]] = {x: {} for x in self.node_of}
        self.tuples: dict[int, AllocationTuple] = {i: AllocationTuple() for i in range(instance.n)}
        self.custodian: dict[int, int] = {}
        # DHT lookup records: tag -> user index of the tuple it belongs to.
        # Resolved by the substrate, never shipped in a message.
        self._tag_owner: dict[str, int] = {}
        self._lams: dict[int, float] = {}
        for i in range(instance.n):
            self.custodian[i] = self.overlay.next_custodian(
                self.node_of[i], self.overlay.tag(i, -1), -1, owner=self.node_of[i])

    # -------------------------------------------------------------- steps

    def store_bid(self, owner: int, value: float, iteration: int) -> int:
        if value < 0:
            raise InputError(f"negative bid {value}")
        w = self.overlay.storage_node(owner, iteration)
        tag = self.overlay.tag(owner, iteration)
        self._tag_owner[tag] = owner
        self.stored[w][iteration] = (tag, value)
        self.trace.log(MessageKind.STORE_BID, self.node_of[owner], w, iteration, tag=tag, bid=value)
        return w

    def aggregate_sum(self, iteration: int, value_of=None, quantity: str = "bid") -> Fraction:
        """Exact tree sum of one value per node; returns the root's total."""
        if value_of is None:
            def value_of(node):
                try:
                    return Fraction(self.stored[node][iteration][1])
                except KeyError:
                    raise ProtocolStallError(
                        f"node {node:040x} holds no bid for iteration {iteration}") from None
        partial: dict[int, Fraction] = {}
        for node in self.overlay.post_order():
            acc = value_of(node)
            for child in self.overlay.children[node]:
                acc += partial[child]
            partial[node] = acc
            if node != self.overlay.root:
                self.trace.log(MessageKind.SUM_UPWARD, node, self.overlay.parent[node], iteration,
                               quantity=quantity, partial_sum=str(acc))
        return partial[self.overlay.root]

    def broadcast_and_clinch(self, iteration: int, total: Fraction, demand: float) -> dict[int, float]:
        """Root broadcasts the totals; storing peers report clinchable amounts.

        Returns the clinchable amount computed at each storing node.
        """
        root = self.overlay.root
        for node in self.node_of:
            if node != root:
                self.trace.log(MessageKind.BROADCAST_TOTALS, root, node, iteration,
                               total=str(total), demand=demand)
        lam = self._lams[iteration]
        out = {}
        for node in self.node_of:
            tag, bid = self.stored[node][iteration]
            cum = clinchable(float(total - Fraction(bid)), demand)
            out[node] = cum
            owner = self._tag_owner[tag]
            self.trace.log(MessageKind.CLINCH_UPDATE, node, self.custodian[owner], iteration,
                           tag=tag, clinchable=cum)
            tup = self.tuples[owner]
            tup.add(max(0.0, cum - tup.total_clinched), lam)
        return out

    def handoff_tuple(self, iteration: int) -> dict[int, int]:
        moved = {}
        for i, tup in self.tuples.items():
            j = self.custodian[i]
            g = self.overlay.next_custodian(j, self.overlay.tag(i, iteration + 1), iteration,
                                           owner=self.node_of[i])
            self.trace.log(MessageKind.TUPLE_HANDOFF, j, g, iteration,
                           total_clinched=tup.total_clinched, total_payment=tup.total_payment)
            self.custodian[i] = g
            moved[i] = g
        return moved

    def _ration(self, k: int, total_prev: Fraction, demand_prev: float) -> None:
        lam = self._lams[k]
        excess_at: dict[int, float] = {}
        for i, tup in self.tuples.items():
            w = self.overlay.storage_node(i, k)
            tag, bid = self.stored[w][k]
            self.trace.log(MessageKind.RATION_REQUEST, self.custodian[i], w, k,
                           tag=tag, clinched=tup.total_clinched)
            excess_at[w] = bid - tup.total_clinched if self.literal else max(0.0, bid - tup.total_clinched)
        held: dict[int, Fraction] = {x: Fraction(0) for x in self.node_of}
        for i, tup in self.tuples.items():
            held[self.custodian[i]] += Fraction(tup.total_clinched)
        sum_excess = self.aggregate_sum(k, lambda x: Fraction(excess_at[x]), quantity="excess")
        sum_clinched = self.aggregate_sum(k, lambda x: held[x], quantity="clinched")
        if self.literal:
            num, den = demand_prev, float(total_prev)
        else:
            num, den = demand_prev - float(sum_clinched), float(sum_excess)
        root = self.overlay.root
        for node in self.node_of:
            if node != root:
                self.trace.log(MessageKind.RATION_FACTORS, root, node, k, numerator=num, denominator=den)
        for i, tup in self.tuples.items():
            w = self.overlay.storage_node(i, k)
            tag, _ = self.stored[w][k]
            share = ration_share(excess_at[w], num, den)
            self.trace.log(MessageKind.RATION_REPLY, w, self.custodian[i], k, tag=tag, share=share)
            tup.add(share, lam)

    # -------------------------------------------------------------- driver

    def run(self) -> tuple[Outcome, ProtocolTrace]:
        inst, reward = self.instance, self.instance.reward
        a = reward.a
        root = self.overlay.root
        cap = iteration_cap(a, self.epsilon)
        prev = None
        k = 0
        while True:
            if k > cap:
                raise MechanismError(f"no termination within {cap} iterations")
            lam = price_at(a, k, self.epsilon)
            self._lams[k] = lam
            for node in self.node_of:
                self.trace.log(MessageKind.PRICE_QUERY, FSP, node, k, reward=lam)
            for i, policy in enumerate(self.policies):
                self.store_bid(i, policy.quantity(lam), k)
            total = self.aggregate_sum(k)
            demand = desired_reduction(lam, reward)
            self.trace.log(MessageKind.DEMAND_FROM_FSP, FSP, root, k, reward=lam, demand=demand)
            total_f = float(total)
            if k == 0 and a * total_f <= reward_total(min(total_f, reward.L), reward) and total_f > 0:
                raise MechanismError("full-shutdown case is not supported by the protocol")
            done = demand >= total_f
            self.trace.log(MessageKind.STATUS, root, FSP, k, terminated=done)
            if done:
                break
            self.broadcast_and_clinch(k, total, demand)
            self.handoff_tuple(k)
            prev = (k, total, demand)
            k += 1

        final_price = a
        if prev is not None:
            k_prev, total_prev, demand_prev = prev
            self._ration(k_prev, total_prev, demand_prev)
            final_price = self._lams[k_prev]

        allocation = np.zeros(inst.n)
        payment = np.zeros(inst.n)
        for i, tup in self.tuples.items():
            owner = self.node_of[i]
            self.trace.log(MessageKind.TUPLE_HANDOFF, self.custodian[i], owner, k,
                           total_clinched=tup.total_clinched, total_payment=tup.total_payment)
            self.trace.log(MessageKind.FINAL_REPORT, owner, FSP, k, user_id=inst.users[i].id,
                           total_clinched=tup.total_clinched, total_payment=tup.total_payment)
            allocation[i] = tup.total_clinched
            payment[i] = tup.total_payment
        outcome = Outcome.build(inst, allocation, payment, MechanismTag.MCA,
                                final_price=final_price, iterations=k)
        return outcome, self.trace


def run_protocol_mca(instance: Instance, policies: Sequence[AgentPolicy] | None = None,
                     epsilon: float = 1e-5, seed: int = 0,
                     literal_rationing: bool = False) -> tuple[Outcome, ProtocolTrace]:
    return DistributedMCA(instance, policies, epsilon, seed, literal_rationing).run()
