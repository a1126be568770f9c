"""The per-node protocol state machine: both variants, all guarded commands.

A node runs the top-level process (guards igc1/igc2) plus at most one live
finalisation instance (guards fpgc1..fpgc7). Guards are evaluated against the
node's message store with deterministic witnesses (smallest message ids,
smallest eligible round), so a run is a pure function of the schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .quorum import max_byzantine, quorum, quorum_opt
from .chain import (
    CANONICAL_SEAL_LENGTH,
    Block,
    FinalisedBlock,
    Transaction,
    expected_nonces,
    hash_block,
    is_valid_block,
    is_valid_finalised_block,
    sign,
    validator_set,
)
from .messages import (
    MessageStore,
    ProtocolMessage,
    commit_msg,
    finalised_block_msg,
    prepare_msg,
    preprepare_msg,
    round_change_msg,
)

MAX_TXS_PER_BLOCK = 4


@dataclass(frozen=True)
class ProtocolVariant:
    name: str
    quorum_fn: Callable[[int], int]
    has_igc2: bool
    has_seal_size_branch: bool  # fpgc4 unlock-and-round-change else branch
    requires_seal_signature: bool  # commit seal must recover to its sender
    block_validity_includes_wellformed: bool
    periodic_sync: bool


IBFT = ProtocolVariant("ibft", quorum, True, True, False, False, False)
IBFT_M1 = ProtocolVariant("ibft-m1", quorum_opt, False, False, True, True, True)
VARIANTS = {"ibft": IBFT, "ibft-m1": IBFT_M1}

# Deterministic default when several guards are enabled: finalisation first,
# timers last. An adversary schedule can override per step.
GUARD_PRIORITY = ("igc1", "fpgc4", "fpgc2", "fpgc3", "fpgc1", "fpgc7", "fpgc5", "fpgc6", "igc2")


@dataclass(frozen=True, slots=True)
class Multicast:
    msg: ProtocolMessage
    recipients: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class Broadcast:  # to every node, not just validators
    msg: ProtocolMessage


@dataclass(frozen=True, slots=True)
class SetTimer:
    h: int
    r: int
    at: int


@dataclass(frozen=True, slots=True)
class StartInstance:
    h: int


@dataclass(frozen=True, slots=True)
class StopInstance:
    h: int


Action = Multicast | Broadcast | SetTimer | StartInstance | StopInstance


@dataclass
class InstanceState:
    h: int
    av: tuple[str, ...]
    r: int = 0
    locked_block: Optional[Block] = None
    locked_digest: Optional[bytes] = None
    accepted_block: Optional[Block] = None
    accepted_digest: Optional[bytes] = None
    commit_sent: bool = False
    finalised_block_sent: bool = False
    round_already_started: bool = False
    timer_expiry: dict[int, int] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.av)

    @property
    def av_set(self) -> frozenset[str]:
        return frozenset(self.av)

    def proposer(self, r: Optional[int] = None) -> str:
        rr = self.r if r is None else r
        return self.av[(self.h + rr) % len(self.av)]


@dataclass
class NodeState:
    node_id: str
    index: int
    genesis: FinalisedBlock
    variant: ProtocolVariant
    t0: int
    commit_as_prepare: bool = False
    pending: list[Transaction] = field(default_factory=list)
    chain: list[FinalisedBlock] = field(default_factory=list)
    next_height: int = 0
    instance: Optional[InstanceState] = None
    store: MessageStore = field(default_factory=MessageStore)
    crashed: bool = False
    silenced: bool = False

    def is_validator_for(self, h: int) -> bool:
        return self.node_id in validator_set(self.chain[:h])


def ibft_init(node: NodeState, now: int = 0) -> list[Action]:
    node.chain = [node.genesis]
    node.next_height = 1
    actions: list[Action] = []
    if node.is_validator_for(node.next_height):
        actions.extend(fp_init(node, node.next_height, now))
    return actions


def fp_init(node: NodeState, h: int, now: int) -> list[Action]:
    if node.instance is not None:
        raise RuntimeError(f"{node.node_id}: instance {node.instance.h} already running")
    av = validator_set(node.chain[:h])
    node.instance = InstanceState(h=h, av=av)
    actions: list[Action] = [StartInstance(h)]
    actions.extend(start_new_round(node, 0, now))
    return actions


def create_new_proposed_block(node: NodeState, h: int) -> Block:
    """Drain up to MAX_TXS_PER_BLOCK nonce-valid pending txs in arrival order."""
    parent = node.chain[h - 1].block
    nonces = expected_nonces(node.chain[:h])
    picked: list[Transaction] = []
    for tx in node.pending:
        if len(picked) >= MAX_TXS_PER_BLOCK:
            break
        if tx.nonce == nonces.get(tx.sender, 0):
            picked.append(tx)
            nonces[tx.sender] = tx.nonce + 1
    return Block(
        height=h,
        parent_digest=hash_block(parent),
        proposer=node.node_id,
        round_created=node.instance.r if node.instance else 0,
        transactions=tuple(picked),
    )


def move_to_new_round(node: NodeState, r: int) -> list[Action]:
    inst = node.instance
    inst.r = r
    inst.round_already_started = False
    inst.accepted_block = None
    inst.accepted_digest = None
    return []


def move_and_send_round_change(node: NodeState, r: int) -> list[Action]:
    inst = node.instance
    move_to_new_round(node, r)
    return [Multicast(round_change_msg(inst.h, inst.r, node.node_id), inst.av)]


def start_new_round(node: NodeState, r: int, now: int) -> list[Action]:
    inst = node.instance
    move_to_new_round(node, r)
    inst.round_already_started = True
    inst.commit_sent = False
    inst.finalised_block_sent = False
    expiry = now + node.t0 * (2**r)
    inst.timer_expiry[r] = expiry
    actions: list[Action] = [SetTimer(inst.h, r, expiry)]
    if node.node_id == inst.proposer():
        block = inst.locked_block if inst.locked_block is not None else create_new_proposed_block(node, inst.h)
        actions.append(Multicast(preprepare_msg(inst.h, inst.r, block, node.node_id), inst.av))
    return actions


def _proposer_for(node: NodeState, h: int, r: int) -> str:
    av = validator_set(node.chain[:h])
    return av[(h + r) % len(av)]


def guard_enabled(node: NodeState, gc: str, now: int):
    """(enabled, witness) for one guarded command, witnesses deterministic."""
    inst = node.instance
    if gc == "igc1":
        for mid, m in node.store.finalised_messages():
            fb = m.fb
            if fb.block.height != node.next_height:
                continue
            if is_valid_finalised_block(fb, node.chain, node.variant):
                return True, fb
        return False, None

    if gc == "igc2":
        if not node.variant.has_igc2:
            return False, None
        found = node.store.find_old_preprepare(
            node.next_height,
            lambda h_pp, r_pp: _proposer_for(node, h_pp, r_pp),
            block_ok=lambda h_pp, b: b == node.chain[h_pp].block,
        )
        return (True, found) if found is not None else (False, None)

    if inst is None:
        return False, None
    threshold = node.variant.quorum_fn(inst.n)

    if gc == "fpgc1":
        if inst.accepted_block is not None:
            return False, None
        proposer = inst.proposer()
        for mid, m in node.store.preprepares_at(inst.h, inst.r):
            if m.signer == proposer:
                return True, (mid, m)
        return False, None

    if gc == "fpgc2":
        if inst.commit_sent or inst.accepted_block is None:
            return False, None
        count = node.store.count_prepares(
            inst.h, inst.r, inst.accepted_digest, inst.av_set, node.commit_as_prepare
        )
        return (count >= threshold), None

    if gc == "fpgc3":
        if inst.commit_sent or inst.locked_block is None:
            return False, None
        proposer = inst.proposer()
        for mid, m in node.store.preprepares_at(inst.h, inst.r):
            if m.signer == proposer and m.block == inst.locked_block:
                return True, None
        if node.store.count_prepares(
            inst.h, inst.r, inst.locked_digest, inst.av_set, node.commit_as_prepare
        ) >= 1:
            return True, None
        return False, None

    if gc == "fpgc4":
        if inst.finalised_block_sent or inst.accepted_block is None:
            return False, None
        cm = node.store.find_commit_quorum(
            inst.h,
            inst.r,
            inst.accepted_digest,
            inst.av_set,
            threshold,
            node.variant.requires_seal_signature,
        )
        return (True, cm) if cm is not None else (False, None)

    if gc == "fpgc5":
        needed = max_byzantine(inst.n) + 1
        for r_rc in node.store.round_change_rounds(inst.h, inst.av_set):
            if r_rc > inst.r and node.store.count_round_changes(inst.h, r_rc, inst.av_set) >= needed:
                return True, r_rc
        return False, None

    if gc == "fpgc6":
        expiry = inst.timer_expiry.get(inst.r)
        if expiry is not None and now >= expiry:
            return True, inst.r
        return False, None

    if gc == "fpgc7":
        for r_rc in node.store.round_change_rounds(inst.h, inst.av_set):
            if node.store.count_round_changes(inst.h, r_rc, inst.av_set) < threshold:
                continue
            if r_rc > inst.r or (r_rc == inst.r and not inst.round_already_started):
                return True, r_rc
        return False, None

    raise ValueError(f"unknown guarded command: {gc}")


def guard_noop(node: NodeState, gc: str) -> bool:
    """True when executing the enabled guard would change nothing (re-lock)."""
    if gc == "fpgc2" and node.instance is not None:
        return node.instance.locked_block == node.instance.accepted_block
    return False


def execute(node: NodeState, gc: str, witness, now: int) -> list[Action]:
    """Run one guarded command body; caller must have checked the guard."""
    inst = node.instance

    if gc == "igc1":
        fb: FinalisedBlock = witness
        assert len(node.chain) == node.next_height, "chain must be gap-free"
        node.chain.append(fb)
        actions: list[Action] = []
        if inst is not None and node.is_validator_for(node.next_height):
            node.instance = None
            actions.append(StopInstance(inst.h))
        node.next_height += 1
        if node.is_validator_for(node.next_height):
            actions.extend(fp_init(node, node.next_height, now))
        return actions

    if gc == "igc2":
        m, mid = witness
        b = m.block
        d = hash_block(b)
        av_old = validator_set(node.chain[: m.height])
        node.store.mark_processed(mid)
        return [Multicast(commit_msg(m.height, m.round, d, sign(d, node.node_id), node.node_id), av_old)]

    if gc == "fpgc1":
        mid, m = witness
        b = m.block
        lock_ok = inst.locked_block is None or inst.locked_block == b
        valid = is_valid_block(
            b, node.chain[inst.h - 1].block, node.variant, expected_nonces(node.chain[: inst.h])
        )
        if lock_ok and valid:
            inst.accepted_block = b
            inst.accepted_digest = hash_block(b)
            return [Multicast(prepare_msg(inst.h, inst.r, inst.accepted_digest, node.node_id), inst.av)]
        return move_and_send_round_change(node, inst.r + 1)

    if gc == "fpgc2":
        inst.locked_block = inst.accepted_block
        inst.locked_digest = inst.accepted_digest
        return []

    if gc == "fpgc3":
        seal = sign(inst.locked_digest, node.node_id)
        inst.commit_sent = True
        return [
            Multicast(
                commit_msg(inst.h, inst.r, inst.locked_digest, seal, node.node_id), inst.av
            )
        ]

    if gc == "fpgc4":
        cm = witness
        inst.finalised_block_sent = True
        if node.variant.has_seal_size_branch:
            seals_ok = all(m.seal.length == CANONICAL_SEAL_LENGTH for _, m in cm)
            if not (seals_ok and inst.accepted_block.well_formed_for_proof):
                actions = move_and_send_round_change(node, inst.r + 1)
                inst.locked_block = None
                inst.locked_digest = None
                return actions
        inst.locked_block = inst.accepted_block
        inst.locked_digest = inst.accepted_digest
        proof = frozenset(m.seal for _, m in cm)
        fb = FinalisedBlock(inst.accepted_block, proof)
        return [Broadcast(finalised_block_msg(fb))]

    if gc == "fpgc5":
        return move_and_send_round_change(node, witness)

    if gc == "fpgc6":
        return move_and_send_round_change(node, inst.r + 1)

    if gc == "fpgc7":
        return start_new_round(node, witness, now)

    raise ValueError(f"unknown guarded command: {gc}")
