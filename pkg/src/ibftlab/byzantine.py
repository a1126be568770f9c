"""Byzantine behaviors: scripted directive builders plus the randomized
deviation set used for fuzz coverage.

Scripted runs drive Byzantine validators entirely from schedule directives
(the counterexamples are explicit event sequences); the fuzz adversary
instead lets Byzantine nodes run the honest machine and corrupts their
outgoing traffic. Either way a node can only ever sign as itself."""

from __future__ import annotations

import random
from typing import Optional

from .chain import Block, CANONICAL_SEAL_LENGTH, CommitSeal, hash_block
from .messages import COMMIT, PREPARE, PREPREPARE, ProtocolMessage
from .schedule import ByzDirective, block_to_hex


def silent(node: str, at: int = 0) -> ByzDirective:
    return ByzDirective(node, at, "silent")


def crash(node: str, at: int) -> ByzDirective:
    """Fail-stop: nothing is sent or processed from `at` on; envelopes already
    in flight still deliver."""
    return ByzDirective(node, at, "crash")


def send_prepare(node: str, at: int, h: int, r: int, digest: bytes, to: str = "*") -> ByzDirective:
    return ByzDirective(
        node, at, "send",
        (("kind", PREPARE), ("h", str(h)), ("r", str(r)), ("d", digest.hex()), ("to", to)),
    )


def send_round_change(node: str, at: int, h: int, r: int, to: str = "*") -> ByzDirective:
    return ByzDirective(
        node, at, "send", (("kind", "round-change"), ("h", str(h)), ("r", str(r)), ("to", to))
    )


def send_commit(
    node: str, at: int, h: int, r: int, digest: bytes, to: str = "*", seal_len: int = CANONICAL_SEAL_LENGTH
) -> ByzDirective:
    return ByzDirective(
        node, at, "send",
        (
            ("kind", COMMIT),
            ("h", str(h)),
            ("r", str(r)),
            ("d", digest.hex()),
            ("seal_len", str(seal_len)),
            ("to", to),
        ),
    )


def wrong_size_commit(
    b: Block, h: int, r: int, sender: str, at: int, recipients: str, well_formed_to: str = ""
) -> list[ByzDirective]:
    """Commits with a non-canonical seal size to `recipients`, optionally a
    parallel well-formed commit to a disjoint recipient set. Rejected at world
    load when `sender` is not Byzantine."""
    d = hash_block(b)
    out = [send_commit(sender, at, h, r, d, to=recipients, seal_len=CANONICAL_SEAL_LENGTH - 1)]
    if well_formed_to:
        out.append(send_commit(sender, at, h, r, d, to=well_formed_to))
    return out


def send_preprepare(node: str, at: int, h: int, r: int, block: Block, to: str = "*") -> ByzDirective:
    return ByzDirective(
        node, at, "send",
        (("kind", PREPREPARE), ("h", str(h)), ("r", str(r)), ("block", block_to_hex(block)), ("to", to)),
    )


def equivocate_preprepare(
    node: str, at: int, h: int, r: int, b1: Block, b2: Block, split_left: str, split_right: str
) -> ByzDirective:
    """Pre-Prepare b1 to one side of the partition, b2 to the other. The world
    rejects the directive when `node` is not the round's proposer."""
    return ByzDirective(
        node, at, "equivocate",
        (
            ("h", str(h)),
            ("r", str(r)),
            ("block1", block_to_hex(b1)),
            ("block2", block_to_hex(b2)),
            ("split", f"{split_left}|{split_right}"),
        ),
    )


class FuzzDeviations:
    """Seeded random deviations: own-send drops, delays, wrong-size seals,
    proposer equivocation, plus adversarial pre-GST network behavior."""

    def __init__(self, seed: int):
        self.rng = random.Random(seed)

    def message_fate(self, world, kind, sender, recipient, send_time) -> Optional[tuple]:
        gst, delta = world.config.gst, world.config.delta
        if send_time < gst:
            roll = self.rng.random()
            if roll < 0.25:
                return ("drop", None)
            if roll < 0.50:
                return ("deliver", self.rng.randint(send_time + 1, max(send_time, gst) + delta))
            return None
        if delta > 1 and self.rng.random() < 0.3:
            return ("deliver", self.rng.randint(send_time + 1, send_time + delta))
        return None

    def mutate_outgoing(self, world, sender, recipient, msg: ProtocolMessage):
        if recipient == sender:
            return msg
        roll = self.rng.random()
        if msg.kind == COMMIT:
            if roll < 0.35:
                bad = CommitSeal(msg.seal.signer, msg.seal.digest, CANONICAL_SEAL_LENGTH - 1)
                return ProtocolMessage(
                    COMMIT, msg.height, msg.round, msg.signer, digest=msg.digest, seal=bad
                )
            if roll < 0.50:
                return None
        elif msg.kind == PREPREPARE:
            if roll < 0.30 and msg.block.transactions:
                alt = Block(
                    msg.block.height,
                    msg.block.parent_digest,
                    msg.block.proposer,
                    msg.block.round_created,
                    (),
                    msg.block.well_formed_for_proof,
                )
                return ProtocolMessage(PREPREPARE, msg.height, msg.round, msg.signer, block=alt)
            if roll < 0.40:
                return None
        elif msg.kind == PREPARE:
            if roll < 0.15:
                return None
        return msg
