"""Protocol message envelopes and the per-node received-message store.

The store keeps every reception as (message, id) with ids unique and strictly
increasing per node (IRM); the deduplicated value view (RM) is what the guard
queries count over. Nothing is ever removed: the pseudocode never deletes from
its message sets and desk-scale runs are small enough not to care.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .chain import Block, CommitSeal, FinalisedBlock, recover

PREPREPARE = "preprepare"
PREPARE = "prepare"
COMMIT = "commit"
ROUND_CHANGE = "round-change"
FINALISED_BLOCK = "finalised-block"

SIGNED_KINDS = (PREPREPARE, PREPARE, COMMIT, ROUND_CHANGE)


@dataclass(frozen=True, slots=True)
class ProtocolMessage:
    kind: str
    height: int
    round: Optional[int] = None
    signer: Optional[str] = None  # None only for finalised-block
    block: Optional[Block] = None  # preprepare payload
    digest: Optional[bytes] = None  # prepare / commit payload
    seal: Optional[CommitSeal] = None  # commit payload
    fb: Optional[FinalisedBlock] = None  # finalised-block payload


def preprepare_msg(h: int, r: int, block: Block, signer: str) -> ProtocolMessage:
    return ProtocolMessage(PREPREPARE, h, r, signer, block=block)


def prepare_msg(h: int, r: int, digest: bytes, signer: str) -> ProtocolMessage:
    return ProtocolMessage(PREPARE, h, r, signer, digest=digest)


def commit_msg(h: int, r: int, digest: bytes, seal: CommitSeal, signer: str) -> ProtocolMessage:
    return ProtocolMessage(COMMIT, h, r, signer, digest=digest, seal=seal)


def round_change_msg(h: int, r: int, signer: str) -> ProtocolMessage:
    return ProtocolMessage(ROUND_CHANGE, h, r, signer)


def finalised_block_msg(fb: FinalisedBlock) -> ProtocolMessage:
    return ProtocolMessage(FINALISED_BLOCK, fb.block.height, fb=fb)


class MessageStore:
    """Received messages of one node, with the quorum queries the guards need."""

    def __init__(self) -> None:
        self._next_id = 0
        self.entries: list[tuple[ProtocolMessage, int]] = []
        self.values: set[ProtocolMessage] = set()
        self.processed_old_preprepares: set[int] = set()
        # (h, r, digest) -> signer -> first id
        self._prepares: dict[tuple, dict[str, int]] = {}
        # (h, r, digest) -> signer -> [(id, msg), ...] in id order
        self._commits: dict[tuple, dict[str, list[tuple[int, ProtocolMessage]]]] = {}
        # (h, r) -> signer -> first id
        self._round_changes: dict[tuple, dict[str, int]] = {}
        # (h, r) -> [(id, msg), ...]
        self._preprepares: dict[tuple, list[tuple[int, ProtocolMessage]]] = {}
        # [(id, msg), ...] over all preprepares, for old-height scans
        self._all_preprepares: list[tuple[int, ProtocolMessage]] = []
        # [(id, msg), ...]
        self._finalised: list[tuple[int, ProtocolMessage]] = []

    def insert(self, m: ProtocolMessage) -> int:
        mid = self._next_id
        self._next_id += 1
        self.entries.append((m, mid))
        self.values.add(m)
        if m.kind == PREPARE:
            self._prepares.setdefault((m.height, m.round, m.digest), {}).setdefault(m.signer, mid)
        elif m.kind == COMMIT:
            per_signer = self._commits.setdefault((m.height, m.round, m.digest), {})
            per_signer.setdefault(m.signer, []).append((mid, m))
        elif m.kind == ROUND_CHANGE:
            self._round_changes.setdefault((m.height, m.round), {}).setdefault(m.signer, mid)
        elif m.kind == PREPREPARE:
            self._preprepares.setdefault((m.height, m.round), []).append((mid, m))
            self._all_preprepares.append((mid, m))
        elif m.kind == FINALISED_BLOCK:
            self._finalised.append((mid, m))
        return mid

    def count_prepares(
        self,
        h: int,
        r: int,
        d: bytes,
        validators: frozenset[str],
        count_commits_as_prepares: bool = False,
    ) -> int:
        """Distinct validator signers of matching Prepares (plus Commits when
        the commit-as-prepare optimisation is enabled)."""
        signers = {s for s in self._prepares.get((h, r, d), ()) if s in validators}
        if count_commits_as_prepares:
            signers.update(s for s in self._commits.get((h, r, d), ()) if s in validators)
        return len(signers)

    def find_commit_quorum(
        self,
        h: int,
        r: int,
        d: bytes,
        validators: frozenset[str],
        threshold: int,
        require_seal_signature: bool,
    ) -> Optional[list[tuple[int, ProtocolMessage]]]:
        """A pairwise-distinct-signer set of >= threshold matching Commits.

        With require_seal_signature only commits whose seal recovers to their
        sender are eligible; without it malformed seals are admitted (the base
        protocol inspects them only after the guard fires). Selection is the
        threshold-many smallest ids so adversarial arrival orderings replay
        exactly.
        """
        per_signer = self._commits.get((h, r, d))
        if not per_signer:
            return None
        candidates: list[tuple[int, ProtocolMessage]] = []
        for signer, msgs in per_signer.items():
            if signer not in validators:
                continue
            for mid, m in msgs:
                if require_seal_signature and recover(d, m.seal) != signer:
                    continue
                candidates.append((mid, m))
                break
        if len(candidates) < threshold:
            return None
        candidates.sort()
        return candidates[:threshold]

    def seal_rejected_commits(self, h: int, r: int, d: bytes) -> list[tuple[int, ProtocolMessage]]:
        """Matching commits whose seal does not recover to the sender."""
        out = []
        for msgs in self._commits.get((h, r, d), {}).values():
            out.extend((mid, m) for mid, m in msgs if recover(d, m.seal) != m.signer)
        out.sort()
        return out

    def count_round_changes(self, h: int, r: int, validators: frozenset[str]) -> int:
        return sum(1 for s in self._round_changes.get((h, r), ()) if s in validators)

    def round_change_rounds(self, h: int, validators: frozenset[str]) -> list[int]:
        """Rounds with at least one validator Round-Change for height h, ascending."""
        return sorted(
            r
            for (hh, r), signers in self._round_changes.items()
            if hh == h and any(s in validators for s in signers)
        )

    def preprepares_at(self, h: int, r: int) -> list[tuple[int, ProtocolMessage]]:
        return self._preprepares.get((h, r), [])

    def find_old_preprepare(
        self,
        h_v: int,
        proposer_fn: Callable[[int, int], str],
        block_ok: Optional[Callable[[int, Block], bool]] = None,
    ) -> Optional[tuple[ProtocolMessage, int]]:
        """Smallest-id unprocessed Pre-Prepare below h_v from the round's proposer."""
        for mid, m in self._all_preprepares:
            if mid in self.processed_old_preprepares:
                continue
            if m.height >= h_v:
                continue
            if m.signer != proposer_fn(m.height, m.round):
                continue
            if block_ok is not None and not block_ok(m.height, m.block):
                continue
            return m, mid
        return None

    def finalised_messages(self) -> list[tuple[int, ProtocolMessage]]:
        return self._finalised

    def mark_processed(self, mid: int) -> None:
        self.processed_old_preprepares.add(mid)
