"""Blocks, finalised blocks, transactions and the deterministic mock crypto.

Digests are SHA-256 over a canonical length-prefixed encoding (documented in
the README); signatures are structural (signer, digest, length) with
unforgeability enforced by the simulator rather than by real ECDSA. The
protocol analysis only relies on collision resistance, uniqueness and
unforgeability, all of which the mock provides at simulation scale.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Optional

DIGEST_LEN = 32
CANONICAL_SEAL_LENGTH = 65  # mirrors an ECDSA recoverable signature
GENESIS_PARENT = b"\x00" * DIGEST_LEN
GENESIS_SENDER = "genesis"


@dataclass(frozen=True, slots=True)
class Transaction:
    sender: str
    nonce: int
    payload: bytes


@dataclass(frozen=True, slots=True)
class Block:
    height: int
    parent_digest: bytes
    proposer: str
    round_created: int
    transactions: tuple[Transaction, ...]
    well_formed_for_proof: bool = True


@dataclass(frozen=True, slots=True)
class CommitSeal:
    signer: str
    digest: bytes
    length: int = CANONICAL_SEAL_LENGTH


@dataclass(frozen=True, slots=True)
class FinalisedBlock:
    block: Block
    finalisation_proof: frozenset[CommitSeal]


@dataclass(frozen=True, slots=True)
class LedgerPosition:
    height: int
    index_in_block: int


def _lp(data: bytes) -> bytes:
    return len(data).to_bytes(4, "big") + data


def encode_transaction(tx: Transaction) -> bytes:
    return _lp(tx.sender.encode()) + tx.nonce.to_bytes(8, "big") + _lp(tx.payload)


def encode_block(b: Block) -> bytes:
    """Canonical encoding: fixed field order, length prefixes, big-endian ints."""
    out = [
        b.height.to_bytes(8, "big"),
        b.parent_digest,
        _lp(b.proposer.encode()),
        b.round_created.to_bytes(8, "big"),
        b"\x01" if b.well_formed_for_proof else b"\x00",
        len(b.transactions).to_bytes(4, "big"),
    ]
    out.extend(encode_transaction(tx) for tx in b.transactions)
    return b"".join(out)


def decode_block(data: bytes) -> Block:
    height = int.from_bytes(data[0:8], "big")
    parent = data[8:40]
    pos = 40
    plen = int.from_bytes(data[pos : pos + 4], "big")
    pos += 4
    proposer = data[pos : pos + plen].decode()
    pos += plen
    round_created = int.from_bytes(data[pos : pos + 8], "big")
    pos += 8
    well_formed = data[pos] == 1
    pos += 1
    ntx = int.from_bytes(data[pos : pos + 4], "big")
    pos += 4
    txs = []
    for _ in range(ntx):
        slen = int.from_bytes(data[pos : pos + 4], "big")
        pos += 4
        sender = data[pos : pos + slen].decode()
        pos += slen
        nonce = int.from_bytes(data[pos : pos + 8], "big")
        pos += 8
        dlen = int.from_bytes(data[pos : pos + 4], "big")
        pos += 4
        payload = data[pos : pos + dlen]
        pos += dlen
        txs.append(Transaction(sender, nonce, payload))
    if pos != len(data):
        raise ValueError("trailing bytes in block encoding")
    return Block(height, parent, proposer, round_created, tuple(txs), well_formed)


@lru_cache(maxsize=65536)
def hash_block(b: Block) -> bytes:
    return hashlib.sha256(encode_block(b)).digest()


def sign(digest: bytes, validator: str) -> CommitSeal:
    return CommitSeal(signer=validator, digest=digest, length=CANONICAL_SEAL_LENGTH)


def recover(digest: bytes, seal: CommitSeal) -> Optional[str]:
    """Signer of a seal over `digest`, or None when the check fails.

    Mirrors a signature verification: a seal over a different digest or with a
    non-canonical length recovers to nothing.
    """
    if seal.digest == digest and seal.length == CANONICAL_SEAL_LENGTH:
        return seal.signer
    return None


def make_genesis(validators: Iterable[str]) -> FinalisedBlock:
    """Genesis block; the validator set is declared as its transaction list."""
    txs = tuple(
        Transaction(GENESIS_SENDER, i, v.encode()) for i, v in enumerate(validators)
    )
    block = Block(0, GENESIS_PARENT, "", 0, txs)
    return FinalisedBlock(block, frozenset())


def validator_set(chain_prefix: list[FinalisedBlock]) -> tuple[str, ...]:
    """Authorised validators for the next instance: static, read from genesis."""
    genesis = chain_prefix[0]
    return tuple(tx.payload.decode() for tx in genesis.block.transactions)


def expected_nonces(chain_prefix: list[FinalisedBlock]) -> dict[str, int]:
    """Next expected nonce per sender after replaying the prefix."""
    nonces: dict[str, int] = {}
    for fb in chain_prefix:
        for tx in fb.block.transactions:
            nonces[tx.sender] = tx.nonce + 1
    return nonces


def is_valid_block(
    b: Block,
    parent: Block,
    variant,
    prior_nonces: Optional[Mapping[str, int]] = None,
) -> bool:
    """Parent linkage, height arithmetic, nonce sequencing; the hardened
    variant additionally requires the block to admit a finalisation proof."""
    if b.parent_digest != hash_block(parent):
        return False
    if b.height != parent.height + 1:
        return False
    if variant.block_validity_includes_wellformed and not b.well_formed_for_proof:
        return False
    nonces = dict(prior_nonces) if prior_nonces is not None else {}
    for tx in b.transactions:
        if tx.nonce != nonces.get(tx.sender, 0):
            return False
        nonces[tx.sender] = tx.nonce + 1
    return True


def is_valid_finalisation_proof(fb: FinalisedBlock, validators: tuple[str, ...], variant) -> bool:
    d = hash_block(fb.block)
    signers = {
        s
        for cs in fb.finalisation_proof
        if (s := recover(d, cs)) is not None and s in validators
    }
    return len(signers) >= variant.quorum_fn(len(validators))


def is_valid_finalised_block(fb: FinalisedBlock, local_chain: list[FinalisedBlock], variant) -> bool:
    h = fb.block.height
    if h < 1 or len(local_chain) < h:
        return False
    prefix = local_chain[:h]
    if not is_valid_finalisation_proof(fb, validator_set(prefix), variant):
        return False
    return is_valid_block(fb.block, prefix[-1].block, variant, expected_nonces(prefix))
