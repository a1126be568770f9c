"""Mock crypto, block validity and finalisation-proof counting."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ibftlab.chain import (
    CANONICAL_SEAL_LENGTH,
    Block,
    CommitSeal,
    FinalisedBlock,
    GENESIS_PARENT,
    Transaction,
    decode_block,
    encode_block,
    expected_nonces,
    hash_block,
    is_valid_block,
    is_valid_finalisation_proof,
    is_valid_finalised_block,
    make_genesis,
    recover,
    sign,
    validator_set,
)
from ibftlab.validator import IBFT, IBFT_M1

VALS = ("v0", "v1", "v2", "v3")


@pytest.fixture
def genesis():
    return make_genesis(VALS)


def child_of(genesis, txs=(), proposer="v1", round_created=0, well_formed=True):
    return Block(1, hash_block(genesis.block), proposer, round_created, tuple(txs), well_formed)


def test_hash_deterministic(genesis):
    b = child_of(genesis)
    assert hash_block(b) == hash_block(b)
    assert len(hash_block(b)) == 32


def test_hash_sensitive_to_each_field(genesis):
    base = child_of(genesis)
    variants = [
        child_of(genesis, round_created=1),
        child_of(genesis, proposer="v2"),
        child_of(genesis, txs=[Transaction("c", 0, b"x")]),
        child_of(genesis, well_formed=False),
        Block(2, hash_block(genesis.block), "v1", 0, ()),
    ]
    digests = {hash_block(base)} | {hash_block(v) for v in variants}
    assert len(digests) == 1 + len(variants)


def test_genesis_digest_pinned(genesis):
    # Same validator declaration -> same genesis digest, different -> different.
    assert hash_block(genesis.block) == hash_block(make_genesis(VALS).block)
    assert hash_block(genesis.block) != hash_block(make_genesis(("v0", "v1", "v2")).block)
    assert genesis.block.parent_digest == GENESIS_PARENT


def test_encode_roundtrip(genesis):
    b = child_of(genesis, txs=[Transaction("alice", 0, b"hello"), Transaction("bob", 0, b"")])
    assert decode_block(encode_block(b)) == b


def test_sign_recover_identity(genesis):
    d = hash_block(child_of(genesis))
    seal = sign(d, "v2")
    assert seal.signer == "v2"
    assert seal.length == CANONICAL_SEAL_LENGTH
    assert recover(d, seal) == "v2"
    assert sign(d, "v2") == seal  # deterministic / unique per (digest, signer)


@given(st.binary(min_size=32, max_size=32), st.sampled_from(VALS))
def test_recover_of_sign_is_identity(digest, v):
    assert recover(digest, sign(digest, v)) == v


def test_recover_rejects_wrong_digest(genesis):
    d1 = hash_block(child_of(genesis))
    d2 = hash_block(child_of(genesis, round_created=5))
    assert recover(d2, sign(d1, "v0")) is None


def test_recover_rejects_wrong_length(genesis):
    d = hash_block(child_of(genesis))
    bad = CommitSeal("v0", d, CANONICAL_SEAL_LENGTH - 1)
    assert recover(d, bad) is None


def test_is_valid_block_happy_and_height(genesis):
    b = child_of(genesis)
    assert is_valid_block(b, genesis.block, IBFT)
    too_high = Block(2, hash_block(genesis.block), "v1", 0, ())
    assert not is_valid_block(too_high, genesis.block, IBFT)
    wrong_parent = Block(1, b"\x11" * 32, "v1", 0, ())
    assert not is_valid_block(wrong_parent, genesis.block, IBFT)


def test_is_valid_block_wellformed_split(genesis):
    b = child_of(genesis, well_formed=False)
    assert is_valid_block(b, genesis.block, IBFT)
    assert not is_valid_block(b, genesis.block, IBFT_M1)


def test_is_valid_block_nonces(genesis):
    good = child_of(genesis, txs=[Transaction("a", 0, b""), Transaction("a", 1, b"")])
    assert is_valid_block(good, genesis.block, IBFT)
    gap = child_of(genesis, txs=[Transaction("a", 1, b"")])
    assert not is_valid_block(gap, genesis.block, IBFT)
    dup = child_of(genesis, txs=[Transaction("a", 0, b""), Transaction("a", 0, b"")])
    assert not is_valid_block(dup, genesis.block, IBFT)
    # with prior chain context the expected nonce advances
    assert not is_valid_block(good, genesis.block, IBFT, prior_nonces={"a": 2})


def seals_for(block, signers):
    d = hash_block(block)
    return frozenset(sign(d, s) for s in signers)


def test_finalisation_proof_thresholds(genesis):
    b = child_of(genesis)
    fb3 = FinalisedBlock(b, seals_for(b, ["v0", "v1", "v2"]))
    assert is_valid_finalisation_proof(fb3, VALS, IBFT)  # quorum(4) = 3
    fb2 = FinalisedBlock(b, seals_for(b, ["v0", "v1"]) | {sign(hash_block(b), "intruder")})
    assert not is_valid_finalisation_proof(fb2, VALS, IBFT)  # non-validator seal ignored


def test_finalisation_proof_quorum6_split(genesis):
    vals6 = tuple(f"v{i}" for i in range(6))
    gen6 = make_genesis(vals6)
    b = Block(1, hash_block(gen6.block), "v1", 0, ())
    fb = FinalisedBlock(b, seals_for(b, ["v0", "v1", "v2"]))
    assert is_valid_finalisation_proof(fb, vals6, IBFT)  # quorum(6) = 3
    assert not is_valid_finalisation_proof(fb, vals6, IBFT_M1)  # quorum_opt(6) = 4


def test_finalisation_proof_counts_distinct_signers_once(genesis):
    b = child_of(genesis)
    d = hash_block(b)
    # Two seals attributable to v0 (one malformed), one to v1: only 2 count.
    proof = frozenset(
        [sign(d, "v0"), CommitSeal("v0", d, CANONICAL_SEAL_LENGTH - 1), sign(d, "v1")]
    )
    assert not is_valid_finalisation_proof(FinalisedBlock(b, proof), VALS, IBFT)


def test_proof_monotone_in_seals(genesis):
    b = child_of(genesis)
    d = hash_block(b)
    proof = seals_for(b, ["v0", "v1", "v2"])
    fb = FinalisedBlock(b, proof)
    assert is_valid_finalised_block(fb, [genesis], IBFT)
    bigger = FinalisedBlock(b, proof | {sign(d, "v3")})
    assert is_valid_finalised_block(bigger, [genesis], IBFT)


def test_is_valid_finalised_block_conjunction(genesis):
    good_block = child_of(genesis)
    bad_block = Block(2, hash_block(genesis.block), "v1", 0, ())
    assert is_valid_finalised_block(
        FinalisedBlock(good_block, seals_for(good_block, ["v0", "v1", "v2"])), [genesis], IBFT
    )
    assert not is_valid_finalised_block(
        FinalisedBlock(bad_block, seals_for(bad_block, ["v0", "v1", "v2"])), [genesis], IBFT
    )
    assert not is_valid_finalised_block(
        FinalisedBlock(good_block, seals_for(good_block, ["v0", "v1"])), [genesis], IBFT
    )


def test_validator_set_static_and_deterministic(genesis):
    assert validator_set([genesis]) == VALS
    b = child_of(genesis)
    fb = FinalisedBlock(b, seals_for(b, ["v0", "v1", "v2"]))
    assert validator_set([genesis, fb]) == VALS


def test_tx_unique_across_accepted_chain(genesis):
    """Accepting blocks one by one via is_valid_block keeps (sender, nonce)
    unique across the whole chain."""
    chain = [genesis]
    txs = [Transaction("a", 0, b"0"), Transaction("a", 1, b"1"), Transaction("b", 0, b"z")]
    b1 = child_of(genesis, txs=txs[:2])
    assert is_valid_block(b1, chain[-1].block, IBFT, expected_nonces(chain))
    chain.append(FinalisedBlock(b1, seals_for(b1, ["v0", "v1", "v2"])))
    replay = Block(2, hash_block(b1), "v2", 0, (txs[0],))
    assert not is_valid_block(replay, chain[-1].block, IBFT, expected_nonces(chain))
    fresh = Block(2, hash_block(b1), "v2", 0, (Transaction("a", 2, b"2"),))
    assert is_valid_block(fresh, chain[-1].block, IBFT, expected_nonces(chain))
    chain.append(FinalisedBlock(fresh, seals_for(fresh, ["v0", "v1", "v2"])))
    seen = set()
    for fb in chain:
        for tx in fb.block.transactions:
            assert (tx.sender, tx.nonce) not in seen
            seen.add((tx.sender, tx.nonce))
