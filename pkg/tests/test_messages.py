"""Message store: ids, set semantics, quorum counting, deterministic picks."""

import pytest

from ibftlab.chain import CANONICAL_SEAL_LENGTH, CommitSeal, hash_block, make_genesis, sign
from ibftlab.messages import (
    MessageStore,
    commit_msg,
    prepare_msg,
    preprepare_msg,
    round_change_msg,
)
from ibftlab.chain import Block

VALS = frozenset({"v0", "v1", "v2", "v3"})
D = b"\xab" * 32
D2 = b"\xcd" * 32


def test_insert_ids_monotone_and_set_semantics():
    s = MessageStore()
    m = prepare_msg(1, 0, D, "v0")
    assert s.insert(m) == 0
    assert s.insert(m) == 1  # same value, fresh id
    assert s.insert(prepare_msg(1, 0, D, "v1")) == 2
    assert len(s.values) == 2  # RM is a set of values
    assert len(s.entries) == 3  # IRM keeps multiplicity


def test_count_prepares_distinct_signers():
    s = MessageStore()
    for v in ("v0", "v1", "v2"):
        s.insert(prepare_msg(1, 0, D, v))
    assert s.count_prepares(1, 0, D, VALS) == 3
    s2 = MessageStore()
    for _ in range(3):
        s2.insert(prepare_msg(1, 0, D, "v0"))
    assert s2.count_prepares(1, 0, D, VALS) == 1


def test_count_prepares_filters_round_digest_and_validators():
    s = MessageStore()
    s.insert(prepare_msg(1, 0, D, "v0"))
    s.insert(prepare_msg(1, 1, D, "v1"))  # other round
    s.insert(prepare_msg(1, 0, D2, "v2"))  # other digest
    s.insert(prepare_msg(1, 0, D, "stranger"))  # not a validator
    assert s.count_prepares(1, 0, D, VALS) == 1


def test_commit_as_prepare_flag():
    s = MessageStore()
    s.insert(prepare_msg(1, 0, D, "v0"))
    s.insert(prepare_msg(1, 0, D, "v1"))
    s.insert(commit_msg(1, 0, D, sign(D, "v2"), "v2"))
    s.insert(commit_msg(1, 0, D, sign(D, "v3"), "v3"))
    assert s.count_prepares(1, 0, D, VALS, count_commits_as_prepares=True) == 4
    assert s.count_prepares(1, 0, D, VALS, count_commits_as_prepares=False) == 2


def wrong_size(signer, d=D):
    return CommitSeal(signer, d, CANONICAL_SEAL_LENGTH - 1)


def test_find_commit_quorum_basic():
    s = MessageStore()
    ids = [s.insert(commit_msg(1, 0, D, sign(D, v), v)) for v in ("v0", "v1", "v2")]
    cm = s.find_commit_quorum(1, 0, D, VALS, 3, require_seal_signature=False)
    assert [mid for mid, _ in cm] == ids
    assert s.find_commit_quorum(1, 0, D, VALS, 4, require_seal_signature=False) is None


def test_find_commit_quorum_wrong_size_seal_split():
    s = MessageStore()
    s.insert(commit_msg(1, 0, D, sign(D, "v0"), "v0"))
    s.insert(commit_msg(1, 0, D, sign(D, "v1"), "v1"))
    s.insert(commit_msg(1, 0, D, wrong_size("v2"), "v2"))
    # The hardened guard refuses the malformed seal outright...
    assert s.find_commit_quorum(1, 0, D, VALS, 3, require_seal_signature=True) is None
    # ...the base guard admits it; malformation is caught inside the command.
    cm = s.find_commit_quorum(1, 0, D, VALS, 3, require_seal_signature=False)
    assert cm is not None and len(cm) == 3


def test_find_commit_quorum_smallest_ids_and_distinct_signers():
    s = MessageStore()
    first = s.insert(commit_msg(1, 0, D, wrong_size("v0"), "v0"))
    s.insert(commit_msg(1, 0, D, sign(D, "v1"), "v1"))
    s.insert(commit_msg(1, 0, D, sign(D, "v1"), "v1"))  # duplicate signer
    s.insert(commit_msg(1, 0, D, sign(D, "v2"), "v2"))
    s.insert(commit_msg(1, 0, D, sign(D, "v3"), "v3"))
    cm = s.find_commit_quorum(1, 0, D, VALS, 3, require_seal_signature=False)
    assert [m.signer for _, m in cm] == ["v0", "v1", "v2"]  # three smallest ids
    assert first == cm[0][0]
    signers = [m.signer for _, m in cm]
    assert len(signers) == len(set(signers))
    # Under the seal-signature rule v0's malformed commit is skipped entirely.
    cm2 = s.find_commit_quorum(1, 0, D, VALS, 3, require_seal_signature=True)
    assert [m.signer for _, m in cm2] == ["v1", "v2", "v3"]


def test_find_commit_quorum_per_signer_smallest_eligible():
    s = MessageStore()
    s.insert(commit_msg(1, 0, D, wrong_size("v0"), "v0"))
    later = s.insert(commit_msg(1, 0, D, sign(D, "v0"), "v0"))
    s.insert(commit_msg(1, 0, D, sign(D, "v1"), "v1"))
    s.insert(commit_msg(1, 0, D, sign(D, "v2"), "v2"))
    cm = s.find_commit_quorum(1, 0, D, VALS, 3, require_seal_signature=True)
    assert (later, commit_msg(1, 0, D, sign(D, "v0"), "v0")) in cm


def test_seal_rejected_commits():
    s = MessageStore()
    s.insert(commit_msg(1, 0, D, sign(D, "v0"), "v0"))
    bad = s.insert(commit_msg(1, 0, D, wrong_size("v1"), "v1"))
    rejected = s.seal_rejected_commits(1, 0, D)
    assert [mid for mid, _ in rejected] == [bad]


def test_count_round_changes():
    s = MessageStore()
    s.insert(round_change_msg(1, 1, "v0"))
    s.insert(round_change_msg(1, 1, "v1"))
    s.insert(round_change_msg(1, 1, "v1"))  # duplicate
    s.insert(round_change_msg(1, 2, "v2"))  # other round
    assert s.count_round_changes(1, 1, VALS) == 2
    assert s.count_round_changes(1, 3, VALS) == 0
    assert s.round_change_rounds(1, VALS) == [1, 2]


def make_block(h=1, r=0, proposer="v1"):
    genesis = make_genesis(sorted(VALS))
    return Block(h, hash_block(genesis.block), proposer, r, ())


def test_find_old_preprepare():
    s = MessageStore()
    proposer_fn = lambda h, r: f"v{(h + r) % 4}"
    b = make_block(1, 0, "v1")
    mid = s.insert(preprepare_msg(1, 0, b, "v1"))
    found = s.find_old_preprepare(2, proposer_fn)
    assert found is not None and found[1] == mid
    s.mark_processed(mid)
    assert s.find_old_preprepare(2, proposer_fn) is None


def test_find_old_preprepare_wrong_proposer_or_height():
    s = MessageStore()
    proposer_fn = lambda h, r: f"v{(h + r) % 4}"
    s.insert(preprepare_msg(1, 0, make_block(1, 0, "v2"), "v2"))  # not proposer(1, 0)
    assert s.find_old_preprepare(2, proposer_fn) is None
    s.insert(preprepare_msg(3, 0, make_block(3, 0, "v3"), "v3"))  # not old (h >= h_v)
    assert s.find_old_preprepare(2, proposer_fn) is None


def test_find_old_preprepare_block_filter():
    s = MessageStore()
    proposer_fn = lambda h, r: "v1"
    b = make_block(1, 0, "v1")
    s.insert(preprepare_msg(1, 0, b, "v1"))
    assert s.find_old_preprepare(2, proposer_fn, block_ok=lambda h, blk: False) is None
    hit = s.find_old_preprepare(2, proposer_fn, block_ok=lambda h, blk: blk == b)
    assert hit is not None
