"""Quorum arithmetic against pinned values and an exhaustive subset oracle."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ibftlab.quorum import (
    LEMMAS,
    check_lemma,
    lemma_table,
    max_byzantine,
    min_honest_overlap,
    quorum,
    quorum_opt,
)


@pytest.mark.parametrize("n,expected", [(4, 1), (7, 2), (1, 0), (10, 3), (13, 4)])
def test_max_byzantine(n, expected):
    assert max_byzantine(n) == expected


@pytest.mark.parametrize("n,expected", [(4, 3), (6, 3), (7, 5), (10, 7)])
def test_quorum(n, expected):
    assert quorum(n) == expected


@pytest.mark.parametrize("n,expected", [(4, 3), (6, 4), (7, 5), (10, 7), (1, 1), (2, 2), (3, 2)])
def test_quorum_opt(n, expected):
    assert quorum_opt(n) == expected


@pytest.mark.parametrize("fn", [max_byzantine, quorum, quorum_opt, min_honest_overlap])
def test_rejects_zero(fn):
    with pytest.raises(ValueError):
        fn(0)


def test_min_honest_overlap_pinned():
    assert min_honest_overlap(4) == 1  # 2*3 - 4 - 1
    assert min_honest_overlap(7) == 1  # brute force agrees, see below
    assert min_honest_overlap(1) == 1  # the single validator is both quorums


def brute_force_min_honest_overlap(n: int) -> int:
    """Exhaustive oracle: all pairs of quorum_opt(n)-subsets crossed with all
    placements of exactly max_byzantine(n) Byzantine identities."""
    q = quorum_opt(n)
    f = max_byzantine(n)
    subset_masks = np.array(
        [sum(1 << i for i in c) for c in itertools.combinations(range(n), q)],
        dtype=np.int64,
    )
    byz_masks = [sum(1 << i for i in c) for c in itertools.combinations(range(n), f)]
    pop = np.array([bin(i).count("1") for i in range(1 << n)], dtype=np.int64)
    inters = subset_masks[:, None] & subset_masks[None, :]
    best = n + 1
    for b in byz_masks:
        best = min(best, int(pop[inters & ~b].min()))
    return best


@pytest.mark.parametrize("n", range(1, 13))
def test_min_honest_overlap_matches_brute_force(n):
    assert min_honest_overlap(n) == brute_force_min_honest_overlap(n)
    assert min_honest_overlap(n) >= 1


@settings(max_examples=200)
@given(st.integers(min_value=1, max_value=10_000))
def test_monotone_nondecreasing(n):
    assert max_byzantine(n + 1) >= max_byzantine(n)
    assert quorum(n + 1) >= quorum(n)
    assert quorum_opt(n + 1) >= quorum_opt(n)


def test_inequalities_full_range():
    for n in range(1, 10_001):
        assert n > 2 * max_byzantine(n)
        assert quorum_opt(n) + max_byzantine(n) <= n
        assert n - quorum_opt(n) < quorum_opt(n)
        if n >= 4:
            assert n - 1 >= quorum(n)
            if n != 6:
                assert n - quorum(n) < quorum(n)
    assert 6 - quorum(6) == quorum(6)  # equality at n=6, so the strict form fails
    assert not (6 - quorum(6) < quorum(6))


def test_check_lemma_exception_set():
    assert check_lemma("n_minus_q_lt_q", 4, 1000) == [6]
    assert check_lemma("n_minus_q_lt_q", 6, 6) == [6]
    assert check_lemma("qopt_plus_f_le_n", 1, 1000) == []
    assert check_lemma("n_gt_2f", 1, 1000) == []
    assert check_lemma("n_minus_1_ge_q", 4, 1000) == []
    assert check_lemma("n_minus_qopt_lt_qopt", 1, 1000) == []


def test_check_lemma_errors():
    with pytest.raises(ValueError):
        check_lemma("no_such_lemma", 1, 10)
    with pytest.raises(ValueError):
        check_lemma("n_minus_1_ge_q", 1, 10)  # below the claimed domain
    with pytest.raises(ValueError):
        check_lemma("n_gt_2f", 5, 4)  # empty range


def test_lemma_table():
    rows = lemma_table(1, 10_000)
    assert len(rows) == len(LEMMAS)
    assert all(r["ok"] for r in rows)
    by_id = {r["lemma"]: r for r in rows}
    assert by_id["n_minus_q_lt_q"]["failures"] == [6]
    for lemma_id, row in by_id.items():
        if lemma_id != "n_minus_q_lt_q":
            assert row["failures"] == []
