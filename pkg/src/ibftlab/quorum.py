"""Integer quorum arithmetic and range checkers for the protocol's inequalities.

All functions are exact integer arithmetic; floats never appear here because
the ceil/floor boundary cases (n = 6 in particular) are load-bearing.
"""

from __future__ import annotations


def _require_positive(n: int) -> None:
    if n < 1:
        raise ValueError(f"validator count must be >= 1, got {n}")


def max_byzantine(n: int) -> int:
    """Largest tolerable number of Byzantine validators: floor((n-1)/3)."""
    _require_positive(n)
    return (n - 1) // 3


def quorum(n: int) -> int:
    """Base-protocol message threshold: 2*f(n) + 1."""
    _require_positive(n)
    return 2 * max_byzantine(n) + 1


def quorum_opt(n: int) -> int:
    """Hardened-variant threshold: ceil(2n/3)."""
    _require_positive(n)
    return -((-2 * n) // 3)


def min_honest_overlap(n: int) -> int:
    """Guaranteed honest validators common to any two quorum_opt(n)-sized sets.

    Assumes at most max_byzantine(n) validators are Byzantine, placed
    adversarially: max(2*quorum_opt(n) - n - f(n), 0).
    """
    _require_positive(n)
    return max(2 * quorum_opt(n) - n - max_byzantine(n), 0)


# Lemma id -> (predicate over n, smallest n the statement is claimed for,
# known exceptions inside that domain).
LEMMAS: dict[str, tuple] = {
    "n_minus_1_ge_q": (lambda n: n - 1 >= quorum(n), 4, frozenset()),
    "n_gt_2f": (lambda n: n > 2 * max_byzantine(n), 1, frozenset()),
    "qopt_plus_f_le_n": (lambda n: quorum_opt(n) + max_byzantine(n) <= n, 1, frozenset()),
    "n_minus_q_lt_q": (lambda n: n - quorum(n) < quorum(n), 4, frozenset({6})),
    "n_minus_qopt_lt_qopt": (lambda n: n - quorum_opt(n) < quorum_opt(n), 1, frozenset()),
}


def check_lemma(lemma_id: str, lo: int, hi: int) -> list[int]:
    """Evaluate one lemma pointwise on [lo, hi]; return every n where it fails.

    The n = 6 exception of n_minus_q_lt_q is returned as data, not special-cased,
    so callers can observe it.
    """
    if lemma_id not in LEMMAS:
        raise ValueError(f"unknown lemma id: {lemma_id!r}")
    pred, min_n, _ = LEMMAS[lemma_id]
    if lo < min_n:
        raise ValueError(f"lemma {lemma_id} is only claimed for n >= {min_n}, range starts at {lo}")
    if hi < lo:
        raise ValueError(f"empty range [{lo}, {hi}]")
    return [n for n in range(lo, hi + 1) if not pred(n)]


def lemma_table(lo: int, hi: int) -> list[dict]:
    """One row per lemma over [lo, hi] clipped to each lemma's domain.

    A row passes when the observed failures are exactly the known exceptions.
    """
    rows = []
    for lemma_id, (_, min_n, exceptions) in LEMMAS.items():
        start = max(lo, min_n)
        failures = check_lemma(lemma_id, start, hi)
        rows.append(
            {
                "lemma": lemma_id,
                "range": (start, hi),
                "failures": failures,
                "ok": set(failures) == set(exceptions),
            }
        )
    return rows
