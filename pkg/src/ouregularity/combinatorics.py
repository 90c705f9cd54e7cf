"""Partial matchings of {0, ..., n-1}, the index structure of the weights I_n."""
from __future__ import annotations

import math
from functools import lru_cache


def max_pairs(n: int) -> int:
    return n // 2


def matching_count(n: int, s: int) -> int:
    return math.factorial(n) // (math.factorial(s) * 2**s * math.factorial(n - 2 * s))


@lru_cache(maxsize=None)
def _matchings(items: tuple, s: int) -> tuple:
    if s == 0:
        return (((), items),)
    if len(items) < 2 * s:
        return ()
    first, rest = items[0], items[1:]
    out = []
    # first element paired with a later one
    for j, partner in enumerate(rest):
        remaining = rest[:j] + rest[j + 1:]
        for pairs, left in _matchings(remaining, s - 1):
            out.append((((first, partner),) + pairs, left))
    # first element left unpaired
    for pairs, left in _matchings(rest, s):
        out.append((pairs, (first,) + left))
    out.sort()
    return tuple(out)


def enumerate_partial_matchings(n: int, s: int) -> tuple:
    """All sets of ``s`` disjoint pairs from range(n), with the leftover indices.

    Pairs are sorted internally and by first element, so each unordered
    matching appears exactly once.
    """
    if n < 0 or s < 0:
        raise ValueError("n and s must be non-negative")
    if s > max_pairs(n):
        raise ValueError(f"at most {max_pairs(n)} pairs fit in {n} indices")
    return _matchings(tuple(range(n)), s)
