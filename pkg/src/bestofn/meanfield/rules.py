"""Output distribution of a decision rule fed with i.i.d. neighbour opinions."""

from __future__ import annotations

from functools import lru_cache
from math import factorial

import numpy as np

from ..strategy import DecisionRule, apply_majority


def compositions(total: int, parts: int):
    """All tuples of ``parts`` non-negative integers summing to ``total``."""
    if parts == 1:
        yield (total,)
        return
    for k in range(total, -1, -1):
        for rest in compositions(total - k, parts - 1):
            yield (k, *rest)


@lru_cache(maxsize=None)
def majority_table(G: int, n: int, include_self: bool):
    """Buffer compositions, their multinomial coefficients and the
    0-based majority outcome for every own opinion.

    Returns ``(comps, coef, outcome)`` with shapes ``(K, n)``, ``(K,)``
    and ``(n, K)``.
    """
    comps = np.array(list(compositions(G, n)), dtype=np.int64)
    coef = np.array([factorial(G) / np.prod([factorial(k) for k in c]) for c in comps])
    outcome = np.empty((n, len(comps)), dtype=np.int64)
    for own in range(n):
        for k, c in enumerate(comps):
            buffer = [i for i in range(n) for _ in range(c[i])]
            outcome[own, k] = apply_majority(own, buffer, include_self)
    return comps, coef, outcome


def outcome_matrix(rule: DecisionRule, p, G: int) -> np.ndarray:
    """``W[j, i]``: probability that an agent of opinion ``j`` (0-based)
    adopts ``i`` after hearing ``G`` opinions drawn i.i.d. from ``p``."""
    p = np.asarray(p, dtype=float)
    n = len(p)
    if rule.kind == "voter":
        return np.tile(p, (n, 1))
    comps, coef, outcome = majority_table(G, n, rule.include_self)
    weights = coef * np.prod(p[None, :] ** comps, axis=1)
    W = np.zeros((n, n))
    for own in range(n):
        W[own] = np.bincount(outcome[own], weights=weights, minlength=n)
    return W


def decision_outcome_distribution(rule: DecisionRule, p, G: int, own=None) -> np.ndarray:
    """Distribution of the opinion a deciding agent ends up with.

    Parameters
    ----------
    rule : DecisionRule
    p : array_like, shape (n,)
        Distribution of each buffer entry (entries are i.i.d.).
    G : int
        Number of buffer entries.
    own : int, optional
        1-based opinion of the deciding agent. When omitted the full
        ``(n, n)`` matrix is returned, one row per own opinion.
    """
    if G < 1:
        raise ValueError("G must be at least 1")
    W = outcome_matrix(rule, p, G)
    if own is None:
        return W
    return W[own - 1]
