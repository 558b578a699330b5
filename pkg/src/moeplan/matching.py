"""Bipartite matching primitives: Hopcroft-Karp and bottleneck matching.

All routines are deterministic: vertices are explored in index order and
adjacency lists are traversed in the order given, so identical inputs always
produce identical matchings.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = ["hopcroft_karp", "perfect_matching", "Matching", "bottleneck_matching"]

_INF = -1  # sentinel distance, avoids float('inf') in the BFS layering


def hopcroft_karp(
    adjacency: Sequence[Sequence[int]], n_right: int | None = None
) -> tuple[int, list[int | None]]:
    """Maximum-cardinality matching of a bipartite graph.

    ``adjacency[u]`` lists the right-side vertices reachable from left vertex
    ``u`` (duplicates are allowed but wasteful). Returns the matching size and
    ``match_left`` where ``match_left[u]`` is the matched right vertex or
    ``None``. The size equals ``len(adjacency)`` iff a perfect matching exists.
    """
    n_left = len(adjacency)
    if n_right is None:
        n_right = max((v for adj in adjacency for v in adj), default=-1) + 1
    match_left: list[int | None] = [None] * n_left
    match_right: list[int | None] = [None] * n_right
    dist = [0] * n_left

    def bfs() -> bool:
        queue: deque[int] = deque()
        for u in range(n_left):
            if match_left[u] is None:
                dist[u] = 0
                queue.append(u)
            else:
                dist[u] = _INF
        found = False
        while queue:
            u = queue.popleft()
            for v in adjacency[u]:
                w = match_right[v]
                if w is None:
                    found = True
                elif dist[w] == _INF:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        return found

    def dfs(u: int) -> bool:
        for v in adjacency[u]:
            w = match_right[v]
            if w is None or (dist[w] == dist[u] + 1 and dfs(w)):
                match_left[u] = v
                match_right[v] = u
                return True
        dist[u] = _INF
        return False

    size = 0
    while bfs():
        for u in range(n_left):
            if match_left[u] is None and dfs(u):
                size += 1
    return size, match_left


def perfect_matching(
    adjacency: Sequence[Sequence[int]],
    preferred: Sequence[Sequence[int]] | None = None,
) -> list[int] | None:
    """Perfect matching on ``adjacency``, or None when none exists.

    When ``preferred`` (a sub-adjacency) is given, a maximum matching on the
    preferred edges is built first and then extended to a perfect matching on
    the full edge set, so preferred edges are kept wherever the extension
    permits.
    """
    n = len(adjacency)
    if preferred is not None:
        _, match_left = hopcroft_karp(preferred, n_right=n)
    else:
        match_left = [None] * n
    match_right: list[int | None] = [None] * n
    for u, v in enumerate(match_left):
        if v is not None:
            match_right[v] = u

    def augment(u: int, seen: list[bool]) -> bool:
        for v in adjacency[u]:
            if seen[v]:
                continue
            seen[v] = True
            w = match_right[v]
            if w is None or augment(w, seen):
                match_left[u] = v
                match_right[v] = u
                return True
        return False

    for u in range(n):
        if match_left[u] is None:
            if not augment(u, [False] * n):
                return None
    return match_left  # type: ignore[return-value]


@dataclass(frozen=True)
class Matching:
    """A perfect matching ``pairs[left] = right`` and its largest edge weight."""

    pairs: tuple[int, ...]
    bottleneck_value: float


def bottleneck_matching(weights) -> Matching:
    """Perfect matching minimizing the maximum selected edge weight.

    Binary-searches the sorted distinct weights for the smallest threshold
    whose at-most-threshold subgraph admits a perfect matching (checked with
    Hopcroft-Karp). The full bipartite graph is complete, so the largest
    weight is always feasible.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 1:
        raise ValueError(f"weights must be a square matrix, got shape {w.shape}")
    if not np.isfinite(w).all():
        raise ValueError("weights must be finite")
    n = w.shape[0]
    distinct = np.unique(w)

    def adjacency_at(threshold: float) -> list[list[int]]:
        return [list(np.nonzero(w[i] <= threshold)[0]) for i in range(n)]

    def feasible(threshold: float) -> bool:
        size, _ = hopcroft_karp(adjacency_at(threshold), n_right=n)
        return size == n

    lo, hi = 0, len(distinct) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(distinct[mid]):
            hi = mid
        else:
            lo = mid + 1
    threshold = float(distinct[lo])
    _, match_left = hopcroft_karp(adjacency_at(threshold), n_right=n)
    pairs = tuple(int(v) for v in match_left)  # perfect by construction
    value = float(max(w[i, j] for i, j in enumerate(pairs)))
    return Matching(pairs, value)
