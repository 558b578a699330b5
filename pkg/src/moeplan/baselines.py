"""Reference strategies: random/shortest-first scheduling, random placement,
and same-model expert pairing.

The scheduling baselines fix a per-sender destination order and resolve
receiver contention by greedy serialization: a receiver accepts one transfer
at a time, earliest arrival first, ties to the lower sender index. The result
is always a valid contention-free schedule, just not a makespan-optimal one.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .commsched import CommSchedule, Phase, time_normalize
from .core import ClusterSpec, LayerProfile, TrafficMatrix

__all__ = [
    "schedule_fixed_order",
    "schedule_rcs",
    "schedule_sjf",
    "colocate_rec",
    "assign_rga",
    "colocate_same_model",
]


def schedule_fixed_order(
    d: TrafficMatrix, cluster: ClusterSpec, orders: Sequence[Sequence[int]]
) -> CommSchedule:
    """Serialize transfers given each sender's destination order.

    ``orders[i]`` lists the destinations of sender i; destinations with zero
    demand may be included and are skipped. Each sender works through its
    list in order, and a busy receiver makes later-arriving transfers wait.
    """
    t = time_normalize(d, cluster)
    n = t.n
    queues: list[list[tuple[int, float]]] = []
    for i, order in enumerate(orders):
        seen = sorted(set(int(j) for j in order))
        expected = sorted(int(j) for j in np.nonzero(t.entries[i] > 0)[0])
        if [j for j in expected if j not in seen]:
            raise ValueError(f"order for sender {i} misses destinations with demand")
        queues.append([(int(j), float(t.entries[i, j])) for j in order if t.entries[i, j] > 0])

    sender_ready = [0.0] * n
    receiver_free = [0.0] * n
    intervals: list[tuple[float, float, int, int]] = []
    remaining = sum(len(q) for q in queues)
    while remaining:
        best_key: tuple[float, float, int] | None = None
        best: tuple[int, int, float] | None = None
        for i, queue in enumerate(queues):
            if not queue:
                continue
            j, dur = queue[0]
            arrival = sender_ready[i]
            start = max(arrival, receiver_free[j])
            key = (start, arrival, i)
            if best_key is None or key < best_key:
                best_key = key
                best = (i, j, dur)
        assert best is not None and best_key is not None
        i, j, dur = best
        start = best_key[0]
        end = start + dur
        intervals.append((start, end, i, j))
        sender_ready[i] = end
        receiver_free[j] = end
        queues[i].pop(0)
        remaining -= 1
    return _slice_to_phases(n, intervals)


def _slice_to_phases(n: int, intervals: list[tuple[float, float, int, int]]) -> CommSchedule:
    if not intervals:
        return CommSchedule(n, (), 0.0)
    cuts = sorted({t for s, e, _, _ in intervals for t in (s, e)})
    phases = []
    for t0, t1 in zip(cuts, cuts[1:]):
        if t1 - t0 <= 0:
            continue
        active = tuple(sorted((i, j) for s, e, i, j in intervals if s <= t0 and e >= t1))
        phases.append(Phase(active, t1 - t0))
    makespan = math.fsum(p.duration for p in phases)
    return CommSchedule(n, tuple(phases), makespan)


def schedule_rcs(d: TrafficMatrix, cluster: ClusterSpec, seed: int) -> CommSchedule:
    """Random communication scheduling: shuffled destination order per sender."""
    rng = np.random.default_rng(seed)
    orders = []
    for i in range(d.n):
        dests = list(np.nonzero(d.entries[i] > 0)[0])
        rng.shuffle(dests)
        orders.append([int(j) for j in dests])
    return schedule_fixed_order(d, cluster, orders)


def schedule_sjf(d: TrafficMatrix, cluster: ClusterSpec) -> CommSchedule:
    """Shortest-job-first: each sender transmits its smallest volumes first."""
    orders = []
    for i in range(d.n):
        dests = np.nonzero(d.entries[i] > 0)[0]
        dests = sorted(dests, key=lambda j: (d.entries[i, j], j))
        orders.append([int(j) for j in dests])
    return schedule_fixed_order(d, cluster, orders)


def colocate_rec(n: int, seed: int) -> tuple[int, ...]:
    """Random expert colocation: a uniformly random pairing permutation."""
    rng = np.random.default_rng(seed)
    return tuple(int(v) for v in rng.permutation(n))


def assign_rga(n: int, cluster: ClusterSpec, seed: int) -> tuple[int, ...]:
    """Random GPU assignment: a uniformly random expert-to-GPU permutation."""
    if cluster.n != n:
        raise ValueError(f"cluster has {cluster.n} GPUs, expected {n}")
    rng = np.random.default_rng(seed)
    return tuple(int(v) for v in rng.permutation(n))


def colocate_same_model(profile: LayerProfile) -> tuple[tuple[int, int], ...]:
    """Pair each model's most loaded expert with its least loaded one.

    Experts are ordered by token load (descending, ties to the lower index)
    and rank k joins rank n-1-k, giving n/2 pairs that each occupy one GPU.
    Requires an even expert count.
    """
    n = profile.n
    if n % 2:
        raise ValueError(f"same-model pairing needs an even expert count, got {n}")
    order = np.argsort(-profile.d_first.col_sums(), kind="stable")
    return tuple((int(order[k]), int(order[n - 1 - k])) for k in range(n // 2))
