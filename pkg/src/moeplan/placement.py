"""Expert-to-GPU assignment and cross-model expert colocation.

Exclusive heterogeneous deployments sort experts by token load onto GPUs by
descending capability. Colocation pairs experts of two models to minimize the
largest per-GPU combined send/receive load: a sort-based rule when every
expert's send equals its receive, bottleneck matching otherwise. Colocation
on heterogeneous clusters additionally assigns the resulting pairs to GPUs
with a second bottleneck matching; that joint problem is NP-hard, so the
two-stage form is a polynomial heuristic with a brute-force oracle alongside.
"""
from __future__ import annotations

import itertools

import numpy as np

from .core import ClusterSpec, DeploymentPlan, LayerProfile, LoadVector
from .matching import Matching, bottleneck_matching, hopcroft_karp
from .sim import batched_colocated_times, colocated_pair_cost

__all__ = [
    "CaseOnePreconditionError",
    "expert_loads",
    "assign_exclusive_hetero",
    "pair_case1",
    "hopcroft_karp",
    "bottleneck_matching",
    "Matching",
    "colocate_homogeneous",
    "colocate_heterogeneous",
    "brute_force_colocation_hetero",
]

LOAD_ATOL = 1e-9


class CaseOnePreconditionError(ValueError):
    """Send and receive loads differ; use bottleneck matching instead."""


def expert_loads(profile: LayerProfile) -> np.ndarray:
    """Tokens each expert processes: the column sums of the first all-to-all."""
    return profile.d_first.col_sums()


def assign_exclusive_hetero(loads, cluster: ClusterSpec) -> DeploymentPlan:
    """Map the k-th most loaded expert to the k-th most capable GPU.

    Ties break toward the lowest index on both sides, so the result is
    deterministic and equals the identity for uniform loads on a uniform
    cluster.
    """
    loads = np.asarray(loads, dtype=float)
    if loads.ndim != 1 or loads.shape[0] != cluster.n:
        raise ValueError(f"expected {cluster.n} expert loads, got shape {loads.shape}")
    expert_order = np.argsort(-loads, kind="stable")
    gpu_order = np.argsort(-cluster.compute_scales, kind="stable")
    assignment = np.empty(cluster.n, dtype=int)
    assignment[expert_order] = gpu_order
    return DeploymentPlan(tuple(int(g) for g in assignment))


def pair_case1(a, b) -> tuple[tuple[int, ...], np.ndarray]:
    """Pair two equal-length load vectors to minimize the largest pair sum.

    Sorting ``a`` ascending and ``b`` descending and pairing positionally is
    optimal. Inputs are per-expert symmetric loads, either as 1-d arrays or
    as (n, 2) send/recv columns, which must agree (otherwise this reduction
    does not apply and the caller falls back to bottleneck matching).

    Returns ``(pairing, h)``: ``pairing[i]`` is the b-expert joined with
    a-expert ``i`` and ``h[i]`` the resulting combined load.
    """

    def collapse(v, name: str) -> np.ndarray:
        arr = np.asarray(v, dtype=float)
        if isinstance(v, LoadVector):
            arr = np.column_stack([v.send, v.recv])
        if arr.ndim == 2:
            if arr.shape[1] != 2:
                raise ValueError(f"{name} must have shape (n,) or (n, 2)")
            if np.any(np.abs(arr[:, 0] - arr[:, 1]) > LOAD_ATOL):
                raise CaseOnePreconditionError(
                    f"{name}: some expert sends and receives unequal amounts"
                )
            return arr[:, 0]
        if arr.ndim != 1:
            raise ValueError(f"{name} must have shape (n,) or (n, 2)")
        return arr

    av = collapse(a, "a")
    bv = collapse(b, "b")
    if av.shape != bv.shape:
        raise ValueError(f"length mismatch: {av.shape} vs {bv.shape}")
    order_a = np.argsort(av, kind="stable")
    order_b = np.argsort(-bv, kind="stable")
    pairing = np.empty(av.shape[0], dtype=int)
    pairing[order_a] = order_b
    h = av + bv[pairing]
    return tuple(int(v) for v in pairing), h


def _pairing_weights(load_a: LoadVector, load_b: LoadVector) -> np.ndarray:
    send = load_a.send[:, None] + load_b.send[None, :]
    recv = load_a.recv[:, None] + load_b.recv[None, :]
    return np.maximum(send, recv)


def colocate_homogeneous(profile_a: LayerProfile, profile_b: LayerProfile) -> DeploymentPlan:
    """Optimal expert pairing of two models on identical GPUs.

    Minimizes the largest per-GPU combined send or receive volume, which on a
    homogeneous cluster also minimizes the layer inference time. Uses the
    cheap sort-based pairing when every expert's send equals its receive, and
    bottleneck matching on the pairwise max-load weights otherwise; model a
    keeps its identity GPU assignment either way.
    """
    if profile_a.n != profile_b.n:
        raise ValueError(f"models disagree on n: {profile_a.n} vs {profile_b.n}")
    load_a = LoadVector.from_traffic(profile_a.d_first)
    load_b = LoadVector.from_traffic(profile_b.d_first)
    if load_a.symmetric(LOAD_ATOL) and load_b.symmetric(LOAD_ATOL):
        pairing, _ = pair_case1(load_a.send, load_b.send)
    else:
        pairing = bottleneck_matching(_pairing_weights(load_a, load_b)).pairs
    return DeploymentPlan.from_pairing(pairing)


def colocate_heterogeneous(
    profile_a: LayerProfile, profile_b: LayerProfile, cluster: ClusterSpec
) -> DeploymentPlan:
    """Two-stage pairing and placement on a heterogeneous cluster.

    Stage 1 pairs experts of the two models while ignoring the GPUs (the
    homogeneous pairing). Stage 2 assigns the pairs to GPUs by bottleneck
    matching on each pair's single-GPU completion cost. Jointly optimizing
    both choices is NP-hard; this decoupled form is polynomial and close to
    the brute-force optimum in practice.
    """
    if cluster.n != profile_a.n:
        raise ValueError(f"cluster has {cluster.n} GPUs, models have {profile_a.n} experts")
    pairing = colocate_homogeneous(profile_a, profile_b).pairing
    assert pairing is not None
    n = cluster.n
    weights = np.empty((n, n))
    for g in range(n):
        for p in range(n):
            weights[g, p] = colocated_pair_cost(
                profile_a, p, profile_b, pairing[p], cluster.gpus[g]
            )
    gpu_to_pair = bottleneck_matching(weights).pairs
    assignment_a = np.empty(n, dtype=int)
    assignment_b = np.empty(n, dtype=int)
    for g, p in enumerate(gpu_to_pair):
        assignment_a[p] = g
        assignment_b[pairing[p]] = g
    return DeploymentPlan(tuple(int(v) for v in assignment_a), tuple(int(v) for v in assignment_b))


def brute_force_colocation_hetero(
    profile_a: LayerProfile,
    profile_b: LayerProfile,
    cluster: ClusterSpec,
    max_n: int = 6,
) -> tuple[DeploymentPlan, float]:
    """Exhaustive optimum over all pairings and GPU assignments.

    Evaluates every pairing x assignment combination with the colocated
    timeline (n!^2 plans, so n is capped) and returns the earliest-finishing
    plan; ties resolve to the lexicographically first pairing and assignment,
    keeping the result deterministic.
    """
    n = profile_a.n
    if n > max_n:
        raise ValueError(f"n={n} exceeds the brute-force cap of {max_n}")
    if cluster.n != n:
        raise ValueError(f"cluster has {cluster.n} GPUs, models have {n} experts")
    perms = np.array(list(itertools.permutations(range(n))), dtype=int)
    best_time = np.inf
    best_plan: DeploymentPlan | None = None
    for pairing in itertools.permutations(range(n)):
        times = batched_colocated_times(profile_a, profile_b, pairing, perms, cluster)
        k = int(np.argmin(times))
        if times[k] < best_time:
            best_time = float(times[k])
            assignment_a = perms[k]
            assignment_b = np.empty(n, dtype=int)
            assignment_b[list(pairing)] = assignment_a
            best_plan = DeploymentPlan(
                tuple(int(v) for v in assignment_a), tuple(int(v) for v in assignment_b)
            )
    assert best_plan is not None
    return best_plan, best_time
