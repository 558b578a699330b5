"""Analytical timing of MoE inference layers.

Computation and communication never overlap within one model, and both
all-to-alls are synchronous barriers, so an exclusive deployment runs five
strictly ordered blocks: gate, first all-to-all, FFN, second all-to-all,
aggregation. Its layer time is ``max_g(gate_g) + makespan_1 + max_g(ffn_g) +
makespan_2 + max_g(agg_g)``, where the makespans come from the communication
schedules in use (the optimal ones by default, a baseline's otherwise); on a
homogeneous cluster this is exactly gate + b_max + max ffn + b_max + agg.

Colocated deployments interleave two models' phases; their layer time is
evaluated with the dependency recurrence over component end times, where the
aggregated communication windows come from b_max of the combined traffic
with the second model's traffic released only after its gate.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .commsched import CommSchedule, bmax_heterogeneous, build_schedule, time_normalize
from .core import (
    ClusterSpec,
    DeploymentPlan,
    GpuSpec,
    LayerProfile,
    TrafficMatrix,
    deploy_to_gpus,
)

__all__ = [
    "ComponentTimes",
    "ComponentSpan",
    "TimelineResult",
    "component_times",
    "simulate_exclusive",
    "simulate_colocated",
    "simulate_same_model",
    "gpu_utilization",
    "inject_noise",
    "colocated_pair_cost",
    "batched_colocated_times",
    "NOISE_LEVELS",
]

ScheduleFn = Callable[[TrafficMatrix, ClusterSpec], CommSchedule]

NOISE_LEVELS = (0.0, 0.25, 0.5, 0.75)


@dataclass(frozen=True)
class ComponentTimes:
    """Per-GPU durations of the three compute components of one layer."""

    gate: np.ndarray
    ffn: np.ndarray
    agg: np.ndarray

    def busy(self) -> np.ndarray:
        return self.gate + self.ffn + self.agg


def _assignment_of(plan: DeploymentPlan | Sequence[int]) -> tuple[int, ...]:
    if isinstance(plan, DeploymentPlan):
        return plan.assignment_a
    return tuple(int(v) for v in plan)


def component_times(
    profile: LayerProfile, plan: DeploymentPlan | Sequence[int], cluster: ClusterSpec
) -> ComponentTimes:
    """Gate, FFN, and aggregation durations on each GPU under an assignment.

    Gate and aggregation work is identical across experts and only divided by
    the GPU's compute scale. FFN work is affine in the tokens the hosted
    expert receives (the column sum of the deployed traffic matrix).
    """
    assignment = _assignment_of(plan)
    if len(assignment) != cluster.n:
        raise ValueError(f"assignment covers {len(assignment)} GPUs, cluster has {cluster.n}")
    scales = cluster.compute_scales
    deployed = deploy_to_gpus(profile.d_first, assignment)
    recv = deployed.col_sums()
    gate = np.full(cluster.n, profile.gate_work) / scales
    agg = np.full(cluster.n, profile.agg_work) / scales
    ffn = (profile.ffn_base_work + profile.ffn_work_per_token * recv) / scales
    return ComponentTimes(gate, ffn, agg)


@dataclass(frozen=True)
class ComponentSpan:
    start: float
    end: float

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class TimelineResult:
    """Evaluated timeline of one layer: component windows and derived metrics.

    ``spans`` maps component names to their (start, end) windows; names are
    G/N/F/C/A for exclusive runs and G_b/N_a/F_a/N_b/F_b/C_a/A_a/C_b/A_b/G_a
    for colocated runs. ``compute_time`` is each GPU's total busy compute
    time and ``utilization`` the mean ratio of busy time to inference time.
    """

    spans: Mapping[str, ComponentSpan]
    inference_time: float
    compute_time: np.ndarray
    per_gpu_utilization: np.ndarray
    utilization: float


def _finish(spans: dict[str, ComponentSpan], busy: np.ndarray, inference_time: float) -> TimelineResult:
    per_gpu = busy / inference_time if inference_time > 0 else np.zeros_like(busy)
    return TimelineResult(
        spans=spans,
        inference_time=inference_time,
        compute_time=busy,
        per_gpu_utilization=per_gpu,
        utilization=float(per_gpu.mean()),
    )


def simulate_exclusive(
    profile: LayerProfile,
    plan: DeploymentPlan | Sequence[int],
    cluster: ClusterSpec,
    schedule_fn: ScheduleFn | None = None,
) -> TimelineResult:
    """Layer time of a model running alone, one expert per GPU.

    ``schedule_fn`` overrides the communication scheduler (baselines pass
    their own); by default the optimal contention-free schedule is built for
    the first all-to-all and mirrored for the reversed second one. The five
    blocks run back to back behind synchronous barriers.
    """
    if isinstance(plan, DeploymentPlan) and plan.colocated:
        raise ValueError("exclusive simulation needs a single-model plan")
    assignment = _assignment_of(plan)
    comps = component_times(profile, assignment, cluster)
    deployed = deploy_to_gpus(profile.d_first, assignment)
    if schedule_fn is None:
        sched1 = build_schedule(deployed, cluster)
        sched2 = sched1.reversed()
    else:
        sched1 = schedule_fn(deployed, cluster)
        sched2 = schedule_fn(deployed.transpose(), cluster)
    return _barrier_timeline(comps, sched1.makespan, sched2.makespan)


def _barrier_timeline(comps: ComponentTimes, makespan_1: float, makespan_2: float) -> TimelineResult:
    gate_end = float(comps.gate.max())
    comm1_end = gate_end + makespan_1
    ffn_end = comm1_end + float(comps.ffn.max())
    comm2_end = ffn_end + makespan_2
    total = comm2_end + float(comps.agg.max())
    spans = {
        "G": ComponentSpan(0.0, gate_end),
        "N": ComponentSpan(gate_end, comm1_end),
        "F": ComponentSpan(comm1_end, ffn_end),
        "C": ComponentSpan(ffn_end, comm2_end),
        "A": ComponentSpan(comm2_end, total),
    }
    return _finish(spans, comps.busy(), total)


def _gated_window_end(
    first_send: np.ndarray,
    first_recv: np.ndarray,
    release: np.ndarray,
    second_send: np.ndarray,
    second_recv: np.ndarray,
) -> float:
    """End of the combined window of two overlapping all-to-alls.

    ``first_send``/``first_recv`` give each GPU's completion time of the
    first model's traffic alone; the second model's traffic becomes available
    per GPU at ``release``, so each link drains at ``max(first, release) +
    second`` on both its send and receive side.
    """
    send_done = np.maximum(first_send, release) + second_send
    recv_done = np.maximum(first_recv, release) + second_recv
    return float(max(send_done.max(), recv_done.max()))


def simulate_colocated(
    profile_a: LayerProfile,
    profile_b: LayerProfile,
    plan: DeploymentPlan,
    cluster: ClusterSpec,
) -> TimelineResult:
    """Layer time of two models colocated one expert each per GPU.

    Evaluates the component dependency recurrence: model b's gate runs while
    model a's first all-to-all is in flight, each model's FFN waits for its
    own data and for the other model's compute to clear the GPU, and the
    second all-to-alls drain after the combined first window. The layer ends
    when model a's gate (opening the next layer) completes.
    """
    if not plan.colocated:
        raise ValueError("colocated simulation needs assignments for both models")
    if profile_a.n != profile_b.n:
        raise ValueError(f"models disagree on n: {profile_a.n} vs {profile_b.n}")
    comps_a = component_times(profile_a, plan.assignment_a, cluster)
    comps_b = component_times(profile_b, plan.assignment_b, cluster)
    ta = time_normalize(deploy_to_gpus(profile_a.d_first, plan.assignment_a), cluster)
    tb = time_normalize(deploy_to_gpus(profile_b.d_first, plan.assignment_b), cluster)
    a_send, a_recv = ta.row_sums(), ta.col_sums()
    b_send, b_recv = tb.row_sums(), tb.col_sums()

    gate_a = float(comps_a.gate.max())
    gate_b = float(comps_b.gate.max())
    ffn_a = float(comps_a.ffn.max())
    ffn_b = float(comps_b.ffn.max())
    agg_a = float(comps_a.agg.max())
    agg_b = float(comps_b.agg.max())
    # The second all-to-all is the transpose of the first; time normalization
    # is symmetric in the endpoints, so its b_max matches the first one's.
    bmax_n_a = float(max(a_send.max(), a_recv.max()))
    bmax_c_a = bmax_n_a

    end_n_a = bmax_n_a
    end_n_b = _gated_window_end(a_send, a_recv, comps_b.gate, b_send, b_recv)
    end_f_a = max(gate_b, end_n_a) + ffn_a
    end_f_b = max(end_f_a, end_n_b) + ffn_b
    # The return all-to-alls form one combined window, like the dispatch pair:
    # model a's return traffic (the transpose, so send loads are a_recv) flows
    # once the dispatch window drains and its FFN is done; model b's joins
    # after its own FFN.
    c_start = max(end_n_b, end_f_a)
    end_c_a = c_start + bmax_c_a
    c_release = np.full(cluster.n, end_f_b)
    end_c_b = _gated_window_end(c_start + a_recv, c_start + a_send, c_release, b_recv, b_send)
    end_a_a = max(end_f_b, end_c_a) + agg_a
    end_a_b = max(end_a_a, end_c_b) + agg_b
    inference_time = end_a_b + gate_a

    spans = {
        "G_b": ComponentSpan(0.0, gate_b),
        "N_a": ComponentSpan(0.0, end_n_a),
        "F_a": ComponentSpan(max(gate_b, end_n_a), end_f_a),
        "N_b": ComponentSpan(gate_b, end_n_b),
        "F_b": ComponentSpan(max(end_f_a, end_n_b), end_f_b),
        "C_a": ComponentSpan(end_f_a, end_c_a),
        "A_a": ComponentSpan(max(end_f_b, end_c_a), end_a_a),
        "C_b": ComponentSpan(end_f_b, end_c_b),
        "A_b": ComponentSpan(max(end_a_a, end_c_b), end_a_b),
        "G_a": ComponentSpan(end_a_b, inference_time),
    }
    busy = comps_a.busy() + comps_b.busy()
    return _finish(spans, busy, inference_time)


def simulate_same_model(
    profile: LayerProfile, gpu_of_expert: Sequence[int], cluster: ClusterSpec
) -> TimelineResult:
    """Layer time with two experts of the *same* model per GPU.

    Both experts stay behind the model's synchronous all-to-all barriers, so
    there is no cross-model interleaving: the combined traffic of each GPU's
    expert pair flows in one window and the two FFNs run back to back.
    ``gpu_of_expert`` maps each of the n experts onto n/2 GPUs, two apiece.
    """
    n = profile.n
    mapping = tuple(int(g) for g in gpu_of_expert)
    if len(mapping) != n:
        raise ValueError(f"gpu_of_expert covers {len(mapping)} experts, model has {n}")
    m = cluster.n
    counts = np.bincount(mapping, minlength=m)
    if m * 2 != n or not np.all(counts == 2):
        raise ValueError("same-model colocation needs exactly two experts per GPU")
    idx = np.asarray(mapping)
    combined = np.zeros((m, m))
    np.add.at(combined, (idx[:, None], idx[None, :]), profile.d_first.entries)
    traffic = TrafficMatrix(combined)  # paired experts' mutual tokens stay local

    scales = cluster.compute_scales
    recv_tokens = np.bincount(idx, weights=profile.d_first.col_sums(), minlength=m)
    gate = np.full(m, profile.gate_work) / scales
    agg = np.full(m, profile.agg_work) / scales
    ffn = (2.0 * profile.ffn_base_work + profile.ffn_work_per_token * recv_tokens) / scales
    comps = ComponentTimes(gate, ffn, agg)
    sched = build_schedule(traffic, cluster)
    return _barrier_timeline(comps, sched.makespan, sched.reversed().makespan)


def gpu_utilization(result: TimelineResult) -> float:
    """Mean over GPUs of compute-busy time divided by inference time."""
    if result.inference_time <= 0:
        raise ValueError("inference time must be positive")
    return result.utilization


def inject_noise(
    base: LayerProfile, extra_layers: Sequence[LayerProfile], level: float
) -> LayerProfile:
    """Evaluation profile with traffic blurred by other layers' matrices.

    ``level`` 0/0.25/0.5/0.75 mixes in 0/1/2/3 of the extra layers: the
    evaluation matrix is the elementwise mean of the base matrix and the
    included ones. Work parameters stay those of the base layer, and any
    optimization is expected to have used the base profile only.
    """
    for k, candidate in enumerate(NOISE_LEVELS):
        if abs(level - candidate) <= 1e-12:
            count = k
            break
    else:
        raise ValueError(f"noise level must be one of {NOISE_LEVELS}, got {level}")
    if count > len(extra_layers):
        raise ValueError(f"noise level {level} needs {count} extra layers, got {len(extra_layers)}")
    if count == 0:
        return base
    stack = [base.d_first.entries] + [extra_layers[k].d_first.entries for k in range(count)]
    mean = np.mean(stack, axis=0)
    return LayerProfile(
        gate_work=base.gate_work,
        agg_work=base.agg_work,
        ffn_work_per_token=base.ffn_work_per_token,
        ffn_base_work=base.ffn_base_work,
        d_first=TrafficMatrix(mean),
    )


def colocated_pair_cost(
    profile_a: LayerProfile, expert_a: int, profile_b: LayerProfile, expert_b: int, gpu: GpuSpec
) -> float:
    """Single-GPU completion cost of hosting one expert of each model.

    The compute of both experts plus their send/receive token time at this
    GPU's own bandwidth; the global overlap with other GPUs is invisible to a
    per-edge weight, so this is the matching weight used when assigning
    expert pairs to heterogeneous GPUs.
    """
    recv_a = float(profile_a.d_first.col_sums()[expert_a])
    recv_b = float(profile_b.d_first.col_sums()[expert_b])
    send_a = float(profile_a.d_first.row_sums()[expert_a])
    send_b = float(profile_b.d_first.row_sums()[expert_b])
    work = (
        profile_a.gate_work
        + profile_a.agg_work
        + profile_a.ffn_base_work
        + profile_a.ffn_work_per_token * recv_a
        + profile_b.gate_work
        + profile_b.agg_work
        + profile_b.ffn_base_work
        + profile_b.ffn_work_per_token * recv_b
    )
    tokens = send_a + recv_a + send_b + recv_b
    return work / gpu.compute_scale + tokens / gpu.bandwidth


def batched_colocated_times(
    profile_a: LayerProfile,
    profile_b: LayerProfile,
    pairing: Sequence[int],
    assignments: np.ndarray,
    cluster: ClusterSpec,
) -> np.ndarray:
    """Colocated inference times of many GPU assignments of one pairing.

    ``assignments`` has shape (k, n): row r maps model-a expert e (and its
    partner ``pairing[e]``) to GPU ``assignments[r, e]``. Vectorized twin of
    ``simulate_colocated``; both must agree exactly.
    """
    perms = np.asarray(assignments, dtype=int)
    if perms.ndim != 2:
        raise ValueError("assignments must be a (k, n) array")
    k, n = perms.shape
    pair = np.asarray(tuple(int(v) for v in pairing), dtype=int)
    pair_inv = np.empty(n, dtype=int)
    pair_inv[pair] = np.arange(n)
    # assignment of model-b expert j = GPU of its partner a-expert
    perms_b = perms[:, pair_inv]

    bw = cluster.bandwidths
    scales = cluster.compute_scales
    min_bw = np.minimum.outer(bw, bw)
    rows = np.arange(k)[:, None]

    def deployed_loads(d: TrafficMatrix, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        inv = np.empty_like(p)
        inv[rows, p] = np.arange(n)[None, :]
        dep = d.entries[inv[:, :, None], inv[:, None, :]] / min_bw[None, :, :]
        return dep.sum(axis=2), dep.sum(axis=1)

    a_send, a_recv = deployed_loads(profile_a.d_first, perms)
    b_send, b_recv = deployed_loads(profile_b.d_first, perms_b)

    def scattered_ffn(profile: LayerProfile, p: np.ndarray) -> np.ndarray:
        work = profile.ffn_base_work + profile.ffn_work_per_token * profile.d_first.col_sums()
        out = np.empty((k, n))
        out[rows, p] = work[None, :] / scales[p]
        return out

    gate_a = float((profile_a.gate_work / scales).max())
    gate_b_per_gpu = profile_b.gate_work / scales
    gate_b = float(gate_b_per_gpu.max())
    agg_a = float((profile_a.agg_work / scales).max())
    agg_b = float((profile_b.agg_work / scales).max())
    ffn_a = scattered_ffn(profile_a, perms).max(axis=1)
    ffn_b = scattered_ffn(profile_b, perms_b).max(axis=1)

    bmax_n_a = np.maximum(a_send.max(axis=1), a_recv.max(axis=1))
    bmax_c_b = np.maximum(b_send.max(axis=1), b_recv.max(axis=1))
    release = gate_b_per_gpu[None, :]
    send_done = np.maximum(a_send, release) + b_send
    recv_done = np.maximum(a_recv, release) + b_recv
    end_n_b = np.maximum(send_done.max(axis=1), recv_done.max(axis=1))

    end_f_a = np.maximum(gate_b, bmax_n_a) + ffn_a
    end_f_b = np.maximum(end_f_a, end_n_b) + ffn_b
    end_c_a = np.maximum(end_n_b, end_f_a) + bmax_n_a
    end_a_a = np.maximum(end_f_b, end_c_a) + agg_a
    end_c_b = np.maximum(end_c_a, end_f_b) + bmax_c_b
    end_a_b = np.maximum(end_a_a, end_c_b) + agg_b
    return end_a_b + gate_a
