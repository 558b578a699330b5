"""Scenario orchestration: build plans and schedules per strategy, simulate,
and emit a CSV results table plus a JSON summary.

Outputs are fully deterministic for a given config (including the seed), and
repeated runs produce byte-identical files.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import baselines, placement, sim
from .commsched import CommSchedule, build_schedule
from .config import STRATEGIES, ExperimentConfig, serialize_config
from .core import ClusterSpec, DeploymentPlan, LayerProfile, TrafficMatrix, deploy_to_gpus
from .sim import TimelineResult

__all__ = ["CSV_COLUMNS", "ResultRow", "run_experiment", "write_csv", "write_summary", "run_and_write"]

CSV_COLUMNS = (
    "scenario",
    "strategy",
    "layer",
    "n",
    "noise_level",
    "seed",
    "comm_makespan_first",
    "comm_makespan_second",
    "inference_time",
    "utilization",
    "oracle_time",
    "oracle_ratio",
)

ORACLE_CAP = 6


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    strategy: str
    layer: int
    n: int
    noise_level: float
    seed: int
    comm_makespan_first: float
    comm_makespan_second: float
    inference_time: float
    utilization: float
    oracle_time: float | None = None
    oracle_ratio: float | None = None
    timeline: dict[str, tuple[float, float]] = field(default_factory=dict)

    def csv_values(self) -> list[str]:
        def fmt(v) -> str:
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v)
            return str(v)

        return [fmt(getattr(self, c)) for c in CSV_COLUMNS]


def _strategy_seed(seed: int, strategy: str) -> int:
    return seed * len(STRATEGIES) + STRATEGIES.index(strategy)


def _evaluation_layers(config: ExperimentConfig, model_idx: int) -> list[tuple[int, LayerProfile, LayerProfile]]:
    """(layer index, optimization profile, evaluation profile) triples.

    Without noise each layer is optimized and evaluated on itself. With noise
    the plan comes from layer 0 only, and evaluation blends the later layers'
    traffic into layer 0.
    """
    model = config.models[model_idx]
    if config.noise_level == 0:
        return [(k, layer, layer) for k, layer in enumerate(model.layers)]
    base = model.layers[0]
    noised = sim.inject_noise(base, model.layers[1:], config.noise_level)
    return [(0, base, noised)]


def _timeline_dict(result: TimelineResult, prefix: str = "") -> dict[str, tuple[float, float]]:
    return {prefix + name: (span.start, span.end) for name, span in result.spans.items()}


def _exclusive_schedule_fn(strategy: str, seed: int) -> Callable | None:
    if strategy == "rcs":
        return lambda d, cluster: baselines.schedule_rcs(d, cluster, seed)
    if strategy == "sjf":
        return baselines.schedule_sjf
    return None  # optimal


def _run_exclusive(config: ExperimentConfig, strategy: str) -> list[ResultRow]:
    cluster = config.cluster
    rows = []
    for layer_idx, opt_layer, eval_layer in _evaluation_layers(config, 0):
        if config.scenario == "exclusive-hetero":
            if strategy == "rga":
                plan = DeploymentPlan(
                    baselines.assign_rga(cluster.n, cluster, _strategy_seed(config.seed, strategy))
                )
            else:
                plan = placement.assign_exclusive_hetero(placement.expert_loads(opt_layer), cluster)
        else:
            plan = DeploymentPlan.identity(cluster.n)
        schedule_fn = _exclusive_schedule_fn(strategy, _strategy_seed(config.seed, strategy))
        result = sim.simulate_exclusive(eval_layer, plan, cluster, schedule_fn=schedule_fn)
        deployed = deploy_to_gpus(eval_layer.d_first, plan.assignment_a)
        if schedule_fn is None:
            first = build_schedule(deployed, cluster)
            second: CommSchedule = first.reversed()
        else:
            first = schedule_fn(deployed, cluster)
            second = schedule_fn(deployed.transpose(), cluster)
        rows.append(
            ResultRow(
                scenario=config.scenario,
                strategy=strategy,
                layer=layer_idx,
                n=cluster.n,
                noise_level=config.noise_level,
                seed=config.seed,
                comm_makespan_first=first.makespan,
                comm_makespan_second=second.makespan,
                inference_time=result.inference_time,
                utilization=result.utilization,
                timeline=_timeline_dict(result),
            )
        )
    return rows


def _coloc_plan(
    config: ExperimentConfig, strategy: str, layer_a: LayerProfile, layer_b: LayerProfile
) -> DeploymentPlan:
    cluster = config.cluster
    n = cluster.n
    seed = _strategy_seed(config.seed, strategy)
    if strategy == "aurora":
        if config.scenario == "coloc-hetero":
            return placement.colocate_heterogeneous(layer_a, layer_b, cluster)
        return placement.colocate_homogeneous(layer_a, layer_b)
    if strategy == "rec":
        pairing = baselines.colocate_rec(n, seed)
        if config.scenario == "coloc-hetero":
            assignment_a = baselines.assign_rga(n, cluster, seed + 1)
            assignment_b = [0] * n
            for i, g in enumerate(assignment_a):
                assignment_b[pairing[i]] = g
            return DeploymentPlan(tuple(assignment_a), tuple(assignment_b))
        return DeploymentPlan.from_pairing(pairing)
    if strategy == "rga":
        pairing = placement.colocate_homogeneous(layer_a, layer_b).pairing
        assert pairing is not None
        assignment_a = baselines.assign_rga(n, cluster, seed)
        assignment_b = [0] * n
        for i, g in enumerate(assignment_a):
            assignment_b[pairing[i]] = g
        return DeploymentPlan(tuple(assignment_a), tuple(assignment_b))
    raise ValueError(f"strategy {strategy!r} is not a colocation strategy")


def _combined_makespan(layer_a: LayerProfile, layer_b: LayerProfile, plan: DeploymentPlan, cluster: ClusterSpec) -> float:
    """b_max of the two models' summed first all-to-all in link-time units."""
    from .commsched import bmax_heterogeneous, time_normalize

    ta = time_normalize(deploy_to_gpus(layer_a.d_first, plan.assignment_a), cluster)
    tb = time_normalize(deploy_to_gpus(layer_b.d_first, plan.assignment_b), cluster)
    combined = ta.entries + tb.entries
    return float(max(combined.sum(axis=1).max(), combined.sum(axis=0).max()))


def _run_same_model(config: ExperimentConfig) -> list[ResultRow]:
    """Baseline that packs two experts of one model per GPU, per model.

    Model a occupies the first half of the cluster and model b the second
    half; the reported inference time is the slower model's, and utilization
    pools both halves' compute over that shared wall time.
    """
    cluster = config.cluster
    n = cluster.n
    half_a = ClusterSpec(cluster.gpus[: n // 2])
    half_b = ClusterSpec(cluster.gpus[n // 2 :])
    rows = []
    per_model = [
        _evaluation_layers(config, 0),
        _evaluation_layers(config, 1),
    ]
    for (layer_idx, opt_a, eval_a), (_, opt_b, eval_b) in zip(*per_model):
        results = []
        makespans = []
        for opt_layer, eval_layer, half in ((opt_a, eval_a, half_a), (opt_b, eval_b, half_b)):
            pairs = baselines.colocate_same_model(opt_layer)
            gpu_of_expert = [0] * opt_layer.n
            for gpu, (hi, lo) in enumerate(pairs):
                gpu_of_expert[hi] = gpu
                gpu_of_expert[lo] = gpu
            result = sim.simulate_same_model(eval_layer, gpu_of_expert, half)
            results.append(result)
            idx = np.asarray(gpu_of_expert)
            combined = np.zeros((half.n, half.n))
            np.add.at(combined, (idx[:, None], idx[None, :]), eval_layer.d_first.entries)
            makespans.append(build_schedule(TrafficMatrix(combined), half).makespan)
        wall = max(r.inference_time for r in results)
        busy = float(sum(r.compute_time.sum() for r in results))
        utilization = busy / (n * wall) if wall > 0 else 0.0
        timeline = {}
        for tag, result in zip(("a:", "b:"), results):
            timeline.update(_timeline_dict(result, tag))
        rows.append(
            ResultRow(
                scenario=config.scenario,
                strategy="same-model",
                layer=layer_idx,
                n=n,
                noise_level=config.noise_level,
                seed=config.seed,
                comm_makespan_first=max(makespans),
                comm_makespan_second=max(makespans),
                inference_time=wall,
                utilization=utilization,
                timeline=timeline,
            )
        )
    return rows


def _run_colocated(config: ExperimentConfig, strategy: str, oracle_cap: int) -> list[ResultRow]:
    if strategy == "same-model":
        rows = _run_same_model(config)
    else:
        cluster = config.cluster
        rows = []
        layers = list(zip(_evaluation_layers(config, 0), _evaluation_layers(config, 1)))
        for (layer_idx, opt_a, eval_a), (_, opt_b, eval_b) in layers:
            plan = _coloc_plan(config, strategy, opt_a, opt_b)
            result = sim.simulate_colocated(eval_a, eval_b, plan, cluster)
            makespan = _combined_makespan(eval_a, eval_b, plan, cluster)
            rows.append(
                ResultRow(
                    scenario=config.scenario,
                    strategy=strategy,
                    layer=layer_idx,
                    n=cluster.n,
                    noise_level=config.noise_level,
                    seed=config.seed,
                    comm_makespan_first=makespan,
                    comm_makespan_second=makespan,
                    inference_time=result.inference_time,
                    utilization=result.utilization,
                    timeline=_timeline_dict(result),
                )
            )
    return rows


def _attach_oracle(config: ExperimentConfig, rows: list[ResultRow], oracle_cap: int) -> list[ResultRow]:
    if config.scenario != "coloc-hetero" or config.cluster.n > oracle_cap:
        return rows
    oracle_times: dict[int, float] = {}
    for layer_idx, opt_a, eval_a in _evaluation_layers(config, 0):
        eval_b = dict((k, e) for k, _, e in _evaluation_layers(config, 1))[layer_idx]
        _, oracle_times[layer_idx] = placement.brute_force_colocation_hetero(
            eval_a, eval_b, config.cluster, max_n=oracle_cap
        )
    out = []
    for row in rows:
        oracle = oracle_times.get(row.layer)
        if oracle is None or oracle <= 0:
            out.append(row)
            continue
        out.append(
            ResultRow(
                **{
                    **row.__dict__,
                    "oracle_time": oracle,
                    "oracle_ratio": row.inference_time / oracle,
                }
            )
        )
    return out


def run_experiment(config: ExperimentConfig, oracle_cap: int = ORACLE_CAP) -> tuple[list[ResultRow], list[dict]]:
    """Evaluate every requested strategy; returns (rows, error records).

    Rows are sorted by (scenario, strategy, layer). A strategy that raises is
    recorded as an error and the remaining strategies still run.
    """
    rows: list[ResultRow] = []
    errors: list[dict] = []
    for strategy in config.strategies:
        try:
            if config.scenario.startswith("exclusive"):
                rows.extend(_run_exclusive(config, strategy))
            else:
                rows.extend(_run_colocated(config, strategy, oracle_cap))
        except Exception as exc:  # noqa: BLE001 - error records, not crashes
            errors.append({"strategy": strategy, "error": f"{type(exc).__name__}: {exc}"})
    rows = _attach_oracle(config, rows, oracle_cap)
    rows.sort(key=lambda r: (r.scenario, r.strategy, r.layer))
    return rows, errors


def csv_text(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.csv_values())
    return buf.getvalue()


def write_csv(rows: list[ResultRow], path: str | Path) -> None:
    Path(path).write_text(csv_text(rows))


def write_summary(
    config: ExperimentConfig, rows: list[ResultRow], errors: list[dict], path: str | Path
) -> None:
    payload = {
        "config": serialize_config(config),
        "columns": list(CSV_COLUMNS),
        "rows": [
            {**{c: getattr(r, c) for c in CSV_COLUMNS}, "timeline": r.timeline} for r in rows
        ],
        "errors": errors,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def run_and_write(config: ExperimentConfig, out_dir: str | Path, oracle_cap: int = ORACLE_CAP) -> int:
    """Run the experiment and write results.csv and summary.json.

    Returns a process exit code: 0 on success, 1 when any error record was
    produced (partial results are still written).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, errors = run_experiment(config, oracle_cap)
    write_csv(rows, out / "results.csv")
    write_summary(config, rows, errors, out / "summary.json")
    return 1 if errors else 0
