"""Command-line front end.

Subcommands: ``schedule`` (emit a communication schedule for the configured
traffic), ``place`` (emit a deployment plan), ``simulate`` (evaluate one
scenario), ``experiment`` (full sweep to CSV + JSON), and ``oracle`` (brute
force the colocated-heterogeneous optimum). Every subcommand reads the same
JSON config; ``--seed``, ``--noise``, ``--scenario`` and ``--strategies``
override the corresponding config fields.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import baselines, placement, sim
from .commsched import build_schedule, validate_schedule
from .config import ConfigError, ExperimentConfig, load_config
from .core import deploy_to_gpus
from .experiment import ORACLE_CAP, run_and_write, run_experiment
from .placement import brute_force_colocation_hetero


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moeplan",
        description="Deployment planning and analytical timing for MoE inference",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("schedule", "emit a contention-free all-to-all schedule"),
        ("place", "emit a deployment plan for the configured scenario"),
        ("simulate", "evaluate one scenario and print per-strategy results"),
        ("experiment", "run the full sweep and write results.csv + summary.json"),
        ("oracle", "brute-force the colocated-heterogeneous optimum"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the JSON config file")
        p.add_argument("--out", help="output file (or directory for 'experiment')")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--scenario", help="override the config scenario")
        p.add_argument("--noise", type=float, help="override the config noise level")
        p.add_argument(
            "--strategies", help="override the config strategies (comma-separated)"
        )
    return parser


def _load(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.scenario is not None:
        overrides["scenario"] = args.scenario
    if args.noise is not None:
        overrides["noise_level"] = args.noise
    if args.strategies is not None:
        overrides["strategies"] = tuple(s.strip() for s in args.strategies.split(",") if s.strip())
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _schedule_payload(config: ExperimentConfig) -> dict:
    layer = config.models[0].layers[0]
    cluster = config.cluster
    payloads = {}
    for strategy in config.strategies:
        if strategy == "rcs":
            sched = baselines.schedule_rcs(layer.d_first, cluster, config.seed)
        elif strategy == "sjf":
            sched = baselines.schedule_sjf(layer.d_first, cluster)
        elif strategy == "aurora":
            sched = build_schedule(layer.d_first, cluster)
        else:
            raise ConfigError(f"strategies[{config.strategies.index(strategy)}]: "
                              f"{strategy!r} is not a scheduling strategy")
        report = validate_schedule(sched, layer.d_first, cluster)
        payloads[strategy] = {
            "makespan": sched.makespan,
            "phases": [
                {"duration": p.duration, "transfers": [list(t) for t in p.transfers]}
                for p in sched.phases
            ],
            "contention_free": report.contention_ok,
            "complete": report.conservation_ok,
            "optimal": report.optimal,
        }
    return {"n": cluster.n, "schedules": payloads}


def _place_payload(config: ExperimentConfig) -> dict:
    cluster = config.cluster
    layer_a = config.models[0].layers[0]
    if config.scenario == "exclusive-homo":
        plan = placement.assign_exclusive_hetero(placement.expert_loads(layer_a), cluster)
    elif config.scenario == "exclusive-hetero":
        plan = placement.assign_exclusive_hetero(placement.expert_loads(layer_a), cluster)
    elif config.scenario == "coloc-homo":
        plan = placement.colocate_homogeneous(layer_a, config.models[1].layers[0])
    else:
        plan = placement.colocate_heterogeneous(layer_a, config.models[1].layers[0], cluster)
    payload = {"scenario": config.scenario, "assignment_a": list(plan.assignment_a)}
    if plan.colocated:
        payload["assignment_b"] = list(plan.assignment_b or ())
        payload["pairing"] = list(plan.pairing or ())
    return payload


def _simulate_payload(config: ExperimentConfig) -> dict:
    rows, errors = run_experiment(config)
    return {
        "scenario": config.scenario,
        "rows": [
            {
                "strategy": r.strategy,
                "layer": r.layer,
                "inference_time": r.inference_time,
                "utilization": r.utilization,
                "comm_makespan_first": r.comm_makespan_first,
                "comm_makespan_second": r.comm_makespan_second,
                "timeline": r.timeline,
            }
            for r in rows
        ],
        "errors": errors,
    }


def _oracle_payload(config: ExperimentConfig) -> dict:
    if config.scenario != "coloc-hetero":
        raise ConfigError("scenario: the oracle applies to 'coloc-hetero' only")
    layer_a = config.models[0].layers[0]
    layer_b = config.models[1].layers[0]
    plan, best = brute_force_colocation_hetero(layer_a, layer_b, config.cluster, max_n=ORACLE_CAP)
    heuristic = placement.colocate_heterogeneous(layer_a, layer_b, config.cluster)
    heuristic_time = sim.simulate_colocated(layer_a, layer_b, heuristic, config.cluster).inference_time
    return {
        "oracle_time": best,
        "oracle_assignment_a": list(plan.assignment_a),
        "oracle_assignment_b": list(plan.assignment_b or ()),
        "heuristic_time": heuristic_time,
        "heuristic_ratio": heuristic_time / best if best > 0 else None,
    }


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _load(args)
        if args.command == "experiment":
            out_dir = args.out or config.output or "results"
            code = run_and_write(config, out_dir)
            if code:
                sys.stderr.write("experiment finished with error records; see summary.json\n")
            return code
        if args.command == "schedule":
            _emit(_schedule_payload(config), args.out)
        elif args.command == "place":
            _emit(_place_payload(config), args.out)
        elif args.command == "simulate":
            payload = _simulate_payload(config)
            _emit(payload, args.out)
            if payload["errors"]:
                return 1
        elif args.command == "oracle":
            _emit(_oracle_payload(config), args.out)
        return 0
    except (ConfigError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
