"""Experiment configuration: JSON schema, validation, and round-tripping.

Error messages carry the dotted path of the offending field (for example
``cluster.gpus[2].bandwidth``) so a bad file is actionable without reading
the schema docs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .core import ClusterSpec, GpuSpec, LayerProfile, ModelProfile, TrafficMatrix
from .sim import NOISE_LEVELS

__all__ = [
    "SCENARIOS",
    "STRATEGIES",
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "serialize_config",
]

SCENARIOS = ("exclusive-homo", "exclusive-hetero", "coloc-homo", "coloc-hetero")
STRATEGIES = ("aurora", "rcs", "sjf", "rec", "rga", "same-model")

# Which strategies make sense where: scheduling baselines compare in the
# exclusive scenarios, placement/pairing baselines in their own dimensions.
SCENARIO_STRATEGIES = {
    "exclusive-homo": ("aurora", "rcs", "sjf"),
    "exclusive-hetero": ("aurora", "rcs", "sjf", "rga"),
    "coloc-homo": ("aurora", "rec", "same-model"),
    "coloc-hetero": ("aurora", "rec", "rga", "same-model"),
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field path."""


def _fail(path: str, message: str) -> None:
    raise ConfigError(f"{path}: {message}")


def _get(obj: dict, key: str, path: str, kind=None, required: bool = True, default=None):
    if key not in obj:
        if required:
            _fail(f"{path}.{key}" if path else key, "missing required field")
        return default
    value = obj[key]
    if kind is not None and not isinstance(value, kind):
        names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        _fail(f"{path}.{key}" if path else key, f"expected {names}, got {type(value).__name__}")
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully validated experiment: scenario, cluster, models, and knobs."""

    scenario: str
    cluster: ClusterSpec
    models: tuple[ModelProfile, ...]
    strategies: tuple[str, ...]
    noise_level: float = 0.0
    seed: int = 0
    output: str | None = None

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            _fail("scenario", f"must be one of {SCENARIOS}, got {self.scenario!r}")
        expected = 2 if self.scenario.startswith("coloc") else 1
        if len(self.models) != expected:
            _fail("models", f"scenario {self.scenario!r} requires exactly {expected} model(s)")
        for k, model in enumerate(self.models):
            if model.n != self.cluster.n:
                _fail(f"models[{k}]", f"model has {model.n} experts, cluster has {self.cluster.n} GPUs")
        if not self.strategies:
            _fail("strategies", "at least one strategy is required")
        allowed = SCENARIO_STRATEGIES[self.scenario]
        for k, s in enumerate(self.strategies):
            if s not in STRATEGIES:
                _fail(f"strategies[{k}]", f"unknown strategy {s!r}; known: {STRATEGIES}")
            if s not in allowed:
                _fail(f"strategies[{k}]", f"{s!r} does not apply to scenario {self.scenario!r}")
        if "same-model" in self.strategies and self.cluster.n % 2:
            _fail("strategies", "same-model colocation needs an even expert count")
        if not any(abs(self.noise_level - lv) <= 1e-12 for lv in NOISE_LEVELS):
            _fail("noise_level", f"must be one of {NOISE_LEVELS}, got {self.noise_level}")
        if self.noise_level > 0:
            needed = 1 + round(self.noise_level * 4)
            for k, model in enumerate(self.models):
                if len(model.layers) < needed:
                    _fail(
                        f"models[{k}].layers",
                        f"noise level {self.noise_level} needs at least {needed} layers",
                    )


def _parse_gpu(obj: Any, path: str) -> GpuSpec:
    if not isinstance(obj, dict):
        _fail(path, "expected an object with bandwidth/compute_scale")
    bandwidth = _get(obj, "bandwidth", path, (int, float))
    scale = _get(obj, "compute_scale", path, (int, float), required=False, default=1.0)
    if not bandwidth > 0:
        _fail(f"{path}.bandwidth", f"must be > 0, got {bandwidth}")
    if not scale > 0:
        _fail(f"{path}.compute_scale", f"must be > 0, got {scale}")
    return GpuSpec(float(bandwidth), float(scale))


def _parse_layer(obj: Any, path: str) -> LayerProfile:
    if not isinstance(obj, dict):
        _fail(path, "expected an object")
    traffic = _get(obj, "traffic", path, list)
    try:
        matrix = TrafficMatrix(traffic)
    except ValueError as exc:
        _fail(f"{path}.traffic", str(exc))
    values = {}
    for name in ("gate_work", "agg_work", "ffn_work_per_token", "ffn_base_work"):
        v = _get(obj, name, path, (int, float), required=False, default=0.0)
        if v < 0:
            _fail(f"{path}.{name}", f"must be >= 0, got {v}")
        values[name] = float(v)
    return LayerProfile(d_first=matrix, **values)


def _parse_model(obj: Any, path: str, index: int) -> ModelProfile:
    if not isinstance(obj, dict):
        _fail(path, "expected an object")
    model_id = _get(obj, "model_id", path, str, required=False, default=f"model-{index}")
    layers_raw = _get(obj, "layers", path, list)
    if not layers_raw:
        _fail(f"{path}.layers", "at least one layer is required")
    layers = tuple(_parse_layer(layer, f"{path}.layers[{k}]") for k, layer in enumerate(layers_raw))
    try:
        return ModelProfile(model_id, layers)
    except ValueError as exc:
        _fail(f"{path}.layers", str(exc))
    raise AssertionError("unreachable")


def parse_config(data: Any) -> ExperimentConfig:
    """Validate a decoded JSON object into an ExperimentConfig."""
    if not isinstance(data, dict):
        raise ConfigError("top level: expected a JSON object")
    scenario = _get(data, "scenario", "", str)
    cluster_obj = _get(data, "cluster", "", dict)
    gpus_raw = _get(cluster_obj, "gpus", "cluster", list)
    if not gpus_raw:
        _fail("cluster.gpus", "at least one GPU is required")
    gpus = tuple(_parse_gpu(g, f"cluster.gpus[{k}]") for k, g in enumerate(gpus_raw))
    try:
        cluster = ClusterSpec(gpus)
    except ValueError as exc:
        _fail("cluster.gpus", str(exc))
    models_raw = _get(data, "models", "", list)
    models = tuple(_parse_model(m, f"models[{k}]", k) for k, m in enumerate(models_raw))
    strategies_raw = _get(data, "strategies", "", list, required=False, default=["aurora"])
    strategies = tuple(str(s) for s in strategies_raw)
    noise = _get(data, "noise_level", "", (int, float), required=False, default=0.0)
    seed = _get(data, "seed", "", int, required=False, default=0)
    output = _get(data, "output", "", str, required=False, default=None)
    return ExperimentConfig(
        scenario=scenario,
        cluster=cluster,
        models=models,
        strategies=strategies,
        noise_level=float(noise),
        seed=int(seed),
        output=output,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a JSON config file."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return parse_config(data)


def serialize_config(config: ExperimentConfig) -> dict:
    """Canonical JSON-compatible form; parse(serialize(c)) == c."""
    out: dict[str, Any] = {
        "scenario": config.scenario,
        "seed": config.seed,
        "noise_level": config.noise_level,
        "strategies": list(config.strategies),
        "cluster": {
            "gpus": [
                {"bandwidth": g.bandwidth, "compute_scale": g.compute_scale}
                for g in config.cluster.gpus
            ]
        },
        "models": [
            {
                "model_id": m.model_id,
                "layers": [
                    {
                        "gate_work": layer.gate_work,
                        "agg_work": layer.agg_work,
                        "ffn_work_per_token": layer.ffn_work_per_token,
                        "ffn_base_work": layer.ffn_base_work,
                        "traffic": layer.d_first.entries.tolist(),
                    }
                    for layer in m.layers
                ],
            }
            for m in config.models
        ],
    }
    if config.output is not None:
        out["output"] = config.output
    return out
