"""Synthetic MoE workload generation with skewed token routing.

Stands in for production traces: expert popularity follows a Zipf-like law
with a per-layer random ranking, senders route tokens to experts in
proportion to popularity, and the work parameters put the layer in the
communication-heavy regime typical of MoE inference.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LayerProfile, ModelProfile, TrafficMatrix

__all__ = ["SyntheticWorkloadSpec", "generate_workload"]


@dataclass(frozen=True)
class SyntheticWorkloadSpec:
    """Parameters of a generated model profile.

    ``skew`` is the Zipf exponent over expert popularity (0 gives near-uniform
    traffic). The work fields default to a regime where the all-to-all time
    is comparable to or larger than the compute time.
    """

    n: int
    skew: float
    total_tokens: float
    layer_count: int = 1
    seed: int = 0
    gate_work_fraction: float = 0.05
    agg_work_fraction: float = 0.05
    ffn_work_per_token: float = 0.3
    ffn_base_work: float = 0.0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be at least 1, got {self.n}")
        if self.skew < 0:
            raise ValueError(f"skew must be non-negative, got {self.skew}")
        if not self.total_tokens > 0:
            raise ValueError(f"total_tokens must be positive, got {self.total_tokens}")
        if self.layer_count < 1:
            raise ValueError(f"layer_count must be at least 1, got {self.layer_count}")


def _popularity(n: int, skew: float, rng: np.random.Generator) -> np.ndarray:
    ranks = rng.permutation(n)
    weights = 1.0 / (ranks + 1.0) ** skew
    return weights / weights.sum()


def generate_workload(spec: SyntheticWorkloadSpec, model_id: str = "synthetic") -> ModelProfile:
    """Deterministic (per seed) model profile with Zipf-skewed traffic.

    Per layer: expert popularity gets a fresh random ranking, every sender
    dispatches a near-uniform share of the tokens (each GPU gates one shard
    of the batch), and destinations are split proportionally to the
    receiving experts' popularity. Column totals therefore carry the skew.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    layers = []
    for _ in range(spec.layer_count):
        pop = _popularity(n, spec.skew, rng)
        row_totals = rng.uniform(0.85, 1.15, size=n)
        row_totals *= spec.total_tokens / row_totals.sum()
        entries = np.zeros((n, n))
        for i in range(n):
            dest = pop * rng.uniform(0.9, 1.1, size=n)
            dest[i] = 0.0
            if dest.sum() <= 0:
                continue
            entries[i] = row_totals[i] * dest / dest.sum()
        per_gpu = spec.total_tokens / n
        layers.append(
            LayerProfile(
                gate_work=spec.gate_work_fraction * per_gpu,
                agg_work=spec.agg_work_fraction * per_gpu,
                ffn_work_per_token=spec.ffn_work_per_token,
                ffn_base_work=spec.ffn_base_work,
                d_first=TrafficMatrix(entries),
            )
        )
    return ModelProfile(model_id, tuple(layers))
