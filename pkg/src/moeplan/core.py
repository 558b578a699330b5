"""Domain types and traffic-matrix utilities shared by the planner modules.

All types are immutable after construction (frozen dataclasses wrapping
read-only numpy arrays), so they can be shared freely across threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "ValidationReport",
    "TrafficMatrix",
    "GpuSpec",
    "ClusterSpec",
    "LayerProfile",
    "ModelProfile",
    "DeploymentPlan",
    "LoadVector",
    "validate_traffic_matrix",
    "reverse_all_to_all",
    "row_col_sums",
    "deploy_to_gpus",
    "combine_colocated",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of a report-style check: empty ``issues`` means valid."""

    issues: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def __str__(self) -> str:
        return "ok" if self.ok else "; ".join(self.issues)


def validate_traffic_matrix(entries) -> ValidationReport:
    """Check a raw matrix against the traffic-matrix invariants.

    Reports every violation found: non-square shape, NaN entries, negative
    entries and nonzero diagonal entries. A passing report is exactly
    equivalent to the invariants holding.
    """
    a = np.asarray(entries, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return ValidationReport((f"not a square matrix: shape {a.shape}",))
    if a.shape[0] < 1:
        return ValidationReport(("matrix must be at least 1x1",))
    issues = []
    for i, j in zip(*np.nonzero(np.isnan(a))):
        issues.append(f"NaN entry at ({i}, {j})")
    with np.errstate(invalid="ignore"):
        for i, j in zip(*np.nonzero(a < 0)):
            issues.append(f"negative entry at ({i}, {j})")
    diag = np.diagonal(a)
    for (i,) in zip(*np.nonzero(diag != 0)):
        if not np.isnan(diag[i]):
            issues.append(f"nonzero diagonal at ({i}, {i})")
    return ValidationReport(tuple(issues))


@dataclass(frozen=True)
class TrafficMatrix:
    """Token volumes of one all-to-all: entry (i, j) is sent from i to j.

    Entries are non-negative reals and the diagonal is forced to zero at
    construction, since a transfer whose source and destination coincide
    never crosses the network.
    """

    entries: np.ndarray

    def __post_init__(self) -> None:
        a = np.array(self.entries, dtype=float, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"traffic matrix must be square and non-empty, got shape {a.shape}")
        if np.isnan(a).any():
            raise ValueError("traffic matrix contains NaN")
        if (a < 0).any():
            i, j = next(zip(*np.nonzero(a < 0)))
            raise ValueError(f"traffic matrix has negative entry at ({i}, {j})")
        np.fill_diagonal(a, 0.0)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @classmethod
    def zeros(cls, n: int) -> "TrafficMatrix":
        return cls(np.zeros((n, n)))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def total(self) -> float:
        return float(self.entries.sum())

    def row_sums(self) -> np.ndarray:
        return self.entries.sum(axis=1)

    def col_sums(self) -> np.ndarray:
        return self.entries.sum(axis=0)

    def transpose(self) -> "TrafficMatrix":
        return TrafficMatrix(self.entries.T)


def reverse_all_to_all(m: TrafficMatrix) -> TrafficMatrix:
    """Traffic matrix of the reversed all-to-all: every i->j becomes j->i.

    The second all-to-all of an MoE layer returns exactly the data volumes
    dispatched by the first one, so its matrix is the transpose.
    """
    return m.transpose()


def row_col_sums(m: TrafficMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Per-GPU send totals (row sums) and receive totals (column sums)."""
    return m.row_sums(), m.col_sums()


@dataclass(frozen=True)
class GpuSpec:
    """One GPU: link bandwidth (tokens/time) and relative compute speed."""

    bandwidth: float
    compute_scale: float = 1.0

    def __post_init__(self) -> None:
        if not (self.bandwidth > 0 and np.isfinite(self.bandwidth)):
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if not (self.compute_scale > 0 and np.isfinite(self.compute_scale)):
            raise ValueError(f"compute_scale must be positive, got {self.compute_scale}")


@dataclass(frozen=True)
class ClusterSpec:
    """An ordered set of GPUs behind a non-blocking (big-switch) network.

    A GPU with higher compute power never has lower bandwidth than a slower
    one; construction rejects clusters violating that order consistency.
    """

    gpus: tuple[GpuSpec, ...]

    def __post_init__(self) -> None:
        gpus = tuple(self.gpus)
        if not gpus:
            raise ValueError("cluster must contain at least one GPU")
        object.__setattr__(self, "gpus", gpus)
        for i, a in enumerate(gpus):
            for b in gpus[i + 1 :]:
                if (a.compute_scale - b.compute_scale) * (a.bandwidth - b.bandwidth) < 0:
                    raise ValueError(
                        "inconsistent cluster: a GPU with higher compute_scale "
                        "must not have lower bandwidth"
                    )

    @classmethod
    def uniform(cls, n: int, bandwidth: float = 1.0, compute_scale: float = 1.0) -> "ClusterSpec":
        return cls(tuple(GpuSpec(bandwidth, compute_scale) for _ in range(n)))

    @property
    def n(self) -> int:
        return len(self.gpus)

    @property
    def bandwidths(self) -> np.ndarray:
        return np.array([g.bandwidth for g in self.gpus])

    @property
    def compute_scales(self) -> np.ndarray:
        return np.array([g.compute_scale for g in self.gpus])

    @property
    def homogeneous(self) -> bool:
        b = self.bandwidths
        s = self.compute_scales
        return bool(np.all(b == b[0]) and np.all(s == s[0]))


@dataclass(frozen=True)
class LayerProfile:
    """Work and traffic of one MoE layer.

    ``gate_work`` and ``agg_work`` are identical across experts; FFN work is
    affine in the number of tokens an expert receives. Only the first
    all-to-all matrix is stored; the second is always its transpose.
    """

    gate_work: float
    agg_work: float
    ffn_work_per_token: float
    ffn_base_work: float
    d_first: TrafficMatrix

    def __post_init__(self) -> None:
        for name in ("gate_work", "agg_work", "ffn_work_per_token", "ffn_base_work"):
            v = getattr(self, name)
            if not (v >= 0 and np.isfinite(v)):
                raise ValueError(f"{name} must be a non-negative finite number, got {v}")

    @property
    def n(self) -> int:
        return self.d_first.n

    @property
    def d_second(self) -> TrafficMatrix:
        return self.d_first.transpose()


@dataclass(frozen=True)
class ModelProfile:
    """A named MoE model as a sequence of layer profiles with a common n."""

    model_id: str
    layers: tuple[LayerProfile, ...]

    def __post_init__(self) -> None:
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("model must have at least one layer")
        n = layers[0].n
        for k, layer in enumerate(layers):
            if layer.n != n:
                raise ValueError(f"layer {k} has n={layer.n}, expected {n}")
        object.__setattr__(self, "layers", layers)

    @property
    def n(self) -> int:
        return self.layers[0].n


def _check_permutation(perm: Sequence[int], what: str) -> tuple[int, ...]:
    p = tuple(int(v) for v in perm)
    if sorted(p) != list(range(len(p))):
        raise ValueError(f"{what} must be a permutation of 0..{len(p) - 1}, got {p}")
    return p


@dataclass(frozen=True)
class DeploymentPlan:
    """Expert-to-GPU assignment, optionally for a second colocated model.

    ``assignment_a[e]`` is the GPU hosting expert ``e`` of model a. When
    ``assignment_b`` is present every GPU hosts exactly one expert of each
    model, and ``pairing[i]`` gives the model-b expert sharing a GPU with
    model-a expert ``i``.
    """

    assignment_a: tuple[int, ...]
    assignment_b: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        a = _check_permutation(self.assignment_a, "assignment_a")
        object.__setattr__(self, "assignment_a", a)
        if self.assignment_b is not None:
            b = _check_permutation(self.assignment_b, "assignment_b")
            if len(b) != len(a):
                raise ValueError("assignment_b must cover the same GPUs as assignment_a")
            object.__setattr__(self, "assignment_b", b)

    @classmethod
    def identity(cls, n: int) -> "DeploymentPlan":
        return cls(tuple(range(n)))

    @classmethod
    def from_pairing(cls, pairing: Sequence[int]) -> "DeploymentPlan":
        """Colocated plan with model a on its identity assignment and model-b
        expert ``pairing[i]`` placed next to model-a expert ``i``."""
        p = _check_permutation(pairing, "pairing")
        b = [0] * len(p)
        for gpu, expert_b in enumerate(p):
            b[expert_b] = gpu
        return cls(tuple(range(len(p))), tuple(b))

    @property
    def n(self) -> int:
        return len(self.assignment_a)

    @property
    def colocated(self) -> bool:
        return self.assignment_b is not None

    @property
    def pairing(self) -> tuple[int, ...] | None:
        if self.assignment_b is None:
            return None
        expert_on_gpu_b = [0] * self.n
        for expert, gpu in enumerate(self.assignment_b):
            expert_on_gpu_b[gpu] = expert
        return tuple(expert_on_gpu_b[gpu] for gpu in self.assignment_a)


@dataclass(frozen=True)
class LoadVector:
    """Per-expert send and receive totals (token or time units)."""

    send: np.ndarray
    recv: np.ndarray

    def __post_init__(self) -> None:
        send = _readonly(self.send)
        recv = _readonly(self.recv)
        if send.ndim != 1 or send.shape != recv.shape:
            raise ValueError("send and recv must be 1-d arrays of equal length")
        if (send < 0).any() or (recv < 0).any():
            raise ValueError("load entries must be non-negative")
        object.__setattr__(self, "send", send)
        object.__setattr__(self, "recv", recv)

    @classmethod
    def from_traffic(cls, m: TrafficMatrix) -> "LoadVector":
        return cls(m.row_sums(), m.col_sums())

    @property
    def n(self) -> int:
        return self.send.shape[0]

    def symmetric(self, atol: float = 1e-9) -> bool:
        """True when every expert sends exactly as much as it receives."""
        return bool(np.all(np.abs(self.send - self.recv) <= atol))


def deploy_to_gpus(m: TrafficMatrix, assignment: Sequence[int]) -> TrafficMatrix:
    """Relabel expert indices to GPU indices under an assignment permutation."""
    perm = _check_permutation(assignment, "assignment")
    if len(perm) != m.n:
        raise ValueError(f"assignment covers {len(perm)} experts, matrix has {m.n}")
    out = np.zeros_like(m.entries)
    idx = np.asarray(perm)
    out[np.ix_(idx, idx)] = m.entries
    return TrafficMatrix(out)


def combine_colocated(d_a: TrafficMatrix, d_b: TrafficMatrix, plan: DeploymentPlan) -> TrafficMatrix:
    """Aggregate traffic matrix of two colocated models, in GPU indices.

    Both models' entries are relabeled through the plan and summed per GPU
    pair. Mass that lands on the diagonal (paired experts exchanging tokens
    on one GPU) is a zero-cost local transfer and is dropped; the caller can
    recover it as ``total(d_a) + total(d_b) - total(result)``.
    """
    if d_a.n != d_b.n:
        raise ValueError(f"dimension mismatch: {d_a.n} vs {d_b.n}")
    if not plan.colocated:
        raise ValueError("plan must contain assignments for both models")
    if plan.n != d_a.n:
        raise ValueError(f"plan covers {plan.n} experts, matrices have {d_a.n}")
    a = np.asarray(plan.assignment_a)
    b = np.asarray(plan.assignment_b)
    out = np.zeros_like(d_a.entries)
    out[np.ix_(a, a)] += d_a.entries
    out[np.ix_(b, b)] += d_b.entries
    return TrafficMatrix(out)
