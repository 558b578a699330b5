"""Minimum-time all-to-all scheduling on a big-switch network.

The minimum completion time of an all-to-all is the largest per-GPU send or
receive time (``b_max``), and a contention-free transmission schedule
achieving it always exists. Construction: normalize traffic to link-time
units, add artificial traffic until every GPU sends and receives exactly
``b_max`` (always possible with non-negative additions), peel the balanced
matrix into perfect matchings, then strip the artificial transfers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ClusterSpec, TrafficMatrix
from .matching import perfect_matching

__all__ = [
    "TIME_ATOL",
    "TimeMatrix",
    "AugmentedMatrix",
    "Phase",
    "CommSchedule",
    "ScheduleReport",
    "DecompositionError",
    "bmax_homogeneous",
    "time_normalize",
    "bmax_heterogeneous",
    "augment",
    "decompose",
    "build_schedule",
    "validate_schedule",
]

# Absolute tolerance for schedule/time comparisons. Calibrated for inputs
# whose b_max is of order 1..1e6; rescale inputs or pass an explicit atol to
# validate_schedule outside that range.
TIME_ATOL = 1e-9


def _snap_eps(b_max: float) -> float:
    # Threshold below which a residual duration is floating-point dust.
    return 1e-12 * max(1.0, b_max)


@dataclass(frozen=True)
class TimeMatrix:
    """Per-pair transfer durations: entry (i, j) is the link time of d_ij."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        a = np.array(self.entries, dtype=float, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"time matrix must be square and non-empty, got shape {a.shape}")
        if np.isnan(a).any() or (a < 0).any():
            raise ValueError("time matrix entries must be non-negative")
        np.fill_diagonal(a, 0.0)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def row_sums(self) -> np.ndarray:
        return self.entries.sum(axis=1)

    def col_sums(self) -> np.ndarray:
        return self.entries.sum(axis=0)

    def transpose(self) -> "TimeMatrix":
        return TimeMatrix(self.entries.T)


@dataclass(frozen=True)
class AugmentedMatrix:
    """A time matrix padded with artificial traffic to perfect balance.

    ``d_prime = base + x`` elementwise with ``x >= 0``, and every row and
    column of ``d_prime`` sums to ``b_max``.
    """

    d_prime: np.ndarray
    x: np.ndarray
    b_max: float

    def __post_init__(self) -> None:
        d = np.array(self.d_prime, dtype=float, copy=True)
        x = np.array(self.x, dtype=float, copy=True)
        if d.shape != x.shape or d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("d_prime and x must be square matrices of equal shape")
        tol = 1e-9 * max(1.0, self.b_max)
        if (x < -tol).any():
            raise ValueError("artificial traffic must be non-negative")
        if (np.abs(d.sum(axis=1) - self.b_max) > tol).any() or (
            np.abs(d.sum(axis=0) - self.b_max) > tol
        ).any():
            raise ValueError("every row and column of d_prime must sum to b_max")
        d.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "d_prime", d)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.d_prime.shape[0]


@dataclass(frozen=True)
class Phase:
    """Simultaneous transfers with distinct senders and distinct receivers."""

    transfers: tuple[tuple[int, int], ...]
    duration: float

    def senders(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.transfers)

    def receivers(self) -> tuple[int, ...]:
        return tuple(j for _, j in self.transfers)


@dataclass(frozen=True)
class CommSchedule:
    """Ordered phases of contention-free point-to-point transfers."""

    n: int
    phases: tuple[Phase, ...]
    makespan: float

    def per_pair_totals(self) -> np.ndarray:
        """Delivered link-time per (sender, receiver) pair."""
        out = np.zeros((self.n, self.n))
        for phase in self.phases:
            for i, j in phase.transfers:
                out[i, j] += phase.duration
        return out

    def completion_times(self) -> np.ndarray:
        """Per-GPU time at which its last send or receive finishes."""
        done = np.zeros(self.n)
        now = 0.0
        for phase in self.phases:
            now += phase.duration
            for i, j in phase.transfers:
                done[i] = now
                done[j] = now
        return done

    def reversed(self) -> "CommSchedule":
        """The same schedule with every transfer direction flipped.

        Valid for the transposed traffic matrix: contention-freedom and
        per-pair totals carry over with senders and receivers swapped.
        """
        phases = tuple(
            Phase(tuple(sorted((j, i) for i, j in p.transfers)), p.duration) for p in self.phases
        )
        return CommSchedule(self.n, phases, self.makespan)


class DecompositionError(RuntimeError):
    """No perfect matching on the positive support: upstream invariants broke."""


def bmax_homogeneous(d: TrafficMatrix, bandwidth: float) -> float:
    """Minimum all-to-all time on equal-bandwidth GPUs.

    The largest per-GPU send or receive volume divided by the bandwidth; no
    valid schedule can beat it and a contention-free one achieves it.
    """
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    rows, cols = d.row_sums(), d.col_sums()
    return float(max(rows.max(), cols.max()) / bandwidth)


def time_normalize(d: TrafficMatrix, cluster: ClusterSpec) -> TimeMatrix:
    """Convert token volumes to transfer durations.

    A transfer i->j moves at the slower of the two endpoint links, so entry
    (i, j) becomes ``d_ij / min(B_i, B_j)``.
    """
    if cluster.n != d.n:
        raise ValueError(f"cluster has {cluster.n} GPUs, matrix has {d.n}")
    b = cluster.bandwidths
    return TimeMatrix(d.entries / np.minimum.outer(b, b))


def bmax_heterogeneous(t: TimeMatrix) -> float:
    """Minimum all-to-all time: the largest per-GPU send or receive time."""
    return float(max(t.row_sums().max(), t.col_sums().max()))


def augment(t: TimeMatrix) -> AugmentedMatrix:
    """Pad a time matrix so every row and column sums to b_max.

    The padding is built by a greedy transportation fill instead of solving
    the underlying linear system: walk the off-diagonal cells in index order
    assigning ``min(remaining row deficit, remaining column deficit)``. After
    that pass, any leftover deficit is concentrated on a single index with
    equal row and column remainder, which goes on the diagonal (artificial
    self-traffic is discarded after decomposition, so this is harmless).
    Total row deficits equal total column deficits, so the fill always
    succeeds with non-negative entries.
    """
    n = t.n
    b_max = bmax_heterogeneous(t)
    row_rem = b_max - t.row_sums()
    col_rem = b_max - t.col_sums()
    x = np.zeros((n, n))
    for i in range(n):
        if row_rem[i] <= 0:
            continue
        for j in range(n):
            if i == j or col_rem[j] <= 0:
                continue
            fill = min(row_rem[i], col_rem[j])
            x[i, j] = fill
            row_rem[i] -= fill
            col_rem[j] -= fill
            if row_rem[i] <= 0:
                break
    # Leftover deficits can only co-occur at one shared index; dump on the
    # diagonal. Clamp away negative floating-point dust.
    eps = _snap_eps(b_max)
    for i in range(n):
        if row_rem[i] > eps:
            x[i, i] = row_rem[i]
    x[x < 0] = 0.0
    return AugmentedMatrix(t.entries + x, x, b_max)


def decompose(a: AugmentedMatrix) -> list[tuple[tuple[int, ...], float]]:
    """Peel a balanced matrix into at most n^2 - 2n + 2 full permutations.

    Each phase selects a perfect matching on the positive support (one always
    exists while the matrix is balanced and nonzero) and subtracts the
    smallest selected entry, zeroing at least one cell. Matchings prefer
    edges still carrying original (non-artificial) traffic, so real demand
    drains as early as possible.

    Returns ``(perm, duration)`` pairs where ``perm[i]`` is the receiver of
    sender ``i``.
    """
    n = a.n
    remaining = np.array(a.d_prime, copy=True)
    real = np.clip(a.d_prime - a.x, 0.0, None)
    eps = _snap_eps(a.b_max)
    max_phases = n * n - 2 * n + 2
    phases: list[tuple[tuple[int, ...], float]] = []
    while True:
        remaining[remaining <= eps] = 0.0
        np.minimum(real, remaining, out=real)
        if not remaining.any():
            break
        if len(phases) >= max_phases:
            raise DecompositionError(
                f"decomposition exceeded {max_phases} phases for n={n}; "
                "input is not a valid augmented matrix"
            )
        support = [list(np.nonzero(remaining[i] > 0)[0]) for i in range(n)]
        preferred = [list(np.nonzero(real[i] > eps)[0]) for i in range(n)]
        perm = perfect_matching(support, preferred)
        if perm is None:
            raise DecompositionError(
                "no perfect matching on the positive support; row/column sums "
                "of the input are not balanced"
            )
        idx = (np.arange(n), np.asarray(perm))
        duration = float(remaining[idx].min())
        remaining[idx] -= duration
        real[idx] = np.clip(real[idx] - duration, 0.0, None)
        phases.append((tuple(int(v) for v in perm), duration))
    return phases


def _coalesce(phases: list[Phase]) -> tuple[Phase, ...]:
    out: list[Phase] = []
    for phase in phases:
        if out and out[-1].transfers == phase.transfers:
            out[-1] = Phase(phase.transfers, out[-1].duration + phase.duration)
        else:
            out.append(phase)
    return tuple(out)


def build_schedule(d: TrafficMatrix, cluster: ClusterSpec) -> CommSchedule:
    """Contention-free schedule for one all-to-all, with optimal makespan.

    Pipeline: time-normalize, augment to balance, decompose into permutation
    phases, then strip artificial transfers. A transfer whose real demand
    runs out mid-phase splits the phase, so delivered per-pair durations
    match the normalized demand exactly and phases may be partial matchings.
    """
    t = time_normalize(d, cluster)
    b_max = bmax_heterogeneous(t)
    n = t.n
    if b_max <= 0:
        return CommSchedule(n, (), 0.0)
    eps = _snap_eps(b_max)
    raw = decompose(augment(t))
    remaining = np.array(t.entries, copy=True)
    out: list[Phase] = []
    for perm, duration in raw:
        left = duration
        while left > eps:
            active = tuple((i, int(perm[i])) for i in range(n) if remaining[i, perm[i]] > eps)
            if not active:
                # Purely artificial tail: keep the gap so later phases stay
                # aligned with the augmented timing.
                out.append(Phase((), left))
                break
            step = min(left, min(remaining[i, j] for i, j in active))
            out.append(Phase(active, step))
            for i, j in active:
                remaining[i, j] -= step
            left -= step
    phases = _coalesce([p for p in out if p.duration > eps])
    makespan = math.fsum(p.duration for p in phases)
    return CommSchedule(n, phases, makespan)


@dataclass(frozen=True)
class ScheduleReport:
    """Violation lists from checking a schedule against its demand matrix."""

    contention: tuple[str, ...] = ()
    conservation: tuple[str, ...] = ()
    optimality: tuple[str, ...] = ()

    @property
    def contention_ok(self) -> bool:
        return not self.contention

    @property
    def conservation_ok(self) -> bool:
        return not self.conservation

    @property
    def optimal(self) -> bool:
        return not self.optimality

    @property
    def ok(self) -> bool:
        return self.contention_ok and self.conservation_ok and self.optimal

    def issues(self) -> tuple[str, ...]:
        return self.contention + self.conservation + self.optimality


def validate_schedule(
    s: CommSchedule, d: TrafficMatrix, cluster: ClusterSpec, atol: float = TIME_ATOL
) -> ScheduleReport:
    """Check a schedule for contention, completeness, and optimality.

    Contention: within each phase no sender or receiver appears twice and no
    transfer is a self-loop. Conservation: delivered per-pair durations equal
    the time-normalized demand within ``atol``. Optimality: the makespan
    equals the b_max lower bound within ``atol`` (baseline schedules are
    expected to fail only this part).
    """
    contention: list[str] = []
    conservation: list[str] = []
    optimality: list[str] = []
    for k, phase in enumerate(s.phases):
        if phase.duration < 0:
            contention.append(f"phase {k}: negative duration {phase.duration}")
        senders = phase.senders()
        receivers = phase.receivers()
        if len(set(senders)) != len(senders):
            contention.append(f"phase {k}: a sender transmits to two receivers at once")
        if len(set(receivers)) != len(receivers):
            contention.append(f"phase {k}: a receiver accepts two senders at once")
        for i, j in phase.transfers:
            if i == j:
                contention.append(f"phase {k}: self-loop transfer {i}->{j}")

    t = time_normalize(d, cluster)
    delivered = s.per_pair_totals()
    diff = delivered - t.entries
    for i, j in zip(*np.nonzero(np.abs(diff) > atol)):
        conservation.append(
            f"pair ({i}, {j}): delivered {delivered[i, j]:.12g}, demanded {t.entries[i, j]:.12g}"
        )
    total = math.fsum(p.duration for p in s.phases)
    if abs(total - s.makespan) > atol:
        conservation.append(
            f"makespan {s.makespan:.12g} != sum of phase durations {total:.12g}"
        )

    b_max = bmax_heterogeneous(t)
    if abs(s.makespan - b_max) > atol:
        optimality.append(f"makespan {s.makespan:.12g} != minimum time {b_max:.12g}")
    return ScheduleReport(tuple(contention), tuple(conservation), tuple(optimality))
