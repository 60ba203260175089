"""The proximal incremental subgradient loop.

Each step draws an index ``i = I(t)``, takes a subgradient ``g`` of ``f_i``
at ``x_t`` and sets ``x_{t+1} = prox_step(psi, x_t, g, eta_t)``.

:func:`run_batch` advances several independent replications in lockstep,
one row per replication; :func:`run` is the single-replication entry point
and goes through the same code path. Iterates are never stored in full:
trackers keep a running sum and an ``n``-long ring buffer of the most
recent iterates.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .problems import FiniteSumProblem
from .samplers import SamplerState
from .stepsize import StepSchedule

TRACKERS = frozenset({"last", "average", "suffix", "gaps"})


class DivergenceError(FloatingPointError):
    """A non-finite iterate appeared."""

    def __init__(self, t: int, norm: float):
        super().__init__(f"non-finite iterate at step t={t} (||x_t|| = {norm:.6g})")
        self.t = t
        self.norm = norm


@dataclass
class RunConfig:
    x1: np.ndarray
    schedule: StepSchedule
    sampler: SamplerState
    trackers: frozenset[str] = TRACKERS
    stride: int | None = None
    F_ref: float | None = None
    record_indices: bool = False

    def __post_init__(self) -> None:
        self.x1 = np.asarray(self.x1, dtype=float)
        self.trackers = frozenset(self.trackers)
        unknown = self.trackers - TRACKERS
        if unknown:
            raise ValueError(f"unknown trackers {sorted(unknown)}; valid: {sorted(TRACKERS)}")
        if self.stride is not None and self.stride < 1:
            raise ValueError("stride must be a positive integer")

    @property
    def T(self) -> int:
        return self.schedule.T


@dataclass
class Trace:
    """Summary of one run. ``tail`` holds the last ``min(T, n)`` iterates, oldest first."""

    last: np.ndarray
    average: np.ndarray | None
    tail: np.ndarray
    tail_objectives: np.ndarray | None = None
    gaps: list[tuple[int, float]] = field(default_factory=list)
    index_log: np.ndarray | None = None
    failure: DivergenceError | None = None
    suffix_ready: bool = False

    @property
    def suffix(self) -> np.ndarray | None:
        return suffix_average(self, len(self.tail)) if self.suffix_ready else None

    @property
    def failed(self) -> bool:
        return self.failure is not None


def suffix_average(trace: Trace, n: int) -> np.ndarray | None:
    """Mean of the last ``n`` post-update iterates, or ``None`` when fewer were kept."""
    if n < 1 or len(trace.tail) < n:
        return None
    return np.mean(trace.tail[-n:], axis=0)


def evaluate_gap(problem: FiniteSumProblem, x, F_ref: float) -> float:
    """``F(x) - F_ref``; ``+inf`` outside the domain of psi."""
    return problem.objective(x) - F_ref


def objective_batch(problem: FiniteSumProblem, X: np.ndarray) -> np.ndarray:
    """``F`` over the leading axes of ``X``, ``inf`` where psi is infeasible."""
    reg = problem.regularizer
    vals = problem.f(X) + reg.value(X)
    return np.where(reg.inside(X), vals, np.inf)


def run_batch(problem: FiniteSumProblem, x1, schedule: StepSchedule, indices: np.ndarray,
              trackers: Iterable[str] = TRACKERS, stride: int | None = None,
              F_ref: float | None = None, tail_length: int | None = None,
              record_indices: bool = False) -> list[Trace]:
    """Run one replication per row of ``indices`` (shape ``(R, T)``, values in ``1..n``)."""
    indices = np.asarray(indices)
    if indices.ndim != 2 or indices.shape[1] != schedule.T:
        raise ValueError(f"indices must have shape (R, T={schedule.T}), got {indices.shape}")
    trackers = frozenset(trackers)
    R, T = indices.shape
    n = problem.n
    x1 = np.asarray(x1, dtype=float)
    if x1.shape != (problem.d,):
        raise ValueError(f"x1 has shape {x1.shape}, expected ({problem.d},)")
    if not problem.regularizer.contains(x1):
        raise ValueError("x1 must lie in the domain of the regularizer")
    if "gaps" in trackers and F_ref is None:
        if problem.reference is None:
            raise ValueError("gap tracking needs F_ref or a problem with a reference optimum")
        F_ref = problem.reference.F_star
    stride = n if stride is None else int(stride)
    L = n if tail_length is None else int(tail_length)

    reg = problem.regularizer
    X = np.tile(x1, (R, 1))
    rows0 = indices - 1
    steps = schedule.steps()
    total = np.zeros_like(X) if "average" in trackers else None
    ring = np.zeros((R, L, problem.d))
    gaps: list[list[tuple[int, float]]] = [[] for _ in range(R)]
    alive = np.ones(R, dtype=bool)
    failures: list[DivergenceError | None] = [None] * R

    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, T + 1):
            G = problem.subgradients(rows0[:, t - 1], X)
            X_new = reg.prox(X, G, steps[t - 1])
            finite = np.all(np.isfinite(X_new), axis=1)
            if not np.all(finite[alive]):
                for k in np.flatnonzero(alive & ~finite):
                    failures[k] = DivergenceError(t, float(np.linalg.norm(X[k])))
                alive &= finite
                X_new[~alive] = X[~alive]
            X = X_new
            if total is not None:
                total += X
            ring[:, (t - 1) % L] = X
            if "gaps" in trackers and (t % stride == 0 or t == T):
                vals = objective_batch(problem, X) - F_ref
                for k in range(R):
                    if alive[k]:
                        gaps[k].append((t, float(vals[k])))

    kept = min(T, L)
    order = [(T - kept + j) % L for j in range(kept)]
    tails = ring[:, order]
    want_tail_obj = "suffix" in trackers
    traces = []
    for k in range(R):
        tail = tails[k]
        trace = Trace(
            last=X[k].copy(),
            average=total[k] / T if total is not None else None,
            tail=tail,
            tail_objectives=objective_batch(problem, tail) if want_tail_obj else None,
            gaps=gaps[k],
            index_log=indices[k].copy() if record_indices else None,
            failure=failures[k],
        )
        trace.suffix_ready = "suffix" in trackers and T >= n
        traces.append(trace)
    return traces


def run(problem: FiniteSumProblem, cfg: RunConfig) -> Trace:
    """Execute ``T`` steps of the loop for one sampler; raises on divergence."""
    if cfg.sampler.n != problem.n:
        raise ValueError(f"sampler has n={cfg.sampler.n}, problem has n={problem.n}")
    if cfg.schedule.horizon.n != problem.n:
        raise ValueError("schedule horizon n does not match the problem")
    indices = cfg.sampler.stream(cfg.T)[None, :]
    trace = run_batch(problem, cfg.x1, cfg.schedule, indices, cfg.trackers, cfg.stride,
                      cfg.F_ref, record_indices=cfg.record_indices)[0]
    if trace.failure is not None:
        raise trace.failure
    return trace


def run_seeds(problem: FiniteSumProblem, x1, schedule: StepSchedule, scheme, seeds: Sequence[int],
              **kwargs) -> list[Trace]:
    """One replication per seed, each with its own sampler; rows advance together."""
    from .samplers import make_sampler

    indices = np.stack([make_sampler(scheme, problem.n, s).stream(schedule.T) for s in seeds])
    return run_batch(problem, x1, schedule, indices, **kwargs)
