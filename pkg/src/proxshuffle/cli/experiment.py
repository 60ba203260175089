"""Sweep orchestration, replication aggregation and CSV emission.

Results CSV columns, in this order::

    n, K, T, scheme, schedule, tracker, mean_gap, ci_half_width,
    replications, wall_time_ms, failed

``mean_gap`` and ``ci_half_width`` (95%, normal approximation) are taken
over the replications that finished; ``failed`` counts the ones that hit a
non-finite iterate. ``wall_time_ms`` is empty unless timings are requested,
so that repeated runs produce identical bytes. Floats are written with
``repr`` and therefore parse back to the same value.
"""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from ..core import Horizon
from ..diagnostics import Z95, fit_rate
from ..optimizer import TRACKERS, Trace, objective_batch, run_batch
from ..problems import (FiniteSumProblem, LADProblem, Reference, hard_instance,
                        planted_lad, random_hinge, random_lad, reference_optimum)
from ..prox import (L1, Ball, Box, Indicator, Regularizer, SqNorm, SqNormPlusIndicator, Zero)
from ..samplers import SamplerScheme, make_sampler
from ..stepsize import ScheduleKind, StepSchedule, optimized_eta
from .config import ConfigError, ExperimentSpec, HardSpec, LADSpec, RegularizerSpec

RESULT_COLUMNS = ("n", "K", "T", "scheme", "schedule", "tracker", "mean_gap", "ci_half_width",
                  "replications", "wall_time_ms", "failed")
TRAJECTORY_COLUMNS = ("n", "K", "T", "scheme", "schedule", "t", "mean_gap", "ci_half_width",
                      "replications")
SLOPE_COLUMNS = ("n", "scheme", "schedule", "tracker", "points", "slope", "intercept", "r2")


@dataclass(frozen=True)
class ResultRow:
    n: int
    K: int
    T: int
    scheme: str
    schedule: str
    tracker: str
    mean_gap: float
    ci_half_width: float
    replications: int
    wall_time_ms: float | None = None
    failed: int = 0


@dataclass(frozen=True)
class SlopeRow:
    n: int
    scheme: str
    schedule: str
    tracker: str
    points: int
    slope: float
    intercept: float
    r2: float


@dataclass
class CellPlan:
    """Everything one sweep cell needs before its replications start."""

    cell: int
    n: int
    K: int
    problem: FiniteSumProblem
    F_ref: float
    x1: np.ndarray
    schedule: StepSchedule
    scheme: SamplerScheme
    stride: int

    @property
    def T(self) -> int:
        return self.schedule.T


@dataclass
class RepResult:
    gaps: dict[str, float]
    trajectory: list[tuple[int, float]]
    failed: bool
    trace: Trace | None = None


@dataclass
class CellResult:
    plan: CellPlan
    reps: list[RepResult]
    wall_time_ms: float = 0.0


def replication_seed(master_seed: int, cell: int, rep: int) -> int:
    """Sampler seed of replication ``rep`` in sweep cell ``cell``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(cell), int(rep)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _regularizer(spec: RegularizerSpec, d: int, planted: np.ndarray | None) -> Regularizer:
    if spec.center == "planted" and planted is None:
        raise ConfigError("problem.regularizer.center: 'planted' needs a planted problem")
    use_planted = spec.center == "planted" or (spec.center == "auto" and planted is not None)
    center = planted if use_planted else np.zeros(d)
    ball = Ball(np.zeros(d), spec.radius)
    if spec.kind == "none":
        return Zero()
    if spec.kind == "ball":
        return Indicator(ball)
    if spec.kind == "box":
        return Indicator(Box(-spec.halfwidth * np.ones(d), spec.halfwidth * np.ones(d)))
    if spec.kind == "sqnorm":
        return SqNorm(spec.mu, center)
    if spec.kind == "sqnorm_ball":
        return SqNormPlusIndicator(spec.mu, center, ball)
    return L1(spec.lam)


def build_problem(spec: ExperimentSpec, n: int, T: int) -> FiniteSumProblem:
    """The problem instance of one sweep cell; ``reference`` is set only when it is exact."""
    p = spec.problem
    if isinstance(p, HardSpec):
        if p.d is not None and p.d < T + 1:
            raise ConfigError(f"problem.d: hard instance needs d >= T+1 = {T + 1}, got {p.d}")
        return hard_instance(p.G, p.mu, T, d=p.d, n=n)
    if isinstance(p, LADSpec) and p.planted:
        base = planted_lad(n, p.d, p.seed, "none", x_star_norm=p.x_star_norm)
        x_star = base.reference.x_star
        reg = _regularizer(p.regularizer, p.d, x_star)
        exact = reg.contains(x_star) and float(reg.value(x_star)) == 0.0
        return LADProblem(base.A, base.b, reg, Reference(x_star, 0.0) if exact else None)
    reg = _regularizer(p.regularizer, p.d, None)
    if isinstance(p, LADSpec):
        return random_lad(n, p.d, p.seed, reg, p.noise)
    return random_hinge(n, p.d, p.seed, reg, p.flip)


def _scheme(spec: ExperimentSpec, n: int) -> SamplerScheme:
    kind = spec.scheme.kind
    if kind == "IG":
        return SamplerScheme.ig(spec.scheme.permutation(n))
    return {"RR": SamplerScheme.rr, "SS": SamplerScheme.ss, "IID": SamplerScheme.iid}[kind]()


def _schedule(spec: ExperimentSpec, problem: FiniteSumProblem, x_star: np.ndarray,
              x1: np.ndarray, n: int, T: int) -> StepSchedule:
    s = spec.schedule
    kind = ScheduleKind(s.kind)
    if kind is ScheduleKind.POLYAK_STR:
        mu = s.mu if s.mu is not None else problem.regularizer.modulus
        if not mu > 0:
            raise ConfigError("schedule.mu: required when the regularizer is not strongly convex")
        return StepSchedule.polyak(s.m, mu, T, n)
    eta = s.eta
    if s.auto_eta:
        D = float(np.linalg.norm(x_star - x1))
        if not D > 0:
            raise ConfigError("schedule.auto_eta: the optimum coincides with x1, so D* = 0")
        constrained = isinstance(problem.regularizer, Indicator)
        try:
            eta = optimized_eta(kind, spec.scheme.kind, n, T, problem.lipschitz, D, constrained)
        except ValueError as err:
            raise ConfigError(f"schedule.auto_eta: {err}") from None
    return StepSchedule(kind, Horizon(T, n), eta=eta)


def plan_cells(spec: ExperimentSpec) -> list[CellPlan]:
    """Build every cell's problem, reference value and schedule, in emission order.

    Estimated references depend only on ``n`` and are computed once per ``n``.
    """
    estimates: dict[int, tuple[float, np.ndarray]] = {}
    plans = []
    for cell, n, K in spec.cells():
        T = K * n
        problem = build_problem(spec, n, T)
        x1 = np.zeros(problem.d)
        if problem.reference is not None:
            F_ref, x_star = problem.reference.F_star, problem.reference.x_star
        else:
            if n not in estimates:
                est = reference_optimum(problem, spec.problem.reference_budget, spec.problem.seed, x1)
                estimates[n] = (est.F_star, est.x_star)
            F_ref, x_star = estimates[n]
        schedule = _schedule(spec, problem, x_star, x1, n, T)
        plans.append(CellPlan(cell, n, K, problem, F_ref, x1, schedule, _scheme(spec, n),
                              spec.stride_for(n)))
    return plans


def execute_cell(plan: CellPlan, master_seed: int, reps: Sequence[int],
                 keep_traces: bool = False) -> dict[int, RepResult]:
    """Run the given replications of one cell together; keyed by replication index.

    Each replication's result depends only on its own seed, so any split or
    ordering of ``reps`` gives the same per-replication values.
    """
    reps = list(reps)
    indices = np.stack([make_sampler(plan.scheme, plan.n, replication_seed(master_seed, plan.cell, r))
                        .stream(plan.T) for r in reps])
    traces = run_batch(plan.problem, plan.x1, plan.schedule, indices, TRACKERS,
                       stride=plan.stride, F_ref=plan.F_ref)
    points = {
        "last": np.stack([tr.last for tr in traces]),
        "average": np.stack([tr.average for tr in traces]),
        "suffix": np.stack([tr.suffix for tr in traces]),
    }
    values = {k: objective_batch(plan.problem, X) - plan.F_ref for k, X in points.items()}
    out = {}
    for j, (r, tr) in enumerate(zip(reps, traces)):
        gaps = {k: (math.nan if tr.failed else float(v[j])) for k, v in values.items()}
        out[r] = RepResult(gaps, tr.gaps, tr.failed, tr if keep_traces else None)
    return out


def run_cells(spec: ExperimentSpec, threads: int = 1, keep_traces: bool = False) -> list[CellResult]:
    """Plan and execute every cell; replications are split across ``threads`` workers."""
    if threads < 1:
        raise ValueError("threads must be a positive integer")
    plans = plan_cells(spec)
    R = spec.replications
    jobs = []
    for plan in plans:
        for chunk in np.array_split(np.arange(R), min(threads, R)):
            jobs.append((plan, [int(r) for r in chunk]))

    def work(job):
        plan, reps = job
        start = time.perf_counter()
        res = execute_cell(plan, spec.master_seed, reps, keep_traces)
        return plan.cell, res, (time.perf_counter() - start) * 1e3

    if threads == 1:
        outcomes = [work(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(work, jobs))

    merged: dict[int, dict[int, RepResult]] = {p.cell: {} for p in plans}
    elapsed = {p.cell: 0.0 for p in plans}
    for cell, res, ms in outcomes:
        merged[cell].update(res)
        elapsed[cell] += ms
    return [CellResult(p, [merged[p.cell][r] for r in range(R)], elapsed[p.cell]) for p in plans]


def mean_ci(values: Sequence[float]) -> tuple[float, float]:
    """Mean and 95% half-width in the given order; half-width 0 for identical values."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    mean = float(np.mean(v))
    if v.size == 1 or np.all(v == v[0]):
        return mean, 0.0
    return mean, float(Z95 * np.std(v, ddof=1) / math.sqrt(v.size))


def aggregate(spec: ExperimentSpec, cells: Sequence[CellResult], timings: bool = False) -> list[ResultRow]:
    rows = []
    for res in cells:
        plan = res.plan
        ok = [rep for rep in res.reps if not rep.failed]
        for tracker in spec.outputs:
            mean, ci = mean_ci([rep.gaps[tracker] for rep in ok])
            rows.append(ResultRow(plan.n, plan.K, plan.T, spec.scheme.kind, plan.schedule.label,
                                  tracker, mean, ci, len(res.reps),
                                  res.wall_time_ms if timings else None, len(res.reps) - len(ok)))
    return rows


def trajectory_rows(spec: ExperimentSpec, cells: Sequence[CellResult]) -> list[tuple]:
    """Mean last-iterate gap at every recorded step, over replications that finished."""
    rows = []
    for res in cells:
        plan = res.plan
        ok = [rep for rep in res.reps if not rep.failed]
        if not ok:
            continue
        steps = [t for t, _ in ok[0].trajectory]
        for k, t in enumerate(steps):
            mean, ci = mean_ci([rep.trajectory[k][1] for rep in ok])
            rows.append((plan.n, plan.K, plan.T, spec.scheme.kind, plan.schedule.label, t, mean, ci, len(ok)))
    return rows


def _cell_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell_text(v) for v in row])
    return path


def write_results(path: Path, rows: Sequence[ResultRow]) -> Path:
    return _write(Path(path), RESULT_COLUMNS, [[getattr(r, c) for c in RESULT_COLUMNS] for r in rows])


def read_results(path: Path) -> list[ResultRow]:
    types = {f.name: f.type for f in fields(ResultRow)}
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        for rec in reader:
            kw = {}
            for name, raw in rec.items():
                kind = types[name]
                if raw == "":
                    kw[name] = None
                elif kind == "int":
                    kw[name] = int(raw)
                elif kind.startswith("float"):
                    kw[name] = float(raw)
                else:
                    kw[name] = raw
            out.append(ResultRow(**kw))
    return out


def run_experiment(spec: ExperimentSpec, out_dir: Path | str | None = None, threads: int = 1,
                   timings: bool = False) -> list[ResultRow]:
    """Run the sweep; with ``out_dir``, also write ``<name>.csv`` and ``<name>_trajectory.csv``."""
    cells = run_cells(spec, threads)
    rows = aggregate(spec, cells, timings)
    if out_dir is not None:
        out_dir = Path(out_dir)
        write_results(out_dir / f"{spec.name}.csv", rows)
        _write(out_dir / f"{spec.name}_trajectory.csv", TRAJECTORY_COLUMNS, trajectory_rows(spec, cells))
    return rows


def fit_slopes(rows: Sequence[ResultRow]) -> list[SlopeRow]:
    """Log-log slope of mean gap against ``K``, per ``(n, scheme, schedule rule, tracker)``.

    Groups with fewer than three ``K`` values or a nonpositive mean gap get NaN.
    """
    groups: dict[tuple, list[ResultRow]] = {}
    for row in rows:
        rule = row.schedule.split("(")[0]
        groups.setdefault((row.n, row.scheme, rule, row.tracker), []).append(row)
    out = []
    for (n, scheme, rule, tracker), members in groups.items():
        points = [(float(r.K), r.mean_gap) for r in members]
        try:
            slope, intercept, r2 = fit_rate(points)
        except ValueError:
            slope = intercept = r2 = math.nan
        out.append(SlopeRow(n, scheme, rule, tracker, len(points), slope, intercept, r2))
    return out


def sweep_rate(spec: ExperimentSpec, out_dir: Path | str | None = None, threads: int = 1,
               timings: bool = False) -> tuple[list[ResultRow], list[SlopeRow]]:
    rows = run_experiment(spec, out_dir, threads, timings)
    slopes = fit_slopes(rows)
    if out_dir is not None:
        _write(Path(out_dir) / f"{spec.name}_slopes.csv", SLOPE_COLUMNS,
               [[getattr(s, c) for c in SLOPE_COLUMNS] for s in slopes])
    return rows, slopes
