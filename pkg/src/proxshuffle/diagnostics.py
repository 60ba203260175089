"""Empirical checks of the analysis: sampling bias, rate slopes, lower bound."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import LipschitzStats, epoch_index
from .optimizer import run_batch
from .problems import FiniteSumProblem, hard_instance
from .samplers import SamplerScheme, SchemeKind, index_streams
from .stepsize import StepSchedule

Z95 = 1.959963984540054
MIN_TRIALS = 100


@dataclass(frozen=True)
class PhiConstant:
    scheme: str
    setting: str
    value: float


def phi_bound(scheme: str, setting: str, n: int, T: int, stats: LipschitzStats) -> PhiConstant:
    """Constant ``Phi`` with ``|E[f_{I(t)}(x_s) - f(x_s)]| <= Phi * eta_s`` for ``s <= t``."""
    if isinstance(scheme, SamplerScheme):
        scheme = scheme.kind
    scheme = SchemeKind(scheme).value
    g1, g2 = stats.G_f1, stats.G_f2
    if scheme == "RR" and setting == "convex":
        value = 4 * (g2**2 + 2 * math.sqrt(n) * g1 * g2)
    elif scheme == "RR" and setting == "strongly_convex":
        value = math.sqrt(2) * g2**2 + 2 * math.sqrt(2 * n) * g1 * g2
    elif scheme == "SS" and setting == "convex":
        K = epoch_index(T, n)
        value = 8 * K * g2**2 + 2 * math.sqrt(2 * n * K) * g1 * g2
    elif scheme == "SS" and setting == "strongly_convex":
        value = 8 * (T / n + 1) * g2**2 + 2 * math.sqrt(2 * (T + n)) * g1 * g2
    else:
        raise ValueError(f"no Phi constant for scheme={scheme!r}, setting={setting!r}")
    return PhiConstant(scheme, setting, value)


@dataclass(frozen=True)
class OmegaEstimate:
    t: int
    s: int
    mean: float
    half_width: float
    trials: int

    def contains(self, value: float, z_scale: float = 1.0) -> bool:
        return abs(self.mean - value) <= self.half_width * z_scale


def omega_table(problem: FiniteSumProblem, scheme: SamplerScheme, schedule: StepSchedule,
                trials: int, seed: int, x1=None, T: int | None = None) -> dict[tuple[int, int], OmegaEstimate]:
    """Estimates of ``E[f_{I(t)}(x_s) - f(x_s)]`` for every pair ``s <= t <= T``.

    All trials share one generator; the full index stream of each trial is
    drawn up front, so ``I(t)`` is available before step ``t`` executes.
    """
    if trials < MIN_TRIALS:
        raise ValueError(f"need at least {MIN_TRIALS} trials, got {trials}")
    T = schedule.T if T is None else int(T)
    n = problem.n
    x1 = np.zeros(problem.d) if x1 is None else np.asarray(x1, dtype=float)
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    idx = index_streams(scheme, n, T, trials, rng)

    # iterates x_1 .. x_T for every trial
    X = np.empty((T, trials, problem.d))
    X[0] = x1
    reg = problem.regularizer
    for t in range(1, T):
        G = problem.subgradients(idx[:, t - 1] - 1, X[t - 1])
        X[t] = reg.prox(X[t - 1], G, schedule.step_at(t))

    out = {}
    rows = np.arange(trials)
    for s in range(1, T + 1):
        vals = problem.component_values(X[s - 1])
        full = vals.mean(axis=1)
        for t in range(s, T + 1):
            omega = vals[rows, idx[:, t - 1] - 1] - full
            mean = float(omega.mean())
            sd = float(omega.std(ddof=1))
            out[(t, s)] = OmegaEstimate(t, s, mean, Z95 * sd / math.sqrt(trials), trials)
    return out


def estimate_omega(problem: FiniteSumProblem, scheme: SamplerScheme, schedule: StepSchedule,
                   t: int, s: int, trials: int, seed: int, x1=None) -> OmegaEstimate:
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    if not 1 <= s or t > schedule.T:
        raise ValueError(f"pair (t={t}, s={s}) outside the horizon T={schedule.T}")
    return omega_table(problem, scheme, schedule, trials, seed, x1, T=t)[(t, s)]


@dataclass(frozen=True)
class OmegaCheck:
    t: int
    s: int
    mean: float
    half_width: float
    bound: float
    passed: bool


def omega_conformance(problem: FiniteSumProblem, scheme: SamplerScheme, schedule: StepSchedule,
                      setting: str, trials: int, seed: int, x1=None) -> list[OmegaCheck]:
    """Compare every ``|mean Omega|`` with ``Phi * eta_s`` plus its sampling half-width."""
    phi = phi_bound(scheme.kind.value, setting, problem.n, schedule.T, problem.lipschitz).value
    table = omega_table(problem, scheme, schedule, trials, seed, x1)
    checks = []
    for (t, s), est in sorted(table.items()):
        bound = phi * schedule.step_at(s)
        checks.append(OmegaCheck(t, s, est.mean, est.half_width, bound,
                                 abs(est.mean) <= bound + est.half_width))
    return checks


def fit_rate(points: Sequence[tuple[float, float]]) -> tuple[float, float, float]:
    """Least-squares line through ``(ln x, ln y)``: returns slope, intercept, r^2."""
    if len(points) < 3:
        raise ValueError("need at least 3 points to fit a rate")
    xs = np.array([p[0] for p in points], dtype=float)
    ys = np.array([p[1] for p in points], dtype=float)
    if np.any(xs <= 0) or np.any(ys <= 0) or not np.all(np.isfinite(ys)):
        raise ValueError("rate fitting needs finite positive coordinates")
    lx, ly = np.log(xs), np.log(ys)
    xc = lx - lx.mean()
    yc = ly - ly.mean()
    slope = float(np.dot(xc, yc) / np.dot(xc, xc))
    intercept = float(ly.mean() - slope * lx.mean())
    ss_tot = float(np.dot(yc, yc))
    resid = ly - (intercept + slope * lx)
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.dot(resid, resid)) / ss_tot
    return slope, intercept, r2


@dataclass(frozen=True)
class LowerBoundReport:
    min_gap: float
    bound: float
    passed: bool


def lower_bound_check(G: float, mu: float, T: int) -> LowerBoundReport:
    """Proximal GD with ``eta_t = 1/(mu t)`` on the max-coordinate instance stays above the bound."""
    problem = hard_instance(G, mu, T, d=T + 1, n=1)
    schedule = StepSchedule.polyak(1, mu, T, 1)
    trace = run_batch(problem, np.zeros(problem.d), schedule, np.ones((1, T), dtype=int),
                      trackers={"gaps"}, stride=1)[0]
    min_gap = min(g for _, g in trace.gaps)
    bound = problem.lower_bound
    return LowerBoundReport(min_gap, bound, min_gap >= bound - 1e-12)
