"""Stepsize schedules, strong-convexity weights and the epoch-decay lemma check."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .core import Horizon, LipschitzStats, epoch_index, residual_index

BINOMIAL_SATURATION = 1e300


class ScheduleKind(str, Enum):
    EPOCH_DECAY = "epoch_decay"
    CONST_OVER_SQRT_T = "const_over_sqrt_T"
    INV_SQRT_T = "inv_sqrt_t"
    POLYAK_STR = "polyak"


@dataclass(frozen=True)
class StepSchedule:
    """One of the four supported rules, bound to a horizon.

    ``eta`` is used by the three convex rules, ``m`` and ``mu`` by the
    strongly convex ``m / (mu t)`` rule.
    """

    kind: ScheduleKind
    horizon: Horizon
    eta: float | None = None
    m: int | None = None
    mu: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if self.kind is ScheduleKind.POLYAK_STR:
            if self.m is None or int(self.m) != self.m or self.m < 1:
                raise ValueError(f"polyak schedule needs integer m >= 1, got {self.m!r}")
            if self.mu is None or not self.mu > 0:
                raise ValueError(f"polyak schedule needs mu > 0, got {self.mu!r}")
        elif self.eta is None or not self.eta > 0 or not math.isfinite(self.eta):
            raise ValueError(f"{self.kind.value} schedule needs eta > 0, got {self.eta!r}")

    @classmethod
    def epoch_decay(cls, eta: float, T: int, n: int) -> "StepSchedule":
        return cls(ScheduleKind.EPOCH_DECAY, Horizon(T, n), eta=eta)

    @classmethod
    def const_over_sqrt_T(cls, eta: float, T: int, n: int) -> "StepSchedule":
        return cls(ScheduleKind.CONST_OVER_SQRT_T, Horizon(T, n), eta=eta)

    @classmethod
    def inv_sqrt_t(cls, eta: float, T: int, n: int) -> "StepSchedule":
        return cls(ScheduleKind.INV_SQRT_T, Horizon(T, n), eta=eta)

    @classmethod
    def polyak(cls, m: int, mu: float, T: int, n: int) -> "StepSchedule":
        return cls(ScheduleKind.POLYAK_STR, Horizon(T, n), m=m, mu=mu)

    @property
    def T(self) -> int:
        return self.horizon.T

    @property
    def label(self) -> str:
        if self.kind is ScheduleKind.POLYAK_STR:
            return f"polyak(m={self.m},mu={self.mu:g})"
        return f"{self.kind.value}(eta={self.eta:.6g})"

    def step_at(self, t: int) -> float:
        if not 1 <= t <= self.T:
            raise ValueError(f"step index t={t} outside [1, {self.T}]")
        T, n = self.horizon.T, self.horizon.n
        if self.kind is ScheduleKind.EPOCH_DECAY:
            K = epoch_index(T, n)
            return self.eta * (K - epoch_index(t, n) + 1) / (K * math.sqrt(T))
        if self.kind is ScheduleKind.CONST_OVER_SQRT_T:
            return self.eta / math.sqrt(T)
        if self.kind is ScheduleKind.INV_SQRT_T:
            return self.eta / math.sqrt(t)
        return self.m / (self.mu * t)

    def steps(self) -> np.ndarray:
        """``eta_1 .. eta_T`` as an array."""
        return np.array([self.step_at(t) for t in range(1, self.T + 1)])


def step_at(schedule: StepSchedule, t: int) -> float:
    return schedule.step_at(t)


def gamma_weights(schedule: StepSchedule, mu: float) -> np.ndarray:
    """``gamma_1 .. gamma_{T+1}`` with ``gamma_1 = 1`` and ``gamma_{t+1} = (1 + mu eta_t) gamma_t``."""
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    gammas = np.ones(schedule.T + 1)
    if mu == 0:
        return gammas
    for t in range(1, schedule.T + 1):
        gammas[t] = gammas[t - 1] * (1.0 + mu * schedule.step_at(t))
    return gammas


def binomial(a: int, b: int) -> float:
    """``C(a, b)`` as a float, saturating to ``inf`` beyond ``1e300``."""
    value = math.comb(a, b)
    if value > BINOMIAL_SATURATION:
        return math.inf
    return float(value)


@dataclass(frozen=True)
class StepsizeLemmaReport:
    lhs1: float
    rhs1: float
    lhs2: float
    rhs2: float
    passed: bool


def epoch_decay_suffix_sum(eta_star: Fraction, n: int, T: int, t: int) -> Fraction:
    """Closed form of ``sum_{s=t}^T eta_star (q(T) - q(s) + 1)``."""
    K, k = epoch_index(T, n), epoch_index(t, n)
    rT, rt = residual_index(T, n), residual_index(t, n)
    if k == K:
        return eta_star * (rT - rt + 1)
    return eta_star * (rT + Fraction(n, 2) * (K - k - 1) * (K - k + 2) + (n - rt + 1) * (K - k + 1))


@lru_cache(maxsize=None)
def _unit_lemma_sums(n: int, T: int) -> tuple[Fraction, Fraction]:
    # both left-hand sides are linear in eta_star, so compute them once at eta_star = 1
    K = epoch_index(T, n)
    one = Fraction(1)
    lhs1 = epoch_decay_suffix_sum(one, n, T, 1)
    lhs2 = Fraction(0)
    for t in range(1, T + 1):
        eta_t = K - epoch_index(t, n) + 1
        lhs2 += Fraction(eta_t * eta_t) / epoch_decay_suffix_sum(one, n, T, t)
    return lhs1, lhs2


def verify_stepsize_lemma(eta_star: float, n: int, T: int, slack: float = 1e-12) -> StepsizeLemmaReport:
    """Check both inequalities for ``eta_t = eta_star (q(T) - q(t) + 1)``.

    The sums are exact rationals; only the logarithm on the right-hand side
    of the second inequality is a float.
    """
    if not eta_star > 0:
        raise ValueError(f"eta_star must be positive, got {eta_star!r}")
    eta = Fraction(eta_star)
    K = epoch_index(T, n)
    unit1, unit2 = _unit_lemma_sums(int(n), int(T))
    lhs1 = eta * unit1
    lhs2 = eta * unit2
    rhs1 = eta * K * T / 2
    rhs2 = 9 * float(eta) * (K + math.log(n)) / 2
    passed = lhs1 >= rhs1 - Fraction(slack) and float(lhs2) <= rhs2 + slack
    return StepsizeLemmaReport(float(lhs1), float(rhs1), float(lhs2), rhs2, passed)


def optimized_eta(kind: ScheduleKind, scheme: str, n: int, T: int, stats: LipschitzStats,
                  D: float, constrained: bool = False) -> float:
    """Tuned base stepsize ``eta`` for a convex rule, given a distance bound ``D``.

    RR uses the three tunings of the random-reshuffling convex result; SS with
    a constant rule uses the single-shuffle tuning (the sharper constrained
    variant when ``constrained`` and ``T`` is a multiple of ``n``); IID uses
    the classical ``D / G_f2`` proximal SGD tuning.
    """
    kind = ScheduleKind(kind)
    if kind is ScheduleKind.POLYAK_STR:
        raise ValueError("the m/(mu t) rule has no tunable eta")
    if not D > 0:
        raise ValueError(f"distance bound must be positive, got {D!r}")
    g1, g2 = stats.G_f1, stats.G_f2
    K = epoch_index(T, n)
    if scheme == "RR":
        base = D / (n**0.25 * math.sqrt(g1 * g2))
        if kind is ScheduleKind.EPOCH_DECAY:
            return base / math.sqrt(1 + math.log(n) / K)
        if kind is ScheduleKind.CONST_OVER_SQRT_T:
            return base / math.sqrt(1 + math.log(T))
        return base
    if scheme == "SS":
        if kind is not ScheduleKind.CONST_OVER_SQRT_T:
            raise ValueError("single-shuffle tuning is defined for the constant eta/sqrt(T) rule only")
        if constrained and T % n == 0:
            scale = min(math.sqrt(n * K) * g1 * g2, n * g1**2)
            return D / math.sqrt(scale * (1 + math.log(n * K)))
        scale = max(K * g2**2, math.sqrt(n * K) * g1 * g2)
        return D / math.sqrt(scale * (1 + math.log(T)))
    if scheme == "IID":
        return D / g2
    raise ValueError(f"no tuned eta for scheme {scheme!r}")
