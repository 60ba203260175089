"""The lemma verification suite behind ``proxshuffle verify``."""
from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import asdict, dataclass, field
from statistics import NormalDist
from typing import Callable

import numpy as np

from .. import samplers
from ..core import epoch_index
from ..diagnostics import Z95, lower_bound_check, omega_table, phi_bound
from ..problems import planted_lad
from ..prox import L1, Ball, Box, Indicator, SqNorm, SqNormPlusIndicator, Zero, contraction_gap
from ..samplers import SamplerScheme
from ..stepsize import StepSchedule, binomial, gamma_weights, verify_stepsize_lemma

LEVELS = ("fast", "full")
SUITE_SEED = 20240601


@dataclass
class CheckResult:
    name: str
    passed: bool
    seconds: float
    detail: dict = field(default_factory=dict)


@dataclass
class VerifyReport:
    level: str
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def by_name(self, name: str) -> CheckResult:
        return next(c for c in self.checks if c.name == name)

    def to_json(self) -> str:
        return json.dumps({"level": self.level, "passed": self.passed,
                           "checks": [asdict(c) for c in self.checks]}, indent=2, default=float)

    def summary(self) -> str:
        lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.name:<26} {c.seconds:7.2f}s  "
                 + ", ".join(f"{k}={v}" for k, v in c.detail.items()) for c in self.checks]
        total = sum(c.seconds for c in self.checks)
        ok = sum(c.passed for c in self.checks)
        lines.append(f"{ok}/{len(self.checks)} checks passed in {total:.1f}s ({self.level})")
        return "\n".join(lines)


def check_sampler_marginals(max_n: int) -> dict:
    """Every step's index is uniform on [n] under RR, SS and IID, by exact enumeration."""
    worst = 0.0
    cases = 0
    for n in range(1, max_n + 1):
        for scheme in (SamplerScheme.rr(), SamplerScheme.ss(), SamplerScheme.iid()):
            T = 2 * n
            if scheme.kind.value == "IID" and n ** T > samplers.MAX_IID_OUTCOMES:
                T = n
            report = samplers.check_marginal_uniform(scheme, n, T)
            worst = max(worst, float(report.max_deviation))
            cases += 1
            if not report.uniform:
                return {"passed": False, "cases": cases, "failing": f"{scheme.label} n={n}"}
    return {"passed": True, "cases": cases, "max_deviation": worst}


def check_epoch_cover(max_n: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    for n in range(1, max_n + 1):
        for scheme in (SamplerScheme.rr(), SamplerScheme.ss(), SamplerScheme.ig(list(range(n, 0, -1)))):
            for _ in range(20):
                stream = samplers.make_sampler(scheme, n, int(rng.integers(2**63))).stream(5 * n)
                if not samplers.epoch_cover_holds(list(stream), n):
                    return {"passed": False, "failing": f"{scheme.label} n={n}"}
    return {"passed": True, "schemes": 3, "max_n": max_n}


def check_swap_identity(max_n: int) -> dict:
    """A fixed position swap maps the uniform law on S_n to itself."""
    cases = 0
    for n in range(1, max_n + 1):
        for a, b in itertools.product(range(1, n + 1), repeat=2):
            cases += 1
            if not samplers.swap_pushforward_uniform(n, a, b):
                return {"passed": False, "failing": f"n={n} a={a} b={b}"}
    return {"passed": True, "cases": cases}


def check_conditioned_expectation(max_n: int, tables: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    cases = 0
    for n in range(2, max_n + 1):
        for _ in range(tables):
            table = samplers.random_phi_table(n, rng)
            for r, i in itertools.product(range(1, n + 1), repeat=2):
                cases += 1
                if samplers.conditioned_expectation_gap(n, table.__getitem__, r, i) != 0:
                    return {"passed": False, "failing": f"n={n} r={r} i={i}"}
    return {"passed": True, "cases": cases, "tables_per_n": tables}


def check_conditioned_marginal(max_n: int) -> dict:
    cases = 0
    for n in range(2, max_n + 1):
        for r, i in itertools.product(range(1, n + 1), repeat=2):
            cases += 1
            if samplers.conditioned_marginal_gap(n, r, i) != 0:
                return {"passed": False, "failing": f"n={n} r={r} i={i}"}
    return {"passed": True, "cases": cases}


def _random_regularizers(rng: np.random.Generator, d: int) -> dict[str, object]:
    c = rng.standard_normal(d)
    lo = -rng.uniform(0.1, 2.0, d)
    hi = rng.uniform(0.1, 2.0, d)
    mu = float(np.exp(rng.uniform(-3, 2)))
    radius = float(np.exp(rng.uniform(-2, 1)))
    return {
        "zero": Zero(),
        "sqnorm": SqNorm(mu, c),
        "ball": Indicator(Ball(c, radius)),
        "box": Indicator(Box(lo, hi)),
        "sqnorm_ball": SqNormPlusIndicator(mu, c, Ball(rng.standard_normal(d), radius)),
        "l1": L1(float(np.exp(rng.uniform(-3, 1)))),
    }


def contraction_sweep(tuples: int, seed: int) -> dict[str, float]:
    """Worst ``lhs - rhs`` of the prox contraction per regularizer variant.

    ``tuples`` random (x, y, g_x, g_y, eta) draws per variant, spread over 100
    random parameter settings.
    """
    rng = np.random.default_rng(seed)
    settings = 100
    per = max(1, tuples // settings)
    worst: dict[str, float] = {}
    for _ in range(settings):
        d = int(rng.integers(1, 6))
        for name, reg in _random_regularizers(rng, d).items():
            xb, yb = 3 * rng.standard_normal((2, per, d))
            gx, gy = 3 * rng.standard_normal((2, per, d))
            eta = np.exp(rng.uniform(-5, 3, (per, 1)))
            lhs, rhs = contraction_gap(reg, xb, yb, gx, gy, eta)
            worst[name] = max(worst.get(name, -math.inf), float(np.max(lhs - rhs)))
    return worst


def check_prox_contraction(tuples: int, seed: int) -> dict:
    worst = contraction_sweep(tuples, seed)
    return {"passed": all(v <= 1e-12 for v in worst.values()), "tuples_per_variant": tuples,
            "max_excess": max(worst.values())}


def check_stepsize_lemma() -> dict:
    grid = [(n, T, e) for n in range(1, 9) for T in range(1, 65) for e in (0.1, 1.0, 10.0)]
    for n, T, e in grid:
        if not verify_stepsize_lemma(e, n, T).passed:
            return {"passed": False, "failing": f"n={n} T={T} eta*={e}"}
    return {"passed": True, "cases": len(grid)}


def gamma_binomial_errors(m: int, mu: float, T: int) -> tuple[float, float]:
    """Worst relative errors of ``gamma_t eta_t`` and of its running sum against binomials."""
    sched = StepSchedule.polyak(m, mu, T, 1)
    gammas = gamma_weights(sched, mu)
    prod = gammas[:T] * sched.steps()
    pointwise = max(abs(prod[t - 1] - binomial(m + t - 1, m - 1) / mu) / (binomial(m + t - 1, m - 1) / mu)
                    for t in range(1, T + 1))
    total = math.fsum(prod)
    target = (binomial(m + T, m) - 1) / mu
    return pointwise, abs(total - target) / target


def check_gamma_binomial() -> dict:
    worst = 0.0
    for m in (1, 2, 3):
        for mu in (0.1, 1.0, 3.0):
            for T in range(1, 51):
                worst = max(worst, *gamma_binomial_errors(m, mu, T))
    return {"passed": worst <= 1e-10, "max_relative_error": float(worst)}


LOWER_BOUND_GRID = [(G, mu, T) for G in (0.5, 1.0, 2.0) for mu in (0.5, 1.0, 2.0) for T in (1, 3, 7, 15)]


def check_lower_bound() -> dict:
    for G, mu, T in LOWER_BOUND_GRID:
        if not lower_bound_check(G, mu, T).passed:
            return {"passed": False, "failing": f"G={G} mu={mu} T={T}"}
    return {"passed": True, "cases": len(LOWER_BOUND_GRID)}


@dataclass(frozen=True)
class OmegaCase:
    scheme: str
    setting: str
    n: int
    T: int

    def build(self):
        """Problem and stepsize the matching convergence result is stated for."""
        if self.setting == "convex":
            problem = planted_lad(self.n, 3, seed=self.n, reg="ball")
            if self.scheme == "RR":
                schedule = StepSchedule.inv_sqrt_t(1.0, self.T, self.n)
            else:
                schedule = StepSchedule.const_over_sqrt_T(1.0, self.T, self.n)
        else:
            problem = planted_lad(self.n, 3, seed=self.n, reg="sqnorm", mu=1.0)
            schedule = StepSchedule.polyak(2, 1.0, self.T, self.n)
        return problem, schedule


OMEGA_CASES = [OmegaCase(s, g, n, k * n) for s in ("RR", "SS") for g in ("convex", "strongly_convex")
               for n in (2, 4) for k in (2, 4)]


def omega_conformance_cases(trials: int, seed: int) -> list[dict]:
    """Per case: worst ratio of ``|mean| - half_width`` to ``Phi eta_s`` and the RR zero-bias pairs."""
    out = []
    for k, case in enumerate(OMEGA_CASES):
        problem, schedule = case.build()
        scheme = SamplerScheme.rr() if case.scheme == "RR" else SamplerScheme.ss()
        table = omega_table(problem, scheme, schedule, trials, seed + k)
        phi = phi_bound(case.scheme, case.setting, case.n, case.T, problem.lipschitz).value
        violations = 0
        worst = 0.0
        for (t, s), est in table.items():
            bound = phi * schedule.step_at(s)
            worst = max(worst, abs(est.mean) / bound)
            if abs(est.mean) > bound + est.half_width:
                violations += 1
        out.append({"case": case, "table": table, "violations": violations, "worst_ratio": worst})
    return out


def rr_zero_bias(results: list[dict]) -> tuple[int, int]:
    """Pairs with ``s`` in an earlier epoch than ``t`` whose Bonferroni CI misses 0; and the pair count."""
    pairs = [(res, key) for res in results if res["case"].scheme == "RR"
             for key in res["table"] if key[1] <= (epoch_index(key[0], res["case"].n) - 1) * res["case"].n]
    if not pairs:
        return 0, 0
    z = NormalDist().inv_cdf(1 - 0.05 / (2 * len(pairs)))
    misses = sum(not res["table"][key].contains(0.0, z / Z95) for res, key in pairs)
    return misses, len(pairs)


def verify_suite(level: str = "fast", seed: int = SUITE_SEED,
                 progress: Callable[[CheckResult], None] | None = None) -> VerifyReport:
    """Run every check; failures are reported, never raised."""
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}, got {level!r}")
    full = level == "full"
    max_n = 5 if full else 4
    trials = 100_000 if full else 10_000
    omega_state: dict = {}

    def omega() -> dict:
        omega_state["results"] = omega_conformance_cases(trials, seed)
        bad = sum(r["violations"] for r in omega_state["results"])
        pairs = sum(len(r["table"]) for r in omega_state["results"])
        worst = max(r["worst_ratio"] for r in omega_state["results"])
        return {"passed": bad == 0, "trials": trials, "cases": len(OMEGA_CASES), "pairs": pairs,
                "max_abs_mean_over_bound": round(worst, 4)}

    def zero_bias() -> dict:
        misses, pairs = rr_zero_bias(omega_state["results"])
        return {"passed": misses == 0, "pairs": pairs, "misses": misses}

    plan: list[tuple[str, Callable[[], dict]]] = [
        ("sampler_marginals", lambda: check_sampler_marginals(max_n)),
        ("epoch_cover", lambda: check_epoch_cover(max_n, seed)),
        ("swap_identity", lambda: check_swap_identity(max_n)),
        ("conditioned_expectation", lambda: check_conditioned_expectation(max_n, 20, seed)),
        ("conditioned_marginal", lambda: check_conditioned_marginal(max_n)),
        ("prox_contraction", lambda: check_prox_contraction(10_000, seed)),
        ("stepsize_lemma", check_stepsize_lemma),
        ("gamma_binomial", check_gamma_binomial),
        ("lower_bound", check_lower_bound),
        ("omega_conformance", omega),
        ("rr_zero_bias", zero_bias),
    ]
    checks = []
    for name, fn in plan:
        start = time.perf_counter()
        try:
            detail = fn()
            passed = bool(detail.pop("passed"))
        except Exception as err:  # a crashing check is a failing check
            detail, passed = {"error": f"{type(err).__name__}: {err}"}, False
        result = CheckResult(name, passed, time.perf_counter() - start, detail)
        checks.append(result)
        if progress is not None:
            progress(result)
    return VerifyReport(level, checks)
