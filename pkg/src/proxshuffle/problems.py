"""Finite-sum test problems with deterministic subgradient oracles.

Kink rule: at a point where a component is not differentiable the oracle
returns the zero subgradient for absolute-value and hinge terms, and the
lowest-index maximiser for the max-of-coordinates term.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LipschitzStats, lipschitz_stats
from .prox import Ball, Indicator, Regularizer, SqNorm, SqNormPlusIndicator, Zero


@dataclass(frozen=True)
class Reference:
    x_star: np.ndarray
    F_star: float
    certified: bool = True


class FiniteSumProblem:
    """``F(x) = (1/n) sum_i f_i(x) + psi(x)``.

    Subclasses implement :meth:`component_values` and :meth:`subgradients`,
    both vectorised over a leading batch axis. Public indices are 1-based;
    the batched ``rows`` arguments are 0-based component rows.
    """

    n: int
    d: int
    regularizer: Regularizer
    reference: Reference | None = None
    G: np.ndarray

    @property
    def lipschitz(self) -> LipschitzStats:
        return lipschitz_stats(self.G)

    def component_values(self, x: np.ndarray) -> np.ndarray:
        """All ``f_i(x)``; shape ``x.shape[:-1] + (n,)``."""
        raise NotImplementedError

    def subgradients(self, rows: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Subgradient of ``f_{rows[k]+1}`` at ``x[k]`` for each batch entry ``k``."""
        raise NotImplementedError

    def oracle(self, i: int, x) -> tuple[float, np.ndarray]:
        if not 1 <= i <= self.n:
            raise IndexError(f"component {i} outside [1, {self.n}]")
        x = np.asarray(x, dtype=float)
        value = float(self.component_values(x)[i - 1])
        grad = self.subgradients(np.array([i - 1]), x[None, :])[0]
        return value, grad

    def f(self, x) -> np.ndarray:
        return np.mean(self.component_values(np.asarray(x, dtype=float)), axis=-1)

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if not self.regularizer.contains(x):
            return np.inf
        return float(self.f(x) + self.regularizer.value(x))

    def full_subgradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        rows = np.arange(self.n)
        return np.mean(self.subgradients(rows, np.broadcast_to(x, (self.n, self.d))), axis=0)


class HardInstance(FiniteSumProblem):
    """``f_i(x) = G max_{j <= T+1} x[j]`` for every ``i``, with ``psi = (mu/2)||x||^2``."""

    def __init__(self, G: float, mu: float, T: int, d: int | None = None, n: int = 1):
        d = T + 1 if d is None else d
        if d < T + 1:
            raise ValueError(f"hard instance needs d >= T+1 = {T + 1}, got d={d}")
        if not (G > 0 and mu > 0):
            raise ValueError("hard instance needs G > 0 and mu > 0")
        self.Gscale, self.mu, self.T, self.d, self.n = float(G), float(mu), int(T), int(d), int(n)
        self.G = np.full(self.n, self.Gscale)
        self.regularizer = SqNorm(self.mu, np.zeros(self.d))
        x_star = np.zeros(self.d)
        x_star[: T + 1] = -self.Gscale / (self.mu * (T + 1))
        self.lower_bound = self.Gscale**2 / (2 * self.mu * (T + 1))
        self.reference = Reference(x_star, -self.lower_bound)

    def component_values(self, x):
        top = self.Gscale * np.max(x[..., : self.T + 1], axis=-1)
        return np.repeat(top[..., None], self.n, axis=-1)

    def subgradients(self, rows, x):
        x = np.atleast_2d(x)
        # np.argmax returns the first maximiser
        j = np.argmax(x[:, : self.T + 1], axis=-1)
        g = np.zeros_like(x)
        g[np.arange(x.shape[0]), j] = self.Gscale
        return g


class LADProblem(FiniteSumProblem):
    """Least absolute deviations, ``f_i(x) = |<a_i, x> - b_i|``."""

    def __init__(self, A, b, reg: Regularizer | None = None, reference: Reference | None = None):
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        if self.A.ndim != 2 or self.b.shape != (self.A.shape[0],):
            raise ValueError("A must be n x d and b of length n")
        self.n, self.d = self.A.shape
        self.G = np.linalg.norm(self.A, axis=1)
        if np.any(self.G == 0):
            raise ValueError("LAD rows must be nonzero")
        self.regularizer = Zero() if reg is None else reg
        self.reference = reference

    def component_values(self, x):
        return np.abs(np.einsum("...d,nd->...n", x, self.A) - self.b)

    def subgradients(self, rows, x):
        x = np.atleast_2d(x)
        a = self.A[rows]
        resid = np.einsum("kd,kd->k", a, x) - self.b[rows]
        return np.sign(resid)[:, None] * a


class HingeProblem(FiniteSumProblem):
    """``f_i(x) = max(0, 1 - y_i <a_i, x>)``."""

    def __init__(self, A, y, reg: Regularizer | None = None, reference: Reference | None = None):
        self.A = np.asarray(A, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if self.A.ndim != 2 or self.y.shape != (self.A.shape[0],):
            raise ValueError("A must be n x d and y of length n")
        if not np.all(np.isin(self.y, (-1.0, 1.0))):
            raise ValueError("hinge labels must be +1 or -1")
        self.n, self.d = self.A.shape
        self.G = np.linalg.norm(self.A, axis=1)
        if np.any(self.G == 0):
            raise ValueError("hinge rows must be nonzero")
        self.regularizer = Zero() if reg is None else reg
        self.reference = reference

    def component_values(self, x):
        return np.maximum(0.0, 1.0 - np.einsum("...d,nd->...n", x, self.A) * self.y)

    def subgradients(self, rows, x):
        x = np.atleast_2d(x)
        a = self.A[rows]
        y = self.y[rows]
        margin = y * np.einsum("kd,kd->k", a, x)
        active = (margin < 1.0).astype(float)
        return (-(y * active))[:, None] * a


def hard_instance(G: float, mu: float, T: int, d: int | None = None, n: int = 1) -> HardInstance:
    return HardInstance(G, mu, T, d, n)


def lad_instance(A, b, reg: Regularizer | None = None) -> LADProblem:
    return LADProblem(A, b, reg)


def hinge_instance(A, y, reg: Regularizer | None = None) -> HingeProblem:
    return HingeProblem(A, y, reg)


def planted_lad(n: int, d: int, seed: int, reg: str = "none", mu: float = 0.1,
                radius: float = 2.0, x_star_norm: float = 1.0) -> LADProblem:
    """Consistent LAD system ``b = A x*`` with a known minimiser.

    ``x*`` is drawn at distance ``x_star_norm`` from the origin, so ``F* = 0``
    is attained at ``x*`` whenever psi also vanishes there:

    * ``"none"``: psi = 0;
    * ``"ball"``: indicator of the ball of ``radius`` about the origin
      (requires ``x_star_norm <= radius``);
    * ``"sqnorm"``: ``(mu/2)||x - x*||^2``;
    * ``"sqnorm_ball"``: both of the previous two.
    """
    rng = np.random.default_rng([int(seed), int(n), int(d)])
    A = rng.standard_normal((n, d))
    direction = rng.standard_normal(d)
    x_star = x_star_norm * direction / np.linalg.norm(direction)
    b = A @ x_star
    if reg == "none":
        psi: Regularizer = Zero()
    elif reg == "ball":
        if x_star_norm > radius:
            raise ValueError("planted optimum lies outside the ball")
        psi = Indicator(Ball(np.zeros(d), radius))
    elif reg == "sqnorm":
        psi = SqNorm(mu, x_star)
    elif reg == "sqnorm_ball":
        if x_star_norm > radius:
            raise ValueError("planted optimum lies outside the ball")
        psi = SqNormPlusIndicator(mu, x_star, Ball(np.zeros(d), radius))
    else:
        raise ValueError(f"unknown planted regularizer {reg!r}")
    return LADProblem(A, b, psi, Reference(x_star, 0.0))


def random_lad(n: int, d: int, seed: int, reg: Regularizer | None = None,
               noise: float = 1.0) -> LADProblem:
    """Noisy LAD instance; its optimum has to be estimated."""
    rng = np.random.default_rng([int(seed), int(n), int(d)])
    A = rng.standard_normal((n, d))
    b = A @ rng.standard_normal(d) + noise * rng.standard_normal(n)
    return LADProblem(A, b, reg)


def random_hinge(n: int, d: int, seed: int, reg: Regularizer | None = None,
                 flip: float = 0.0) -> HingeProblem:
    """Linearly separable labels from a random direction, optionally with flipped labels."""
    rng = np.random.default_rng([int(seed), int(n), int(d)])
    A = rng.standard_normal((n, d))
    w = rng.standard_normal(d)
    y = np.where(A @ w >= 0, 1.0, -1.0)
    flips = rng.random(n) < flip
    y[flips] *= -1
    return HingeProblem(A, y, reg)


@dataclass(frozen=True)
class ReferenceEstimate:
    F_star: float
    x_star: np.ndarray
    certified: bool = False


def reference_optimum(problem: FiniteSumProblem, budget: int, seed: int, x1=None,
                      scale: float | None = None, runs: int = 8) -> ReferenceEstimate:
    """Estimate ``min F`` for a problem without an analytic optimum.

    Takes the best objective value seen by (a) a full-subgradient proximal
    method with ``eta_t = scale / sqrt(t)`` (plus ``1 / (mu t)`` when psi is
    ``mu``-strongly convex), tracking both its iterates and their running
    average, and (b) ``runs`` seeded random-reshuffling runs of the
    incremental method with ``scale / sqrt(t)``, sampled at a fixed stride.
    Every candidate set is a prefix of the one for a larger budget, so the
    estimate never increases with ``budget``. ``x_star`` is the best point
    of (a). Never certified.
    """
    from .optimizer import objective_batch, run_seeds
    from .samplers import SamplerScheme
    from .stepsize import StepSchedule

    if budget < 1:
        raise ValueError("budget must be positive")
    reg = problem.regularizer
    x_init = np.zeros(problem.d) if x1 is None else np.asarray(x1, dtype=float)
    if not reg.contains(x_init):
        x_init = reg.prox(x_init, np.zeros(problem.d), 1.0)
    c = 1.0 / problem.lipschitz.G_f2 if scale is None else float(scale)

    best_F = float(objective_batch(problem, x_init))
    best_x = x_init.copy()
    mu = reg.modulus
    # one row per step rule, advanced in lockstep
    X = np.tile(x_init, (2 if mu > 0 else 1, 1))
    R, n = X.shape[0], problem.n
    rows = np.tile(np.arange(n), R)
    running = np.zeros_like(X)
    for t in range(1, budget + 1):
        eta = np.full((R, 1), c / np.sqrt(t))
        if mu > 0:
            eta[1] = 1.0 / (mu * t)
        G = problem.subgradients(rows, np.repeat(X, n, axis=0)).reshape(R, n, -1).mean(axis=1)
        X = reg.prox(X, G, eta)
        if not np.all(np.isfinite(X)):
            raise FloatingPointError(f"non-finite iterate at step {t} of the reference run")
        running += X
        candidates = np.concatenate([X, running / t])
        values = objective_batch(problem, candidates)
        k = int(np.argmin(values))
        if values[k] < best_F:
            best_F, best_x = float(values[k]), candidates[k].copy()

    stride = problem.n * max(1, 128 // problem.n)
    seeds = np.random.SeedSequence(int(seed)).generate_state(runs, dtype=np.uint64)
    schedule = StepSchedule.inv_sqrt_t(c, budget, problem.n)
    traces = run_seeds(problem, x_init, schedule, SamplerScheme.rr(), [int(s) for s in seeds],
                       trackers={"gaps"}, stride=stride, F_ref=0.0)
    for trace in traces:
        if trace.failed:
            raise FloatingPointError(str(trace.failure))
        for t, value in trace.gaps:
            # the final off-stride sample would break monotonicity in budget
            if t % stride == 0 and value < best_F:
                best_F = float(value)
    return ReferenceEstimate(best_F, best_x, certified=False)
