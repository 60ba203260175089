"""Closed-form proximal updates for the supported regularizers.

Every update solves

    argmin_z  psi(z) + <g, z> + ||z - x||^2 / (2 eta)

exactly. All functions operate on the last axis, so a stack of points with
shape ``(m, d)`` is handled row by row.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-9


class ConvexSet:
    """Nonempty closed convex set with a Euclidean projection."""

    def project(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def inside(self, x: np.ndarray, tol: float = FEAS_TOL) -> np.ndarray:
        """Boolean membership per point (over the leading axes)."""
        raise NotImplementedError

    def contains(self, x: np.ndarray, tol: float = FEAS_TOL) -> bool:
        return bool(np.all(self.inside(np.asarray(x, dtype=float), tol)))

    def _check_dim(self, x: np.ndarray, d: int) -> None:
        if x.shape[-1] != d:
            raise ValueError(f"point has dimension {x.shape[-1]}, set has dimension {d}")


@dataclass(frozen=True)
class AllSpace(ConvexSet):
    def project(self, x):
        return np.array(x, dtype=float, copy=True)

    def inside(self, x, tol=FEAS_TOL):
        return np.ones(np.shape(x)[:-1], dtype=bool)


@dataclass(frozen=True, eq=False)
class Ball(ConvexSet):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius!r}")

    def project(self, x):
        x = np.asarray(x, dtype=float)
        self._check_dim(x, self.center.shape[-1])
        diff = x - self.center
        norm = np.linalg.norm(diff, axis=-1, keepdims=True)
        scale = np.minimum(1.0, self.radius / np.maximum(norm, np.finfo(float).tiny))
        return self.center + diff * scale

    def inside(self, x, tol=FEAS_TOL):
        return np.linalg.norm(x - self.center, axis=-1) <= self.radius + tol


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape:
            raise ValueError("box bounds have different shapes")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def project(self, x):
        x = np.asarray(x, dtype=float)
        self._check_dim(x, self.lower.shape[-1])
        return np.clip(x, self.lower, self.upper)

    def inside(self, x, tol=FEAS_TOL):
        return np.all((x >= self.lower - tol) & (x <= self.upper + tol), axis=-1)


def project(cset: ConvexSet, x) -> np.ndarray:
    return cset.project(np.asarray(x, dtype=float))


class Regularizer:
    """The simple term psi of the composite objective."""

    modulus: float = 0.0

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def prox(self, x: np.ndarray, g: np.ndarray, eta: float) -> np.ndarray:
        raise NotImplementedError

    def inside(self, x: np.ndarray, tol: float = FEAS_TOL) -> np.ndarray:
        return np.ones(np.shape(x)[:-1], dtype=bool)

    def contains(self, x: np.ndarray, tol: float = FEAS_TOL) -> bool:
        return bool(np.all(self.inside(np.asarray(x, dtype=float), tol)))

    def subgradient_residual(self, z, x, g, eta) -> float:
        """Distance of ``(x - z)/eta - g`` from ``d psi(z)``; zero at the exact prox output.

        Only meaningful where the subdifferential has a closed form; indicator
        variants override with a variational-inequality check instead.
        """
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(Regularizer):
    modulus: float = field(default=0.0, init=False)

    def value(self, x):
        return np.zeros(np.shape(x)[:-1])

    def prox(self, x, g, eta):
        return np.asarray(x, dtype=float) - eta * np.asarray(g, dtype=float)

    def subgradient_residual(self, z, x, g, eta):
        return float(np.max(np.abs((x - z) / eta - g)))


@dataclass(frozen=True, eq=False)
class SqNorm(Regularizer):
    """``(mu/2) ||x - center||^2``."""

    mu: float
    center: np.ndarray

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu!r}")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @property
    def modulus(self):
        return float(self.mu)

    def value(self, x):
        diff = np.asarray(x, dtype=float) - self.center
        return 0.5 * self.mu * np.sum(diff * diff, axis=-1)

    def prox(self, x, g, eta):
        y = np.asarray(x, dtype=float) - eta * np.asarray(g, dtype=float)
        return self.center + (y - self.center) / (1.0 + self.mu * eta)

    def subgradient_residual(self, z, x, g, eta):
        grad = self.mu * (z - self.center)
        return float(np.max(np.abs(grad + g + (z - x) / eta)))


@dataclass(frozen=True, eq=False)
class Indicator(Regularizer):
    cset: ConvexSet
    modulus: float = field(default=0.0, init=False)

    def value(self, x):
        return np.where(self.cset.inside(np.asarray(x, dtype=float)), 0.0, np.inf)

    def prox(self, x, g, eta):
        return self.cset.project(np.asarray(x, dtype=float) - eta * np.asarray(g, dtype=float))

    def inside(self, x, tol=FEAS_TOL):
        return self.cset.inside(np.asarray(x, dtype=float), tol)


@dataclass(frozen=True, eq=False)
class SqNormPlusIndicator(Regularizer):
    """``(mu/2) ||x - center||^2`` restricted to a convex set.

    The quadratic plus the proximal anchor is an isotropic quadratic, so the
    exact prox is the projection of its minimiser onto the set.
    """

    mu: float
    center: np.ndarray
    cset: ConvexSet

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu!r}")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @property
    def modulus(self):
        return float(self.mu)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        quad = SqNorm(self.mu, self.center).value(x)
        return quad + Indicator(self.cset).value(x)

    def prox(self, x, g, eta):
        y = np.asarray(x, dtype=float) - eta * np.asarray(g, dtype=float)
        return self.cset.project(self.center + (y - self.center) / (1.0 + self.mu * eta))

    def inside(self, x, tol=FEAS_TOL):
        return self.cset.inside(np.asarray(x, dtype=float), tol)


@dataclass(frozen=True)
class L1(Regularizer):
    """``lam * ||x||_1``."""

    lam: float
    modulus: float = field(default=0.0, init=False)

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam!r}")

    def value(self, x):
        return self.lam * np.sum(np.abs(np.asarray(x, dtype=float)), axis=-1)

    def prox(self, x, g, eta):
        y = np.asarray(x, dtype=float) - eta * np.asarray(g, dtype=float)
        return np.sign(y) * np.maximum(np.abs(y) - self.lam * eta, 0.0)

    def subgradient_residual(self, z, x, g, eta):
        # need (x - z)/eta - g in lam * d|z|
        v = (x - z) / eta - g
        nz = z != 0
        err_nz = np.abs(v[nz] - self.lam * np.sign(z[nz]))
        err_z = np.maximum(np.abs(v[~nz]) - self.lam, 0.0)
        return float(max(np.max(err_nz, initial=0.0), np.max(err_z, initial=0.0)))


def prox_step(reg: Regularizer, x, g, eta) -> np.ndarray:
    """Exact prox update; ``eta`` may be an array broadcasting against ``x``."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    if x.shape != g.shape:
        raise ValueError(f"point shape {x.shape} and gradient shape {g.shape} differ")
    if not np.all(np.asarray(eta) > 0):
        raise ValueError(f"eta must be positive, got {eta!r}")
    return reg.prox(x, g, eta)


def contraction_gap(reg: Regularizer, xbar, ybar, gx, gy, eta):
    """Distance between two prox outputs and its ``(1 + mu eta)``-contracted upper bound.

    Scalars for single points; arrays over the leading axes for stacked input.
    """
    xt = prox_step(reg, xbar, gx, eta)
    yt = prox_step(reg, ybar, gy, eta)
    eta = np.asarray(eta, dtype=float)
    lhs = np.linalg.norm(xt - yt, axis=-1)
    diff = np.asarray(xbar, float) - np.asarray(ybar, float) - eta * (np.asarray(gx, float) - np.asarray(gy, float))
    # eta is a scalar or has a trailing unit axis
    factor = 1.0 + reg.modulus * (eta[..., 0] if eta.ndim else eta)
    rhs = np.linalg.norm(diff, axis=-1) / factor
    if np.ndim(lhs) == 0:
        return float(lhs), float(rhs)
    return lhs, rhs
