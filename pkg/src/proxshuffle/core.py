"""Index arithmetic and Lipschitz statistics shared by every other module.

Steps and component indices are 1-based: ``t`` runs over ``1..T`` and
component indices over ``1..n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Absolute tolerance used by invariant checks unless an operation says otherwise.
ATOL = 1e-12


def _check_positive_int(name: str, value: int) -> None:
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")


def epoch_index(t: int, n: int) -> int:
    """Epoch containing step ``t``: ``ceil(t / n)``."""
    _check_positive_int("t", t)
    _check_positive_int("n", n)
    return (int(t) + int(n) - 1) // int(n)


def residual_index(t: int, n: int) -> int:
    """Position of step ``t`` inside its epoch, in ``1..n``.

    Uses the convention ``K*n mod n = n`` so that
    ``t == (epoch_index(t, n) - 1) * n + residual_index(t, n)``.
    """
    _check_positive_int("t", t)
    _check_positive_int("n", n)
    return (int(t) - 1) % int(n) + 1


@dataclass(frozen=True)
class Horizon:
    T: int
    n: int

    def __post_init__(self) -> None:
        _check_positive_int("T", self.T)
        _check_positive_int("n", self.n)

    @property
    def K(self) -> int:
        """Number of (possibly partial) epochs, ``q(T)``."""
        return epoch_index(self.T, self.n)

    def q(self, t: int) -> int:
        return epoch_index(t, self.n)

    def r(self, t: int) -> int:
        return residual_index(t, self.n)


@dataclass(frozen=True)
class LipschitzStats:
    G: tuple[float, ...]
    G_f1: float
    G_f2: float

    @property
    def n(self) -> int:
        return len(self.G)

    @property
    def G_max(self) -> float:
        return max(self.G)


def lipschitz_stats(G: Sequence[float]) -> LipschitzStats:
    """Arithmetic mean and root mean square of per-component Lipschitz constants."""
    values = np.asarray(G, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("Lipschitz constants must be a nonempty list")
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise ValueError("Lipschitz constants must be finite and strictly positive")
    g1 = float(np.mean(values))
    g2 = math.sqrt(float(np.mean(values**2)))
    return LipschitzStats(G=tuple(float(v) for v in values), G_f1=g1, G_f2=g2)
