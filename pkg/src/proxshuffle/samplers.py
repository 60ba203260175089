"""Index generation for the proximal loop and exact permutation oracles.

Four schemes are supported:

* ``RR`` (random reshuffling): a fresh uniform permutation every epoch.
* ``SS`` (single shuffle): one uniform permutation reused for every epoch.
* ``IG`` (incremental gradient): a fixed, user-supplied permutation.
* ``IID``: independent uniform draws, i.e. plain proximal SGD.

Randomness comes from numpy's PCG64 generator seeded with a 64-bit integer.
A uniform permutation is drawn by a descending Fisher-Yates shuffle that
consumes exactly ``n - 1`` bounded integers, so two samplers built from the
same ``(scheme, n, seed)`` emit identical streams.

The enumeration helpers at the bottom of the module work with exact
``Fraction`` probabilities and are meant for small ``n`` only.
"""
from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import epoch_index, residual_index

MAX_ENUM_N = 6
MAX_IID_OUTCOMES = 1_000_000


class SchemeKind(str, Enum):
    RR = "RR"
    SS = "SS"
    IG = "IG"
    IID = "IID"


@dataclass(frozen=True)
class SamplerScheme:
    kind: SchemeKind
    perm: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SchemeKind(self.kind))
        if self.kind is SchemeKind.IG:
            if self.perm is None:
                raise ValueError("IG scheme requires an explicit permutation")
            perm = tuple(int(v) for v in self.perm)
            if sorted(perm) != list(range(1, len(perm) + 1)):
                raise ValueError(f"IG permutation {perm} is not a bijection on [1..{len(perm)}]")
            object.__setattr__(self, "perm", perm)
        elif self.perm is not None:
            raise ValueError(f"{self.kind.value} scheme takes no permutation")

    @classmethod
    def rr(cls) -> "SamplerScheme":
        return cls(SchemeKind.RR)

    @classmethod
    def ss(cls) -> "SamplerScheme":
        return cls(SchemeKind.SS)

    @classmethod
    def ig(cls, perm: Sequence[int]) -> "SamplerScheme":
        return cls(SchemeKind.IG, tuple(perm))

    @classmethod
    def iid(cls) -> "SamplerScheme":
        return cls(SchemeKind.IID)

    @property
    def label(self) -> str:
        if self.kind is SchemeKind.IG:
            return "IG[" + " ".join(map(str, self.perm)) + "]"
        return self.kind.value


def draw_permutation(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform permutation of ``1..n`` via descending Fisher-Yates."""
    perm = np.arange(1, n + 1)
    if n > 1:
        # bounds n, n-1, ..., 2 -> j_i uniform on [0, i] for i = n-1 .. 1
        js = rng.integers(0, np.arange(n, 1, -1))
        for i, j in zip(range(n - 1, 0, -1), js):
            perm[i], perm[j] = perm[j], perm[i]
    return perm


def draw_permutations(rng: np.random.Generator, n: int, count: int) -> np.ndarray:
    """``count`` independent uniform permutations of ``1..n`` as rows."""
    perms = np.tile(np.arange(1, n + 1), (count, 1))
    rows = np.arange(count)
    for i in range(n - 1, 0, -1):
        j = rng.integers(0, i + 1, size=count)
        tmp = perms[rows, i].copy()
        perms[rows, i] = perms[rows, j]
        perms[rows, j] = tmp
    return perms


@dataclass
class SamplerState:
    """Single-owner, mutable index generator. Not thread safe."""

    scheme: SamplerScheme
    n: int
    seed: int
    current_perm: np.ndarray = field(repr=False)
    epoch: int = 1
    _rng: np.random.Generator = field(repr=False, default=None)
    _t: int = 0

    def next_index(self, t: int) -> int:
        """Index ``I(t)`` in ``1..n``; ``t`` must advance by exactly one per call."""
        if t != self._t + 1:
            raise RuntimeError(f"next_index called with t={t}, expected t={self._t + 1}")
        self._t = t
        n = self.n
        self.epoch = (t - 1) // n + 1
        kind = self.scheme.kind
        if kind is SchemeKind.IID:
            return int(self._rng.integers(0, n)) + 1
        r = (t - 1) % n + 1
        if kind is SchemeKind.RR and r == 1 and t > 1:
            self.current_perm = draw_permutation(self._rng, n)
        return int(self.current_perm[r - 1])

    def stream(self, T: int) -> np.ndarray:
        """Emit the next ``T`` indices as an array (continues from the current position)."""
        start = self._t
        return np.array([self.next_index(start + k) for k in range(1, T + 1)], dtype=int)

    @property
    def position(self) -> int:
        """Number of indices emitted so far."""
        return self._t


def make_sampler(scheme: SamplerScheme, n: int, seed: int) -> SamplerState:
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 <= int(seed) < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    if scheme.kind is SchemeKind.IG:
        if len(scheme.perm) != n:
            raise ValueError(f"IG permutation has length {len(scheme.perm)}, expected n={n}")
        perm = np.asarray(scheme.perm, dtype=int)
    elif scheme.kind is SchemeKind.IID:
        perm = np.arange(1, n + 1)
    else:
        perm = draw_permutation(rng, n)
    return SamplerState(scheme=scheme, n=n, seed=int(seed), current_perm=perm, _rng=rng)


def index_streams(scheme: SamplerScheme, n: int, T: int, trials: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Vectorised index streams, shape ``(trials, T)``, values in ``1..n``.

    Used by Monte-Carlo diagnostics where building one :class:`SamplerState`
    per trial would be too slow. Each row has the law of the scheme.
    """
    kind = scheme.kind
    if kind is SchemeKind.IID:
        return rng.integers(1, n + 1, size=(trials, T))
    K = epoch_index(T, n)
    if kind is SchemeKind.IG:
        perms = np.tile(np.asarray(scheme.perm), (trials, K))
    elif kind is SchemeKind.SS:
        perms = np.tile(draw_permutations(rng, n, trials), (1, K))
    else:
        perms = np.concatenate([draw_permutations(rng, n, trials) for _ in range(K)], axis=1)
    return perms[:, :T]


# --------------------------------------------------------------------------
# exact enumeration oracles

def _check_enum_bounds(n: int, T: int) -> None:
    if not 1 <= n <= MAX_ENUM_N:
        raise ValueError(f"enumeration refused: n={n} outside [1, {MAX_ENUM_N}]")
    if not 1 <= T <= 2 * n:
        raise ValueError(f"enumeration refused: T={T} outside [1, 2n={2 * n}]")


def enumerate_schedules(scheme: SamplerScheme, n: int, T: int) -> list[tuple[tuple[int, ...], Fraction]]:
    """Every attainable index sequence ``I(1..T)`` with its exact probability."""
    _check_enum_bounds(n, T)
    kind = scheme.kind
    if kind is SchemeKind.IG:
        if len(scheme.perm) != n:
            raise ValueError("IG permutation length does not match n")
        seq = tuple(scheme.perm[residual_index(t, n) - 1] for t in range(1, T + 1))
        return [(seq, Fraction(1))]
    if kind is SchemeKind.IID:
        if n**T > MAX_IID_OUTCOMES:
            raise ValueError(f"enumeration refused: {n}**{T} IID outcomes")
        p = Fraction(1, n**T)
        return [(seq, p) for seq in itertools.product(range(1, n + 1), repeat=T)]

    perms = list(itertools.permutations(range(1, n + 1)))
    K = epoch_index(T, n)
    probs: dict[tuple[int, ...], Fraction] = defaultdict(Fraction)
    if kind is SchemeKind.SS:
        p = Fraction(1, len(perms))
        for perm in perms:
            probs[(perm * K)[:T]] += p
    else:
        p = Fraction(1, len(perms) ** K)
        for combo in itertools.product(perms, repeat=K):
            probs[sum(combo, ())[:T]] += p
    return sorted(probs.items())


@dataclass(frozen=True)
class MarginalReport:
    applicable: bool
    deviations: Mapping[int, Fraction]

    @property
    def max_deviation(self) -> Fraction:
        return max(self.deviations.values(), default=Fraction(0))

    @property
    def uniform(self) -> bool:
        return self.applicable and self.max_deviation == 0


def check_marginal_uniform(scheme: SamplerScheme, n: int, T: int) -> MarginalReport:
    """Exact ``max_i |P[I(t) = i] - 1/n|`` for every step ``t``."""
    if scheme.kind is SchemeKind.IG:
        return MarginalReport(applicable=False, deviations={})
    table = enumerate_schedules(scheme, n, T)
    target = Fraction(1, n)
    deviations = {}
    for t in range(1, T + 1):
        marginal = defaultdict(Fraction)
        for seq, p in table:
            marginal[seq[t - 1]] += p
        deviations[t] = max(abs(marginal[i] - target) for i in range(1, n + 1))
    return MarginalReport(applicable=True, deviations=deviations)


def swap_transform(perm: Sequence[int], a: int, b: int) -> tuple[int, ...]:
    """Exchange the entries at 1-based positions ``a`` and ``b``."""
    n = len(perm)
    if not (1 <= a <= n and 1 <= b <= n):
        raise IndexError(f"swap positions ({a}, {b}) outside [1, {n}]")
    out = list(perm)
    out[a - 1], out[b - 1] = out[b - 1], out[a - 1]
    return tuple(out)


def swap_to_value(perm: Sequence[int], r: int, i: int) -> tuple[int, ...]:
    """Swap position ``r`` with the position currently holding value ``i``."""
    out = list(perm)
    if not 1 <= r <= len(out):
        raise IndexError(f"position {r} outside [1, {len(out)}]")
    j = out.index(i)
    out[r - 1], out[j] = out[j], out[r - 1]
    return tuple(out)


def swap_pushforward_uniform(n: int, a: int, b: int) -> bool:
    """Uniform ``pi`` over ``S_n`` stays uniform after swapping positions ``a`` and ``b``."""
    perms = list(itertools.permutations(range(1, n + 1)))
    counts: dict[tuple[int, ...], int] = defaultdict(int)
    for perm in perms:
        counts[swap_transform(perm, a, b)] += 1
    # the image must be all of S_n, each permutation hit once
    return set(counts) == set(perms) and all(c == 1 for c in counts.values())


def conditioned_expectation_gap(n: int, phi: Callable[[tuple[int, ...]], Fraction],
                                r: int, i: int) -> Fraction:
    """``E[phi(pi) 1[pi^r = i]] - E[phi(swap_to_value(pi, r, i))] / n`` under uniform ``pi``.

    Exactly zero for every deterministic ``phi``.
    """
    perms = list(itertools.permutations(range(1, n + 1)))
    total = len(perms)
    lhs = sum((Fraction(phi(p)) for p in perms if p[r - 1] == i), Fraction(0)) / total
    rhs = sum((Fraction(phi(swap_to_value(p, r, i))) for p in perms), Fraction(0)) / total
    return lhs - rhs / n


def conditioned_marginal_gap(n: int, r: int, i: int) -> Fraction:
    """Largest deviation of ``swap_to_value(pi, r, i)^k`` from uniform on ``[n] minus {i}``, over ``k != r``."""
    perms = list(itertools.permutations(range(1, n + 1)))
    p = Fraction(1, len(perms))
    worst = Fraction(0)
    for k in range(1, n + 1):
        if k == r:
            continue
        law: dict[int, Fraction] = defaultdict(Fraction)
        for perm in perms:
            law[swap_to_value(perm, r, i)[k - 1]] += p
        for j in range(1, n + 1):
            target = Fraction(0) if j == i else Fraction(1, n - 1)
            worst = max(worst, abs(law[j] - target))
    return worst


def random_phi_table(n: int, rng: np.random.Generator) -> dict[tuple[int, ...], Fraction]:
    """A random integer-valued map on ``S_n``, tabulated so it can be used exactly."""
    perms = list(itertools.permutations(range(1, n + 1)))
    values = rng.integers(-1000, 1001, size=len(perms))
    return {perm: Fraction(int(v)) for perm, v in zip(perms, values)}


def epoch_cover_holds(indices: Sequence[int], n: int) -> bool:
    """Every complete epoch of ``indices`` is a permutation of ``1..n``."""
    full = len(indices) // n
    target = list(range(1, n + 1))
    return all(sorted(indices[k * n:(k + 1) * n]) == target for k in range(full))
