"""Affinely Diophantine checks on truncated integer ranges, plus Monte-Carlo measure.

A pair ``(omega, beta)`` is affinely ``(tau, gamma, L)``-Diophantine when
``|<omega, k> + <beta, l>| >= gamma |k|_1^(-tau)`` for every nonzero integer
``k`` and every integer ``l`` with ``|l|_1 <= L``.  Only ``|k|_1 <= K_max`` is
ever enumerated, so a pass here is a necessary condition only.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyRange


@dataclass(frozen=True)
class FrequencyData:
    omega: tuple
    beta: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(float(w) for w in np.ravel(self.omega)))
        object.__setattr__(self, "beta", tuple(float(b) for b in np.ravel(self.beta)))

    @property
    def n(self) -> int:
        return len(self.omega)

    @property
    def nu(self) -> int:
        return len(self.beta)


@dataclass(frozen=True)
class DiophantineParams:
    tau: float
    gamma: float
    L: int
    K_max: int

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.K_max < 1:
            raise ValueError("K_max must be at least 1")
        if self.tau < 0 or self.L < 0:
            raise ValueError("tau and L must be nonnegative")


@dataclass(frozen=True)
class Verdict:
    violated: bool
    k: tuple | None = None
    ell: tuple | None = None
    margin: float | None = None     # |<omega,k> + <beta,l>| at the violator

    def to_dict(self) -> dict:
        return {
            "verdict": "Violated" if self.violated else "NoViolationFound",
            "k": list(self.k) if self.k is not None else None,
            "ell": list(self.ell) if self.ell is not None else None,
            "margin": self.margin,
        }


NO_VIOLATION = Verdict(False)


@lru_cache(maxsize=256)
def l1_shell(n: int, r: int) -> np.ndarray:
    """All integer vectors of dimension n with |k|_1 == r, in lexicographic order."""
    if n == 0:
        return np.zeros((1 if r == 0 else 0, 0), dtype=np.int64)
    if n == 1:
        return np.array([[-r], [r]] if r else [[0]], dtype=np.int64)
    rows = []
    for first in range(-r, r + 1):
        rest = l1_shell(n - 1, r - abs(first))
        if len(rest):
            rows.append(np.hstack([np.full((len(rest), 1), first, dtype=np.int64), rest]))
    out = np.vstack(rows)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def l1_ball(n: int, r: int) -> np.ndarray:
    """Integer vectors with |l|_1 <= r ordered by (|l|_1, lexicographic)."""
    out = np.vstack([l1_shell(n, j) for j in range(r + 1)]) if n else np.zeros((1, 0), dtype=np.int64)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=32)
def half_lattice(n: int, K_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Representatives of k != 0, |k|_1 <= K_max modulo k ~ -k, with their 1-norms.

    Enough for symmetric l-ranges since (k, l) and (-k, -l) give the same value.
    """
    blocks = []
    for r in range(1, K_max + 1):
        shell = l1_shell(n, r)
        nz = shell != 0
        first = shell[np.arange(len(shell)), nz.argmax(axis=1)]
        blocks.append(shell[first > 0])
    ks = np.vstack(blocks)
    norms = np.abs(ks).sum(axis=1)
    ks.setflags(write=False)
    norms.setflags(write=False)
    return ks, norms


def check_affinely_diophantine(fd: FrequencyData, dp: DiophantineParams) -> Verdict:
    """First violating (k, l) in (|k|_1, lexicographic) order, or NO_VIOLATION."""
    if fd.n == 0:
        return NO_VIOLATION
    omega = np.array(fd.omega)
    ells = l1_ball(fd.nu, dp.L)
    lb = ells @ np.array(fd.beta) if fd.nu else np.zeros(len(ells))
    for r in range(1, dp.K_max + 1):
        ks = l1_shell(fd.n, r)
        vals = np.abs((ks @ omega)[:, None] + lb[None, :])
        bad = vals < dp.gamma * float(r) ** (-dp.tau)
        if bad.any():
            i, j = np.unravel_index(int(np.argmax(bad.ravel())), bad.shape)
            return Verdict(True, tuple(int(c) for c in ks[i]), tuple(int(c) for c in ells[j]),
                           float(vals[i, j]))
    return NO_VIOLATION


def worst_resonance(fd: FrequencyData, tau: float, L: int, K_max: int):
    """Minimizer of ``|<omega,k> + <beta,l>| * |k|_1^tau`` over the truncated range.

    Returns ``(k, l, normalized_margin)``; the check at gamma passes iff the
    margin is >= gamma.
    """
    if fd.n == 0:
        raise EmptyRange("worst_resonance needs at least one frequency")
    omega = np.array(fd.omega)
    ells = l1_ball(fd.nu, L)
    lb = ells @ np.array(fd.beta) if fd.nu else np.zeros(len(ells))
    best = (np.inf, None, None)
    for r in range(1, K_max + 1):
        ks = l1_shell(fd.n, r)
        vals = np.abs((ks @ omega)[:, None] + lb[None, :]) * float(r) ** tau
        idx = int(np.argmin(vals))
        if vals.flat[idx] < best[0]:
            i, j = np.unravel_index(idx, vals.shape)
            best = (float(vals[i, j]), tuple(int(c) for c in ks[i]), tuple(int(c) for c in ells[j]))
    return best[1], best[2], best[0]


def normalized_margins(omegas, betas, tau: float, L: int, K_max: int,
                       chunk_elems: int = 1 << 16) -> np.ndarray:
    """Per-row ``min_{k,l} |<omega,k> + <beta,l>| |k|_1^tau`` for a batch of pairs.

    A row passes the (tau, gamma, L) check iff its value is >= gamma, so several
    gammas can be evaluated from one call.
    """
    omegas = np.atleast_2d(np.asarray(omegas, dtype=float))
    N, n = omegas.shape
    if n == 0:
        return np.full(N, np.inf)
    betas = np.zeros((N, 0)) if betas is None else np.asarray(betas, dtype=float).reshape(N, -1)
    ells = l1_ball(betas.shape[1], L)
    ks, norms = half_lattice(n, K_max)
    weights = norms.astype(float) ** tau
    kf = ks.astype(float).T
    out = np.full(N, np.inf)
    lb_all = betas @ ells.T.astype(float)        # (N, n_ell)
    rows = max(1, chunk_elems // max(1, len(ks)))
    only_zero_ell = not np.any(lb_all)
    for start in range(0, N, rows):
        sl = slice(start, start + rows)
        kw = omegas[sl] @ kf                     # (rows, n_k)
        if only_zero_ell:
            np.abs(kw, out=kw)
            kw *= weights
            out[sl] = kw.min(axis=1)
            continue
        best = out[sl]
        for j in range(lb_all.shape[1]):
            v = kw + lb_all[sl, j:j + 1]
            np.abs(v, out=v)
            v *= weights
            np.minimum(best, v.min(axis=1), out=best)
        out[sl] = best
    return out


def passes_batch(omegas, betas, dp: DiophantineParams) -> np.ndarray:
    return normalized_margins(omegas, betas, dp.tau, dp.L, dp.K_max) >= dp.gamma


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.ravel(self.center)))
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    def sample(self, rng: np.random.Generator, N: int) -> np.ndarray:
        d = self.dim
        if d == 1:
            u = rng.uniform(-1.0, 1.0, size=(N, 1))
        else:
            g = rng.standard_normal((N, d))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            u = g * rng.uniform(size=(N, 1)) ** (1.0 / d)
        return np.array(self.center) + self.radius * u


@dataclass(frozen=True)
class ProductRegion:
    balls: tuple

    @property
    def dim(self) -> int:
        return sum(b.dim for b in self.balls)

    def sample(self, rng: np.random.Generator, N: int) -> np.ndarray:
        return np.hstack([b.sample(rng, N) for b in self.balls])


def interval(lo: float, hi: float) -> Ball:
    return Ball(((lo + hi) / 2,), (hi - lo) / 2)


def sampling_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def wilson_half_width(fraction: float, N: int, z: float = 1.959963984540054) -> float:
    return float(z / (1 + z * z / N) * np.sqrt(fraction * (1 - fraction) / N + z * z / (4 * N * N)))


def sample_margins(region, fd_map: Callable, tau: float, L: int, K_max: int, samples: int,
                   seed: int, vectorized: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Sample the region and return (points, normalized margins)."""
    if samples < 100:
        raise ValueError("measure estimates need at least 100 samples")
    pts = region.sample(sampling_rng(seed), samples)
    if vectorized:
        omegas, betas = fd_map(pts)
    else:
        fds = [fd_map(mu) for mu in pts]
        omegas = np.array([fd.omega for fd in fds], dtype=float).reshape(samples, -1)
        betas = np.array([fd.beta for fd in fds], dtype=float).reshape(samples, -1)
    return pts, normalized_margins(omegas, betas, tau, L, K_max)


def measure_estimate(region, fd_map: Callable, dp: DiophantineParams, samples: int, seed: int,
                     vectorized: bool = False) -> tuple[float, float]:
    """Share of sampled parameters passing the check, with a 95% Wilson half-width.

    ``fd_map`` maps one parameter point to :class:`FrequencyData`; with
    ``vectorized=True`` it maps an ``(N, s)`` array to ``(omegas, betas)`` arrays.
    """
    _, margins = sample_margins(region, fd_map, dp.tau, dp.L, dp.K_max, samples, seed, vectorized)
    frac = float(np.mean(margins >= dp.gamma))
    return frac, wilson_half_width(frac, samples)


def measure_curve(region, fd_map: Callable, tau: float, L: int, K_max: int, gammas: Sequence[float],
                  samples: int, seed: int, vectorized: bool = False) -> list[tuple[float, float, float]]:
    """``(gamma, fraction, half_width)`` rows sharing one sample set across gammas."""
    _, margins = sample_margins(region, fd_map, tau, L, K_max, samples, seed, vectorized)
    rows = []
    for g in gammas:
        frac = float(np.mean(margins >= g))
        rows.append((float(g), frac, wilson_half_width(frac, samples)))
    return rows


# Example with a non-compact parameter set: frequencies scaled down to zero

def example_cutoff(b, c1: float, c2: float):
    """Smooth step equal to 1 for b <= c1, 0 for b >= c2, strictly between otherwise."""
    b = np.asarray(b, dtype=float)
    t = np.clip((b - c1) / (c2 - c1), 0.0, 1.0)

    def bump(x):
        return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)

    return bump(1 - t) / (bump(1 - t) + bump(t))


@dataclass(frozen=True)
class ScaledFamilyDemo:
    """Frequencies ``cutoff(b) * omega0(a) / b`` with ``omega0(a) = (1, a)`` on ``a in [1, 2]``.

    All derivatives of omega0 are bounded by ``D = 1``; ``c1 = max(D / delta, 1)``.
    """

    delta: float = 0.5
    c2_factor: float = 2.0
    tau: float = 3.0
    L: int = 2
    K_max: int = 60

    @property
    def c1(self) -> float:
        return max(1.0 / self.delta, 1.0)

    @property
    def c2(self) -> float:
        return self.c2_factor * self.c1

    def omegas(self, a, b) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        scale = example_cutoff(b, self.c1, self.c2) / b
        return np.stack([np.full_like(a, 1.0) * scale, a * scale], axis=-1)

    def pass_fraction(self, b: float, gamma: float, samples: int = 2000, seed: int = 0):
        a = interval(1.0, 2.0).sample(sampling_rng(seed), samples)[:, 0]
        margins = normalized_margins(self.omegas(a, b), None, self.tau, self.L, self.K_max)
        frac = float(np.mean(margins >= gamma))
        return frac, wilson_half_width(frac, samples)

    def table(self, bs: Sequence[float], gamma: float, samples: int = 2000, seed: int = 0):
        return [(float(b), *self.pass_fraction(b, gamma, samples, seed)) for b in bs]

