"""Russmann-type nondegeneracy functionals computed from Taylor jets.

For a jet of ``Omega`` the functional ``rho`` is

    min over unit e of  max_J  J! max over unit u of |sum_{|q|=J} <D^q Omega, e> u^q / q!|

and ``kappa`` is the inner part evaluated at a fixed integer covector ``l``.
Both spheres are searched on deterministic grids followed by a local pattern
search, so values are estimates good to roughly 1e-6.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import BudgetExceeded, EvaluationFailure

GRID_POINTS = 129
REFINE_HALVINGS = 50
DEFAULT_THRESHOLD = 1e-10


@lru_cache(maxsize=None)
def multi_indices(s: int, J: int) -> tuple[tuple[int, ...], ...]:
    """Multi-indices of total degree J in s variables, lexicographically descending."""
    if s == 0:
        return ((),) if J == 0 else ()
    out = []
    for first in range(J, -1, -1):
        for rest in multi_indices(s - 1, J - first):
            out.append((first,) + rest)
    return tuple(out)


def _qfact(q) -> int:
    return math.prod(math.factorial(c) for c in q)


@dataclass
class Jet:
    """Partial derivatives ``D^q f(base)`` for ``1 <= |q| <= order``."""

    base_point: np.ndarray
    order: int
    coeffs: dict = field(repr=False)

    def __post_init__(self):
        self.base_point = np.atleast_1d(np.asarray(self.base_point, dtype=float))
        self.coeffs = {tuple(int(c) for c in q): np.atleast_1d(np.asarray(v, dtype=float))
                       for q, v in self.coeffs.items()}
        expected = {q for J in range(1, self.order + 1) for q in multi_indices(self.s, J)}
        missing = expected - set(self.coeffs)
        for q in missing:
            self.coeffs[q] = np.zeros(self.dim)
        extra = set(self.coeffs) - expected
        if extra:
            raise ValueError(f"jet has multi-indices outside orders 1..{self.order}: {sorted(extra)[:3]}")
        if any(not np.all(np.isfinite(v)) for v in self.coeffs.values()):
            raise ValueError("jet entries must be finite")

    @property
    def s(self) -> int:
        return len(self.base_point)

    @property
    def dim(self) -> int:
        for v in self.coeffs.values():
            return len(v)
        return 0

    def homogeneous(self, J: int) -> tuple[tuple, np.ndarray]:
        """Multi-indices of degree J and the matrix of rows ``D^q f / q!``."""
        qs = multi_indices(self.s, J)
        C = np.array([self.coeffs[q] / _qfact(q) for q in qs]).reshape(len(qs), self.dim)
        return qs, C

    def derivative_matrix(self) -> np.ndarray:
        """All derivative vectors stacked as rows."""
        rows = [self.coeffs[q] for J in range(1, self.order + 1) for q in multi_indices(self.s, J)]
        return np.array(rows).reshape(len(rows), self.dim)

    def directional(self, J: int, u) -> np.ndarray:
        """``J! sum_{|q|=J} D^q f u^q / q!``; equals the J-th derivative of f(base + t u) at 0."""
        qs, C = self.homogeneous(J)
        mono = _monomials(np.atleast_2d(np.asarray(u, dtype=float)), qs)
        return math.factorial(J) * (mono @ C)[0]

    def max_abs(self) -> float:
        return max((float(np.abs(v).max()) for v in self.coeffs.values() if v.size), default=0.0)

    def perturbed(self, rng: np.random.Generator, size: float) -> "Jet":
        return Jet(self.base_point, self.order,
                   {q: v + rng.uniform(-size, size, v.shape) for q, v in self.coeffs.items()})

    def to_dict(self) -> dict:
        entries = [{"q": list(q), "value": [float(x) for x in self.coeffs[q]]}
                   for J in range(1, self.order + 1) for q in multi_indices(self.s, J)]
        return {"base": [float(x) for x in self.base_point], "order": self.order, "entries": entries}

    @classmethod
    def from_dict(cls, d: dict) -> "Jet":
        return cls(np.array(d["base"], dtype=float), int(d["order"]),
                   {tuple(e["q"]): e["value"] for e in d["entries"]})


def _monomials(U: np.ndarray, qs) -> np.ndarray:
    """Matrix of u^q for rows u of U and multi-indices qs."""
    Q = np.array(qs, dtype=np.int64).reshape(len(qs), U.shape[1])
    out = np.ones((U.shape[0], len(qs)))
    for i in range(U.shape[1]):
        if Q[:, i].any():
            out *= U[:, i:i + 1] ** Q[:, i][None, :]
    return out


@lru_cache(maxsize=64)
def _stencil(j: int) -> tuple[np.ndarray, np.ndarray]:
    """Central finite-difference nodes and weights for the j-th derivative, O(h^2)."""
    m = (j + 1) // 2
    nodes = np.arange(-m, m + 1, dtype=float)
    A = np.vander(nodes, increasing=True).T
    rhs = np.zeros(len(nodes))
    rhs[j] = math.factorial(j)
    return nodes.astype(int), np.linalg.solve(A, rhs)


def jet_from_function(f: Callable, base, Q: int, step: float = 1e-2) -> Jet:
    """Finite-difference jet: tensor-product central differences plus one Richardson step."""
    base = np.atleast_1d(np.asarray(base, dtype=float))
    s = len(base)
    cache = {}

    def evaluate(offsets, h):
        key = (offsets, h)
        if key not in cache:
            try:
                val = f(base + h * np.array(offsets, dtype=float))
            except Exception as exc:  # noqa: BLE001 - wrapped for callers
                raise EvaluationFailure(f"function evaluation failed: {exc!r}") from exc
            cache[key] = np.atleast_1d(np.asarray(val, dtype=float))
        return cache[key]

    def difference(q, h):
        stencils = [_stencil(j) if j else (np.array([0]), np.array([1.0])) for j in q]
        total = 0.0
        for combo in itertools.product(*[range(len(st[0])) for st in stencils]):
            w = 1.0
            offsets = []
            for axis, idx in enumerate(combo):
                nodes, weights = stencils[axis]
                w *= weights[idx]
                offsets.append(int(nodes[idx]))
            if w != 0.0:
                total = total + w * evaluate(tuple(offsets), h)
        return total / h ** sum(q)

    coeffs = {}
    for J in range(1, Q + 1):
        for q in multi_indices(s, J):
            coarse = difference(q, step)
            fine = difference(q, step / 2)
            coeffs[q] = (4.0 * fine - coarse) / 3.0
    return Jet(base, Q, coeffs)


@lru_cache(maxsize=16)
def sphere_grid(d: int, m: int = GRID_POINTS) -> np.ndarray:
    """Deterministic grid on the unit sphere in R^d, modulo u ~ -u."""
    if d == 1:
        return np.ones((1, 1))
    if d == 2:
        t = np.pi * np.arange(m) / m
        return np.column_stack([np.cos(t), np.sin(t)])
    if d == 3:
        N = m * m // 2
        i = np.arange(N) + 0.5
        z = i / N
        phi = i * math.pi * (3.0 - math.sqrt(5.0))
        r = np.sqrt(1.0 - z * z)
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    from scipy.stats import qmc, norm
    pts = norm.ppf(qmc.Sobol(d, scramble=True, seed=d).random(m * m).clip(1e-12, 1 - 1e-12))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def _tangent_moves(p: np.ndarray) -> np.ndarray:
    d = len(p)
    q, _ = np.linalg.qr(np.column_stack([p, np.eye(d)]))
    basis = q[:, 1:d].T
    moves = [b for b in basis] + [-b for b in basis]
    for i, j in itertools.combinations(range(len(basis)), 2):
        for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            moves.append((si * basis[i] + sj * basis[j]) / math.sqrt(2))
    return np.array(moves)


def pattern_search(p0: np.ndarray, fun_batch: Callable, maximize: bool, step0: float,
                   halvings: int = REFINE_HALVINGS, max_iters: int = 400,
                   on_halve: Callable | None = None) -> tuple[np.ndarray, float]:
    """Compass search on the unit sphere; ``fun_batch`` maps (K, d) -> (K,).

    A successful move doubles the step (up to ``step0``); a failed sweep halves
    it. Stops after ``halvings`` halvings or ``max_iters`` sweeps.
    """
    sign = -1.0 if maximize else 1.0
    p = p0 / np.linalg.norm(p0)
    best = sign * float(fun_batch(p[None, :])[0])
    if len(p) == 1 or step0 <= 0:
        return p, sign * best
    step, halved = step0, 0
    for _ in range(max_iters):
        cand = p[None, :] + step * _tangent_moves(p)
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        vals = sign * np.asarray(fun_batch(cand), dtype=float)
        i = int(np.argmin(vals))
        if vals[i] < best:
            p, best = cand[i], float(vals[i])
            step = min(2.0 * step, step0)
        else:
            step *= 0.5
            halved += 1
            if halved >= halvings:
                break
            if on_halve is not None:
                on_halve(p)
                best = sign * float(fun_batch(p[None, :])[0])
    return p, sign * best


class _Functional:
    """Precomputed homogeneous parts of a jet on the u-sphere grid."""

    def __init__(self, jet: Jet, grid_points: int = GRID_POINTS):
        self.jet = jet
        self.U = sphere_grid(jet.s, grid_points)
        self.parts = []
        for J in range(1, jet.order + 1):
            qs, C = jet.homogeneous(J)
            scale = math.factorial(J)
            self.parts.append((qs, scale * C, scale * (_monomials(self.U, qs) @ C)))
        self.step0 = math.pi / grid_points if jet.s > 1 else 0.0

    def grid_values(self, E: np.ndarray, chunk: int = 1 << 22) -> np.ndarray:
        """max_J max over the u-grid of |V_J(u) . e| for each row e of E."""
        out = np.zeros(len(E))
        for _, _, V in self.parts:
            rows = max(1, chunk // max(1, len(V)))
            for start in range(0, len(E), rows):
                block = np.abs(V @ E[start:start + rows].T).max(axis=0)
                np.maximum(out[start:start + rows], block, out=out[start:start + rows])
        return out

    def refined_inner(self, e: np.ndarray) -> float:
        """max_J max over unit u of |V_J(u) . e| with grid seeding and local refinement."""
        best = 0.0
        for qs, C, V in self.parts:
            ce = C @ e
            if not np.any(ce):
                continue
            vals = np.abs(V @ e)
            u0 = self.U[int(np.argmax(vals))]

            def g(Ub, qs=qs, ce=ce):
                return np.abs(_monomials(Ub, qs) @ ce)

            _, val = pattern_search(u0, g, maximize=True, step0=self.step0)
            best = max(best, float(val), float(vals.max()))
        return best


def _inradius(points: np.ndarray) -> tuple[float, np.ndarray]:
    """Distance from 0 to the boundary of conv(+-points), with the minimizing facet normal.

    For an origin-symmetric hull this equals min over unit e of max_i |a_i . e|.
    """
    n = points.shape[1]
    if n == 1:
        return float(np.abs(points).max()), np.ones(1)
    from scipy.spatial import ConvexHull
    cloud = np.vstack([points, -points])
    try:
        hull = ConvexHull(cloud, qhull_options="QJ")
    except Exception:  # noqa: BLE001 - qhull gives up only on fully degenerate clouds
        return 0.0, np.eye(n)[0]
    dist = -hull.equations[:, -1]
    i = int(np.argmin(dist))
    return max(float(dist[i]), 0.0), hull.equations[i, :-1]


def rho_bracket(jet: Jet, grid_points: int = GRID_POINTS, rounds: int = 12,
                tol: float = 1e-9) -> tuple[float, float, np.ndarray]:
    """Lower and upper estimates of rho and the minimizing direction e.

    The lower value is the exact outer minimum over the sampled u-directions
    (an inradius); the upper value is the refined inner maximum at the
    minimizing e. Refined u-directions are fed back until both agree.
    """
    fun = _Functional(jet, grid_points)
    cloud = np.vstack([V for _, _, V in fun.parts])
    lo, e = _inradius(cloud)
    hi = fun.refined_inner(e)
    for _ in range(rounds):
        if hi - lo <= tol * max(1.0, hi):
            break
        extra = []
        for qs, C, V in fun.parts:
            ce = C @ e
            u0 = fun.U[int(np.argmax(np.abs(V @ e)))]
            u, _ = pattern_search(u0, lambda Ub, qs=qs, ce=ce: np.abs(_monomials(Ub, qs) @ ce),
                                  maximize=True, step0=fun.step0)
            extra.append(_monomials(u[None, :], qs) @ C)
        cloud = np.vstack([cloud] + extra)
        lo_new, e_new = _inradius(cloud)
        hi_new = fun.refined_inner(e_new)
        lo, e = lo_new, e_new
        hi = min(hi, hi_new) if hi_new >= lo else hi_new
    return lo, hi, e


def rho_Q(jet: Jet, grid_points: int = GRID_POINTS) -> float:
    """Min over the unit e-sphere of the worst-direction derivative size."""
    if jet.dim == 0:
        raise ValueError("rho needs a jet with at least one component")
    if jet.max_abs() == 0.0:
        return 0.0
    _, hi, _ = rho_bracket(jet, grid_points)
    return hi


def kappa_Q(jet: Jet, ell, grid_points: int = GRID_POINTS) -> float:
    ell = np.asarray(ell, dtype=float)
    if not np.any(ell) or jet.max_abs() == 0.0:
        return 0.0
    return _Functional(jet, grid_points).refined_inner(ell)


@dataclass
class NondegeneracyReport:
    rho: float | None
    kappa: dict
    condition_used: int
    verdict: bool
    margin: float
    checked_pairs: int = 0

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "kappa": {",".join(map(str, k)): v for k, v in self.kappa.items()},
            "condition_used": self.condition_used,
            "verdict": self.verdict,
            "margin": self.margin,
            "checked_pairs": self.checked_pairs,
        }


def _ell_range(nu: int, L: int):
    for ell in itertools.product(range(-L, L + 1), repeat=nu):
        if 1 <= sum(map(abs, ell)) <= L:
            yield ell


def integer_ball(n: int, radius: float, budget: int) -> np.ndarray:
    """Integer vectors with Euclidean norm <= radius (boundary included up to 1e-9 relative)."""
    R = int(math.floor(radius * (1 + 1e-9)))
    if (2 * R + 1) ** n > budget:
        raise BudgetExceeded(f"k-enumeration radius {radius:.3g} needs {(2 * R + 1) ** n} vectors > budget {budget}")
    axes = [np.arange(-R, R + 1)] * n
    grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(n, -1).T
    keep = (grid ** 2).sum(axis=1) <= (radius * (1 + 1e-9)) ** 2
    return grid[keep]


def is_QL_nondegenerate(jet_omega: Jet | None, jet_beta: Jet | None, L: int,
                        threshold: float = DEFAULT_THRESHOLD, k_budget: int = 2_000_000) -> NondegeneracyReport:
    """Dispatch on which of frequencies / normal frequencies are present."""
    n = jet_omega.dim if jet_omega is not None else 0
    nu = jet_beta.dim if jet_beta is not None else 0
    if n and nu:
        if jet_omega.s != jet_beta.s or not np.allclose(jet_omega.base_point, jet_beta.base_point):
            raise ValueError("jets must share the base point")
    if n == 0 and nu == 0:
        return NondegeneracyReport(None, {}, 4, True, math.inf)
    if nu == 0:
        rho = rho_Q(jet_omega)
        return NondegeneracyReport(rho, {}, 2, rho > threshold, rho - threshold)
    kappa = {ell: kappa_Q(jet_beta, ell) for ell in _ell_range(nu, L)}
    if n == 0:
        worst = min(kappa.values(), default=math.inf)
        return NondegeneracyReport(None, kappa, 3, worst > threshold, worst - threshold)
    rho = rho_Q(jet_omega)
    if rho <= threshold:
        return NondegeneracyReport(rho, kappa, 1, False, rho - threshold)
    Q = max(jet_omega.order, jet_beta.order)
    rows_o, rows_b = [], []
    for J in range(1, Q + 1):
        for q in multi_indices(jet_omega.s, J):
            rows_o.append(jet_omega.coeffs.get(q, np.zeros(n)))
            rows_b.append(jet_beta.coeffs.get(q, np.zeros(nu)))
    Do, Db = np.array(rows_o), np.array(rows_b)
    worst, checked = math.inf, 0
    for ell, kap in kappa.items():
        ks = integer_ball(n, kap / rho, k_budget)
        vals = np.abs(ks @ Do.T + (Db @ np.array(ell, dtype=float))[None, :]).max(axis=1)
        checked += len(ks)
        worst = min(worst, float(vals.min()))
    return NondegeneracyReport(rho, kappa, 1, worst > threshold, min(worst, rho) - threshold, checked)


def derivative_rank(jet: Jet, rtol: float = 1e-9) -> int:
    """Numerical rank of the stacked derivative vectors (independent check of rho > 0)."""
    A = jet.derivative_matrix()
    if A.size == 0:
        return 0
    sv = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(sv > rtol * max(1.0, sv.max())))
