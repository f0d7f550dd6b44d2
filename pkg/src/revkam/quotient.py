"""Integer lattices in Z^n, quotient tori and the induced linear flows.

A sublattice ``L`` of ``Z^n`` (row vectors) is the annihilator of a closed
subgroup of the torus.  A unimodular ``Qmat`` with det +1 brings it to the
shape ``L Qmat = {(0, ..., 0, q_1 r_1, ..., q_k r_k)}`` with
``q_1 >= ... >= q_k >= 1``; the quotient torus has coordinates
``q_i psi_{n-k+i}`` where ``psi = Qmat^{-1} phi``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, NotProductForm, Overflow

INT_LIMIT = 1 << 127
TWO_PI_LD = np.longdouble("6.283185307179586476925286766559005768")


@dataclass(frozen=True)
class TorusLattice:
    n: int
    generators: tuple

    def __post_init__(self):
        gens = tuple(tuple(int(c) for c in g) for g in self.generators)
        for g in gens:
            if len(g) != self.n:
                raise DimensionMismatch(f"generator {g} does not have length {self.n}")
        object.__setattr__(self, "generators", gens)

    @classmethod
    def from_rows(cls, rows, n: int | None = None) -> "TorusLattice":
        rows = [list(r) for r in rows]
        if n is None:
            if not rows:
                raise ValueError("dimension needed for an empty generator list")
            n = len(rows[0])
        return cls(n, tuple(tuple(r) for r in rows))

    @classmethod
    def full(cls, n: int) -> "TorusLattice":
        return cls(n, tuple(tuple(int(i == j) for j in range(n)) for i in range(n)))


def _check(value: int) -> int:
    if abs(value) >= INT_LIMIT:
        raise Overflow("integer entry exceeds the 128-bit working range")
    return value


def smith_normal_form(A: Sequence[Sequence[int]], ncols: int):
    """Diagonal ``d`` and unimodular ``V``, ``Vinv`` with ``U A V = diag(d)`` for some unimodular U.

    ``d`` is the list of nonzero invariant factors in increasing divisibility
    order.  Only column transforms are tracked; row operations are free.
    """
    M = [list(map(int, r)) for r in A]
    rows = len(M)
    n = ncols
    V = [[int(i == j) for j in range(n)] for i in range(n)]
    Vinv = [[int(i == j) for j in range(n)] for i in range(n)]

    def col_addmul(dst, src, c):
        # column dst += c * column src
        if c == 0:
            return
        for r in M:
            r[dst] = _check(r[dst] + c * r[src])
        for r in V:
            r[dst] = _check(r[dst] + c * r[src])
        rs, rd = Vinv[src], Vinv[dst]
        for j in range(n):
            rs[j] = _check(rs[j] - c * rd[j])

    def col_swap(a, b):
        if a == b:
            return
        for r in M:
            r[a], r[b] = r[b], r[a]
        for r in V:
            r[a], r[b] = r[b], r[a]
        Vinv[a], Vinv[b] = Vinv[b], Vinv[a]

    def row_addmul(dst, src, c):
        if c:
            M[dst] = [_check(x + c * y) for x, y in zip(M[dst], M[src])]

    d = []
    t = 0
    while t < min(rows, n):
        nz = [(abs(M[i][j]), i, j) for i in range(t, rows) for j in range(t, n) if M[i][j]]
        if not nz:
            break
        _, i, j = min(nz)
        M[t], M[i] = M[i], M[t]
        col_swap(t, j)
        while True:
            piv = M[t][t]
            done = True
            for j in range(t + 1, n):
                if M[t][j]:
                    col_addmul(j, t, -(M[t][j] // piv))
                    if M[t][j]:
                        done = False
            for i in range(t + 1, rows):
                if M[i][t]:
                    row_addmul(i, t, -(M[i][t] // piv))
                    if M[i][t]:
                        done = False
            if not done:
                nz = [(abs(M[t][j]), t, j) for j in range(t, n) if M[t][j]]
                nz += [(abs(M[i][t]), i, t) for i in range(t, rows) if M[i][t]]
                _, i, j = min(nz)
                M[t], M[i] = M[i], M[t]
                col_swap(t, j)
                continue
            bad = next(((i, j) for i in range(t + 1, rows) for j in range(t + 1, n)
                        if M[i][j] % piv), None)
            if bad is None:
                break
            row_addmul(t, bad[0], 1)
        if M[t][t] < 0:
            M[t] = [-x for x in M[t]]
        d.append(M[t][t])
        t += 1
    return d, V, Vinv


def _det(A) -> int:
    n = len(A)
    if n == 0:
        return 1
    # fraction-free Bareiss elimination
    M = [list(r) for r in A]
    sign, prev = 1, 1
    for k in range(n - 1):
        if M[k][k] == 0:
            sw = next((i for i in range(k + 1, n) if M[i][k]), None)
            if sw is None:
                return 0
            M[k], M[sw] = M[sw], M[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                M[i][j] = (M[i][j] * M[k][k] - M[i][k] * M[k][j]) // prev
        prev = M[k][k]
    return sign * M[n - 1][n - 1]


@dataclass(frozen=True)
class LatticeNormalForm:
    n: int
    k: int
    Qmat: tuple          # n x n integers, det +1
    Qinv: tuple          # exact inverse
    qvals: tuple         # q_1 >= ... >= q_k >= 1

    def quotient_rows(self) -> list[list[int]]:
        """Rows ``q_i * Qinv[n-k+i]``: a basis of L giving the quotient coordinates."""
        return [[self.qvals[i] * c for c in self.Qinv[self.n - self.k + i]] for i in range(self.k)]

    def in_shape(self, v) -> bool:
        w = [sum(int(v[r]) * self.Qmat[r][c] for r in range(self.n)) for c in range(self.n)]
        if any(w[: self.n - self.k]):
            return False
        return all(w[self.n - self.k + i] % self.qvals[i] == 0 for i in range(self.k))


def lattice_normal_form(L: TorusLattice) -> LatticeNormalForm:
    n = L.n
    d, V, Vinv = smith_normal_form(L.generators, n) if L.generators else ([], None, None)
    if V is None:
        ident = tuple(tuple(int(i == j) for j in range(n)) for i in range(n))
        return LatticeNormalForm(n, 0, ident, ident, ())
    k = len(d)
    # columns of V: 0..k-1 carry d_1 | d_2 | ... ; reorder to zeros first, q descending
    order = list(range(k, n)) + list(range(k - 1, -1, -1))
    Q = [[V[r][c] for c in order] for r in range(n)]
    Qi = [list(Vinv[c]) for c in order]
    if _det(Q) < 0:
        for r in range(n):
            Q[r][0] = -Q[r][0]
        Qi[0] = [-x for x in Qi[0]]
    qvals = tuple(d[::-1])
    _size_reduce(Q, Qi, n, k, qvals)
    return LatticeNormalForm(n, k, tuple(map(tuple, Q)), tuple(map(tuple, Qi)), qvals)


def _size_reduce(Q, Qi, n: int, k: int, qvals) -> None:
    """Shrink the entries of Qinv without leaving the normal-form shape.

    ``row_j -= b row_i`` on Qinv is ``col_i += b col_j`` on Qmat.  It keeps the
    shape when row j is a free row, or when row i sits below row j among the
    q-rows (its q divides q_j).  Rows with equal q, and the free rows, may be
    mixed freely, so they are LLL-reduced; every q-row is then size-reduced
    against the rows below it.  Smith reductions tend to produce large
    transforms, and small quotient rows keep the projection numerically tame.
    """
    free = n - k

    def addmul(j, i, b):
        if b:
            Qi[j] = [_check(x - b * y) for x, y in zip(Qi[j], Qi[i])]
            for r in range(n):
                Q[r][i] = _check(Q[r][i] + b * Q[r][j])

    def swap(i, j):
        # (row_i, row_j) -> (row_j, -row_i) keeps det = +1
        Qi[i], Qi[j] = Qi[j], [-x for x in Qi[i]]
        for r in range(n):
            Q[r][i], Q[r][j] = Q[r][j], -Q[r][i]

    def dot(u, v):
        return sum(x * y for x, y in zip(u, v))

    def gram_schmidt(idx):
        basis = []
        for i in idx:
            v = [Fraction(x) for x in Qi[i]]
            for b in basis:
                nb = dot(b, b)
                if nb:
                    c = dot(v, b) / nb
                    v = [x - c * y for x, y in zip(v, b)]
            basis.append(v)
        return basis

    def nearest_plane(j, idx):
        """Reduce row j against rows idx (all allowed with unit step)."""
        if not idx:
            return
        gs = gram_schmidt(idx)
        for pos in range(len(idx) - 1, -1, -1):
            nb = dot(gs[pos], gs[pos])
            if nb:
                addmul(j, idx[pos], round(dot([Fraction(x) for x in Qi[j]], gs[pos]) / nb))

    def lll(idx, delta=Fraction(99, 100)):
        t = 1
        guard = 0
        while t < len(idx) and guard < 10_000:
            guard += 1
            nearest_plane(idx[t], idx[:t])
            gs = gram_schmidt(idx[: t + 1])
            a, b = gs[t - 1], gs[t]
            na = dot(a, a)
            mu = dot([Fraction(x) for x in Qi[idx[t]]], a) / na if na else Fraction(0)
            if dot(b, b) < (delta - mu * mu) * na:
                swap(idx[t - 1], idx[t])
                t = max(t - 1, 1)
            else:
                t += 1

    # q-rows from the bottom (smallest q) upward
    qrows = list(range(n - 1, free - 1, -1))
    blocks = []
    for r in qrows:
        if blocks and qvals[blocks[-1][0] - free] == qvals[r - free]:
            blocks[-1].append(r)
        else:
            blocks.append([r])
    below = []
    for block in blocks:
        for r in block:
            nearest_plane(r, below)
        lll(block)
        for r in block:
            nearest_plane(r, below)
        below = below + block
    frees = list(range(free))
    lll(frees)
    for r in frees:
        nearest_plane(r, [i for i in range(n) if i != r and i >= free])


@dataclass(frozen=True)
class QuotientFlow:
    k: int
    Qmat: tuple
    qvals: tuple
    quotient_freq: tuple
    varpi: tuple
    normal_form: LatticeNormalForm

    def to_dict(self) -> dict:
        return {"k": self.k, "Q": [list(r) for r in self.Qmat], "q": list(self.qvals),
                "freq": list(self.quotient_freq)}


def _exact_dot(row, vec) -> Fraction:
    return sum((Fraction(int(a)) * Fraction(float(b)) for a, b in zip(row, vec)), Fraction(0))


def quotient_flow(L: TorusLattice, omega) -> QuotientFlow:
    omega = [float(w) for w in np.ravel(omega)]
    if len(omega) != L.n:
        raise DimensionMismatch("omega length differs from the lattice dimension")
    nf = lattice_normal_form(L)
    varpi = tuple(float(_exact_dot(row, omega)) for row in nf.Qinv)
    freq = tuple(float(_exact_dot(row, omega)) for row in nf.quotient_rows())
    return QuotientFlow(nf.k, nf.Qmat, nf.qvals, freq, varpi, nf)


def annihilator_project(L_or_nf, phi) -> np.ndarray:
    """Quotient-torus coordinates of ``phi`` in [0, 2 pi).

    Computed in extended precision: the integer rows can be large, which
    amplifies rounding of the input angles.  Accepts longdouble input.
    """
    nf = L_or_nf if isinstance(L_or_nf, LatticeNormalForm) else (
        L_or_nf.normal_form if isinstance(L_or_nf, QuotientFlow) else lattice_normal_form(L_or_nf))
    phi = np.asarray(phi, dtype=np.longdouble)
    single = phi.ndim == 1
    phi = np.atleast_2d(phi)
    if phi.shape[1] != nf.n:
        raise DimensionMismatch("point dimension differs from the lattice dimension")
    if nf.k == 0:
        out = np.zeros((len(phi), 0))
        return out[0] if single else out
    C = np.array(nf.quotient_rows(), dtype=object)
    phi = np.mod(phi, TWO_PI_LD)
    vals = np.zeros((len(phi), nf.k), dtype=np.longdouble)
    for i in range(nf.k):
        for j in range(nf.n):
            c = int(C[i, j])
            if c:
                # exact integer reduction keeps c * phi accurate
                vals[:, i] = np.mod(vals[:, i] + np.longdouble(c) * phi[:, j], TWO_PI_LD)
    out = np.mod(vals, TWO_PI_LD).astype(float)
    out[out >= 2 * math.pi] -= 2 * math.pi
    return out[0] if single else out


def circle_distance(a, b) -> np.ndarray:
    d = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float) + math.pi, 2 * math.pi) - math.pi
    return np.abs(d)


def involution_fixed_points(n: int) -> list[tuple]:
    """Points of the n-torus fixed by x -> -x: every coordinate is 0 or pi."""
    if n < 0:
        raise ValueError("dimension must be nonnegative")
    return [tuple(c) for c in itertools.product((0.0, math.pi), repeat=n)]


def drift_value(ydot: Callable, dims: tuple[int, int, int], tol: float = 1e-12,
                samples: int = 32, seed: int = 0, y_scale: float = 0.1) -> np.ndarray:
    """Value at y = 0 of a y-equation that must not depend on (x, z).

    ``ydot(x, y, z)`` returns the y-velocity; ``dims = (n, m, zdim)``.  The
    independence is checked at random (x, z) for a few y values, including 0.
    A nonzero result means no invariant torus carrying quasi-periodic motion
    can exist.
    """
    n, m, zdim = dims
    rng = np.random.Generator(np.random.Philox(seed))
    ys = [np.zeros(m)] + [y_scale * rng.uniform(-1, 1, m) for _ in range(3)]
    for y in ys:
        ref = np.asarray(ydot(np.zeros(n), y, np.zeros(zdim)), dtype=float)
        for _ in range(samples):
            x = rng.uniform(0, 2 * math.pi, n)
            z = y_scale * rng.uniform(-1, 1, zdim)
            val = np.asarray(ydot(x, y, z), dtype=float)
            if np.abs(val - ref).max(initial=0.0) > tol:
                raise NotProductForm("the y-equation depends on x or z")
    return np.asarray(ydot(np.zeros(n), np.zeros(m), np.zeros(zdim)), dtype=float)
