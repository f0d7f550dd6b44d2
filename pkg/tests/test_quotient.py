import math

import numpy as np
import pytest
from sympy import Matrix
from sympy.matrices.normalforms import hermite_normal_form, invariant_factors

from revkam.errors import DimensionMismatch, NotProductForm, Overflow
from revkam.quotient import (
    TWO_PI_LD,
    TorusLattice,
    _det,
    annihilator_project,
    circle_distance,
    drift_value,
    involution_fixed_points,
    lattice_normal_form,
    quotient_flow,
    smith_normal_form,
)


def random_lattices(count, n=4, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        k = int(rng.integers(1, n + 2))
        yield rng.integers(-9, 10, size=(k, n))


def box_points(n, radius):
    axis = np.arange(-radius, radius + 1)
    return np.stack(np.meshgrid(*[axis] * n, indexing="ij"), -1).reshape(-1, n)


def hnf_membership(G, pts):
    """Independent oracle: integer coordinates in a Hermite basis of the lattice."""
    H = hermite_normal_form(Matrix(G.tolist()).T)
    B = np.array(H.T.tolist(), dtype=float)
    if B.size == 0:
        return np.all(pts == 0, axis=1)
    x = np.linalg.lstsq(B.T, pts.T.astype(float), rcond=None)[0].T
    xr = np.rint(x).astype(np.int64)
    return np.all(xr @ B.astype(np.int64) == pts, axis=1)


def shape_membership(nf, pts):
    w = pts @ np.array(nf.Qmat, dtype=np.int64)
    free = nf.n - nf.k
    ok = np.all(w[:, :free] == 0, axis=1)
    for i, q in enumerate(nf.qvals):
        ok &= w[:, free + i] % q == 0
    return ok


def test_diagonal_example():
    nf = lattice_normal_form(TorusLattice.from_rows([[2, 0], [0, 3]]))
    assert nf.k == 2 and nf.qvals == (6, 1)
    flow = quotient_flow(TorusLattice.from_rows([[1, 0]]), [1.3, 2.1])
    assert flow.k == 1 and flow.quotient_freq == pytest.approx((1.3,))


def test_trivial_lattices():
    nf = lattice_normal_form(TorusLattice(3, ()))
    assert nf.k == 0 and nf.Qmat == tuple(tuple(int(i == j) for j in range(3)) for i in range(3))
    assert annihilator_project(nf, [1.0, 2.0, 3.0]).shape == (0,)
    nf = lattice_normal_form(TorusLattice.full(3))
    assert nf.k == 3 and nf.qvals == (1, 1, 1)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        TorusLattice(2, ((1, 2, 3),))
    with pytest.raises(DimensionMismatch):
        quotient_flow(TorusLattice.from_rows([[1, 0]]), [1.0, 2.0, 3.0])


def test_smith_invariants_match_oracle():
    for G in random_lattices(40, seed=1):
        d, V, Vinv = smith_normal_form(G.tolist(), 4)
        oracle = [int(x) for x in invariant_factors(Matrix(G.tolist())) if x != 0]
        assert d == oracle
        assert (np.array(V, dtype=object).dot(np.array(Vinv, dtype=object)) == np.eye(4, dtype=int)).all()


def test_normal_form_shape_and_set_equality():
    for G in random_lattices(100, seed=2):
        nf = lattice_normal_form(TorusLattice.from_rows(G.tolist()))
        Q = np.array(nf.Qmat, dtype=object)
        assert _det([list(r) for r in nf.Qmat]) == 1
        assert (Q.dot(np.array(nf.Qinv, dtype=object)) == np.eye(4, dtype=int)).all()
        assert nf.k == np.linalg.matrix_rank(G.astype(float)) <= 4
        assert list(nf.qvals) == sorted(nf.qvals, reverse=True) and min(nf.qvals) >= 1
        assert all(a % b == 0 for a, b in zip(nf.qvals, nf.qvals[1:]))
        assert all(nf.in_shape(g) for g in G)
        pts = box_points(4, 5)
        assert np.array_equal(shape_membership(nf, pts), hnf_membership(G, pts))


def test_semiconjugacy():
    rng = np.random.default_rng(3)
    worst = 0.0
    for G in random_lattices(100, seed=2):
        L = TorusLattice.from_rows(G.tolist())
        omega = rng.uniform(-2, 2, 4)
        flow = quotient_flow(L, omega)
        C = flow.normal_form.quotient_rows()
        freq = np.array([sum(np.longdouble(c) * np.longdouble(w) for c, w in zip(row, omega)) for row in C])
        for _ in range(5):
            phi = rng.uniform(0, 2 * math.pi, 4).astype(np.longdouble)
            t = np.longdouble(rng.uniform(-10, 10))
            lhs = annihilator_project(flow, phi + omega.astype(np.longdouble) * t)
            rhs = np.mod(annihilator_project(flow, phi).astype(np.longdouble) + freq * t, TWO_PI_LD)
            worst = max(worst, float(circle_distance(lhs, rhs.astype(float)).max(initial=0.0)))
    assert worst < 1e-10


def test_projection_kills_lattice_directions():
    L = TorusLattice.from_rows([[1, 1, 0], [0, 2, 2]])
    nf = lattice_normal_form(L)
    phi = np.array([0.3, 1.1, 2.5])
    # moving along a direction orthogonal to L leaves the quotient unchanged
    d = np.cross([1, 1, 0], [0, 2, 2]).astype(float)
    a = annihilator_project(nf, phi)
    b = annihilator_project(nf, phi + 0.77 * d)
    assert circle_distance(a, b).max() < 1e-12


def test_fixed_points():
    pts = involution_fixed_points(3)
    assert len(pts) == 8 and len(set(pts)) == 8
    for p in pts:
        assert circle_distance(np.array(p), -np.array(p)).max() < 1e-15


def test_drift_value():
    v = drift_value(lambda x, y, z: np.array([1e-2 + y[0] ** 2]), (2, 1, 1))
    assert v == pytest.approx([1e-2])
    with pytest.raises(NotProductForm):
        drift_value(lambda x, y, z: np.array([math.sin(x[0])]), (2, 1, 0))


def test_overflow():
    big = (1 << 126) + 1
    with pytest.raises(Overflow):
        lattice_normal_form(TorusLattice.from_rows([[big, 3], [5, big]]))
