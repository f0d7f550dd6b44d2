import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from revkam.errors import DimensionMismatch, NonSimpleSpectrum, PairingViolation, ZeroEigenvalue
from revkam.revlin import (
    InvolutionMatrix,
    SpectrumForm,
    build_unfolding,
    classify_spectrum,
    is_infinitesimally_reversible,
    project_reversible,
    random_reversible,
    standard_involution,
    synthesize,
    zero_exponent_multiplicity,
)

R2 = np.diag([1.0, -1.0])


def test_reversibility_examples():
    assert is_infinitesimally_reversible([[0, 1], [1, 0]], R2, 1e-12)
    assert not is_infinitesimally_reversible(np.eye(2), R2)
    B = np.random.default_rng(3).standard_normal((2, 2))
    assert is_infinitesimally_reversible(project_reversible(B, R2), R2, 1e-14)
    with pytest.raises(DimensionMismatch):
        is_infinitesimally_reversible(np.eye(3), R2)


def test_projection_identity_symbolic():
    sympy = pytest.importorskip("sympy")
    b = sympy.Matrix(4, 4, sympy.symbols("b0:16"))
    R = sympy.diag(1, 1, -1, -1)
    M = (b - R * b * R) / 2
    assert sympy.simplify(M * R + R * M) == sympy.zeros(4, 4)


def test_classify_basic():
    assert classify_spectrum([[0, 1], [1, 0]], R2) == SpectrumForm(1, 0, 0, (1.0,), ())
    assert classify_spectrum([[0, -1], [1, 0]], R2) == SpectrumForm(0, 1, 0, (), (1.0,))
    with pytest.raises(ZeroEigenvalue):
        classify_spectrum([[0, 0], [1, 0]], R2)


def test_quadruplet_against_characteristic_polynomial():
    a, b = 2.0, 3.0
    # lam^4 - 2(a^2 - b^2) lam^2 + (a^2 + b^2)^2
    roots = np.roots([1, 0, -2 * (a * a - b * b), 0, (a * a + b * b) ** 2])
    M, R = synthesize(SpectrumForm(0, 0, 1, (a,), (b,)))
    assert np.allclose(np.sort_complex(np.linalg.eigvals(M)), np.sort_complex(roots))
    form = classify_spectrum(M, R)
    assert form.kinds == (0, 0, 1)
    assert form.alpha == pytest.approx((2.0,), rel=1e-12)
    assert form.beta == pytest.approx((3.0,), rel=1e-12)


def test_general_involution_accepted():
    rng = np.random.default_rng(5)
    P = rng.standard_normal((4, 4))
    R = P @ standard_involution(2) @ np.linalg.inv(P)
    inv = InvolutionMatrix.from_array(R)
    assert inv.p == 2 and not inv.is_canonical
    M0, _ = synthesize(SpectrumForm(1, 1, 0, (0.5,), (2.0,)))
    M = P @ M0 @ np.linalg.inv(P)
    form = classify_spectrum(M, inv)
    assert form.isclose(SpectrumForm(1, 1, 0, (0.5,), (2.0,)), rtol=1e-9)
    D = inv.basis_inv @ R @ inv.basis
    assert np.allclose(D, standard_involution(2), atol=1e-10)


def test_non_simple_and_pairing_errors():
    M = np.zeros((4, 4))
    M[:2, 2:] = np.eye(2)
    M[2:, :2] = np.eye(2)  # eigenvalues +-1 twice
    with pytest.raises(NonSimpleSpectrum):
        classify_spectrum(M, standard_involution(2))
    with pytest.raises(PairingViolation):
        classify_spectrum(np.diag([1.0, 2.0]), R2)


def test_zero_exponent_examples():
    rng = np.random.default_rng(11)
    R = standard_involution(1, 2)
    assert zero_exponent_multiplicity(random_reversible(rng, 1, 2), R) == 1
    assert zero_exponent_multiplicity(np.zeros((3, 3)), R) == 3
    assert zero_exponent_multiplicity([[0, 1], [1, 0]], R2) == 0


def test_zero_exponent_lower_bound_many():
    rng = np.random.default_rng(12)
    for _ in range(1000):
        a, b = rng.integers(0, 4, size=2)
        if a + b == 0:
            continue
        R = standard_involution(a, b)
        M = random_reversible(rng, a, b)
        assert zero_exponent_multiplicity(M, R) >= abs(int(b) - int(a))


def test_unfolding_examples():
    unf = build_unfolding(np.zeros((0, 0)), np.zeros((0, 0)))
    assert unf.S == 0
    unf = build_unfolding(np.array([[0.0, 1.0], [1.0, 0.0]]), R2)
    assert unf.S == 1
    assert np.allclose(unf([], [0.25]), [[0, 1.25], [1.25, 0]], atol=1e-14)
    assert unf.spectrum([], [0.25]) == pytest.approx([1.25], rel=1e-13)
    unf = build_unfolding(np.array([[0.0, -1.0], [1.0, 0.0]]), R2)
    assert unf.spectrum([], [-0.3]) == pytest.approx([0.7], rel=1e-13)
    assert np.linalg.matrix_rank(unf.chi_jacobian()) == 1


def test_unfolding_family_grid():
    rng = np.random.default_rng(21)
    M0, R = synthesize(SpectrumForm(1, 1, 1, (0.7, 1.0), (1.5, 2.0)))
    D = random_reversible(rng, 4)

    def family(mu):
        return M0 + 0.05 * mu[0] * D

    unf = build_unfolding(family, R, s=1)
    assert unf.S == 4
    for mu in np.linspace(-1, 1, 5):
        assert np.array_equal(unf([mu], np.zeros(4)), family([mu]))
        for chi in rng.uniform(-0.05, 0.05, size=(4, 4)):
            X = unf([mu], chi)
            assert np.abs(X @ R + R @ X).max() < 1e-10
            shift = unf.spectrum([mu], chi) - unf.spectrum([mu])
            assert shift == pytest.approx(chi, abs=1e-10)


forms = st.builds(
    lambda n1, n2, n3, vals: (n1, n2, n3, vals),
    st.integers(0, 2), st.integers(0, 2), st.integers(0, 1),
    st.lists(st.floats(0.2, 5.0), min_size=6, max_size=6, unique=True),
).filter(lambda t: t[0] + t[1] + t[2] > 0)


@settings(max_examples=60, deadline=None)
@given(forms)
def test_synthesis_round_trip(data):
    n1, n2, n3, vals = data
    alpha = tuple(vals[:n1 + n3])
    beta = tuple(vals[3:3 + n2 + n3])
    form = SpectrumForm(n1, n2, n3, alpha, beta).sorted()
    # keep eigenvalues well separated relative to tolerance
    M, R = synthesize(form)
    eig = np.linalg.eigvals(M)
    gaps = np.abs(eig[:, None] - eig[None, :]) + np.eye(len(eig)) * 1e9
    if gaps.min() < 1e-4:
        return
    out = classify_spectrum(M, R)
    assert out.kinds == form.kinds
    assert out.isclose(form, rtol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_eigenvalues_symmetric_under_negation(p, seed):
    M = random_reversible(np.random.default_rng(seed), p)
    eig = np.linalg.eigvals(M)
    scale = np.abs(M).max()
    for lam in eig:
        assert np.abs(eig + lam).min() < 1e-8 * scale
