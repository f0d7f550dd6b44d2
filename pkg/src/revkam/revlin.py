"""Linear algebra of involutions and infinitesimally reversible matrices.

A real matrix ``M`` is infinitesimally reversible with respect to an
involution ``R`` when ``M R = -R M``.  Its eigenvalues then come in pairs
``(lam, -lam)``; for a nonsingular ``M`` with simple spectrum they split into
real pairs ``+-alpha``, imaginary pairs ``+-i beta`` and quadruplets
``+-alpha +- i beta``, recorded in a :class:`SpectrumForm`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    NonSimpleSpectrum,
    PairingViolation,
    RankDeficient,
    ZeroEigenvalue,
)

DEFAULT_TOL = 1e-8


def max_norm(a) -> float:
    a = np.asarray(a)
    return float(np.abs(a).max()) if a.size else 0.0


@dataclass(frozen=True)
class InvolutionMatrix:
    """An involutive matrix together with a basis splitting it as diag(I, -I).

    ``basis`` has the +1 eigenvectors in its first ``plus`` columns and the
    -1 eigenvectors in the remaining ``minus`` columns.
    """

    R: np.ndarray
    plus: int
    minus: int
    basis: np.ndarray = field(repr=False)
    basis_inv: np.ndarray = field(repr=False)

    @property
    def p(self) -> int:
        if self.plus != self.minus:
            raise DimensionMismatch(
                f"involution has multiplicities {self.plus}, {self.minus}; p undefined")
        return self.plus

    @property
    def dim(self) -> int:
        return self.R.shape[0]

    @property
    def is_canonical(self) -> bool:
        return np.array_equal(self.R, standard_involution(self.plus, self.minus))

    @classmethod
    def from_array(cls, R, tol_inv: float = 1e-10) -> "InvolutionMatrix":
        R = np.array(R, dtype=float)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise DimensionMismatch(f"involution must be square, got shape {R.shape}")
        N = R.shape[0]
        if max_norm(R @ R - np.eye(N)) > tol_inv:
            raise ValueError("R @ R differs from the identity")
        bases = []
        for sign in (1.0, -1.0):
            proj = 0.5 * (np.eye(N) + sign * R)
            if N == 0:
                bases.append(np.zeros((0, 0)))
                continue
            u, sv, _ = np.linalg.svd(proj)
            rank = int(np.sum(sv > 0.5))
            bases.append(u[:, :rank])
        plus, minus = bases[0].shape[1], bases[1].shape[1]
        if plus + minus != N:
            raise ValueError("R is not diagonalizable with eigenvalues +-1")
        if R.shape[0] and np.array_equal(R, standard_involution(plus, minus)):
            basis = np.eye(N)
        else:
            basis = np.hstack(bases) if N else np.zeros((0, 0))
        return cls(R=R, plus=plus, minus=minus, basis=basis,
                   basis_inv=np.linalg.inv(basis) if N else basis)

    @classmethod
    def standard(cls, p: int, minus: int | None = None) -> "InvolutionMatrix":
        return cls.from_array(standard_involution(p, p if minus is None else minus))


def standard_involution(plus: int, minus: int | None = None) -> np.ndarray:
    minus = plus if minus is None else minus
    return np.diag(np.concatenate([np.ones(plus), -np.ones(minus)]))


def as_involution(R) -> InvolutionMatrix:
    return R if isinstance(R, InvolutionMatrix) else InvolutionMatrix.from_array(R)


def _check_shapes(M, R: InvolutionMatrix) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape != R.R.shape:
        raise DimensionMismatch(f"M has shape {M.shape}, R has shape {R.R.shape}")
    return M


def is_infinitesimally_reversible(M, R, tol: float = DEFAULT_TOL) -> bool:
    R = as_involution(R)
    M = _check_shapes(M, R)
    return max_norm(M @ R.R + R.R @ M) < tol


def project_reversible(B, R) -> np.ndarray:
    """Anti-commuting part ``(B - R B R^{-1}) / 2`` of an arbitrary matrix."""
    R = as_involution(R)
    B = _check_shapes(B, R)
    return 0.5 * (B - R.R @ B @ R.R)


@dataclass(frozen=True)
class SpectrumForm:
    nu1: int
    nu2: int
    nu3: int
    alpha: tuple[float, ...]
    beta: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if min(self.nu1, self.nu2, self.nu3) < 0:
            raise ValueError("class counts must be nonnegative")
        if len(self.alpha) != self.nu1 + self.nu3 or len(self.beta) != self.nu2 + self.nu3:
            raise ValueError("alpha/beta lengths inconsistent with class counts")
        if any(a <= 0 for a in self.alpha) or any(b <= 0 for b in self.beta):
            raise ValueError("alpha and beta must be strictly positive")

    @property
    def p(self) -> int:
        return self.nu1 + self.nu2 + 2 * self.nu3

    @property
    def nu(self) -> int:
        return self.nu2 + self.nu3

    @property
    def kinds(self) -> tuple[int, int, int]:
        return (self.nu1, self.nu2, self.nu3)

    def vector(self) -> np.ndarray:
        """Spectral coordinates ``(alpha, beta)`` as one vector of length p."""
        return np.array(self.alpha + self.beta, dtype=float)

    def sorted(self) -> "SpectrumForm":
        real = sorted(self.alpha[: self.nu1])
        imag = sorted(self.beta[: self.nu2])
        quad = sorted(zip(self.alpha[self.nu1:], self.beta[self.nu2:]))
        return SpectrumForm(self.nu1, self.nu2, self.nu3,
                            tuple(real) + tuple(a for a, _ in quad),
                            tuple(imag) + tuple(b for _, b in quad))

    def to_dict(self) -> dict:
        return {"nu1": self.nu1, "nu2": self.nu2, "nu3": self.nu3,
                "alpha": list(self.alpha), "beta": list(self.beta)}

    def isclose(self, other: "SpectrumForm", rtol: float = 1e-10) -> bool:
        if self.kinds != other.kinds:
            return False
        return bool(np.allclose(self.vector(), other.vector(), rtol=rtol, atol=0.0))


@dataclass
class _EigenGroup:
    kind: str            # "real", "imag" or "quad"
    eigs: list           # all eigenvalues of the group, group-internal order fixed
    alpha: float = 0.0
    beta: float = 0.0


def _pair_negations(eigs: np.ndarray, tol_abs: float) -> list[tuple[int, int]]:
    """Greedy nearest-negation matching followed by a global check."""
    remaining = list(range(len(eigs)))
    pairs = []
    while remaining:
        i = remaining.pop(0)
        if not remaining:
            raise PairingViolation(f"eigenvalue {eigs[i]} has no partner -lambda")
        dist = [abs(eigs[i] + eigs[j]) for j in remaining]
        j = remaining.pop(int(np.argmin(dist)))
        pairs.append((i, j))
    worst = max((abs(eigs[i] + eigs[j]) for i, j in pairs), default=0.0)
    if worst > tol_abs:
        raise PairingViolation(f"(lambda, -lambda) matching residual {worst:.3e} exceeds {tol_abs:.3e}")
    return pairs


def _eigen_groups(M: np.ndarray, tol: float) -> tuple[SpectrumForm, list[_EigenGroup]]:
    scale = max(max_norm(M), np.finfo(float).tiny)
    tol_abs = tol * scale
    eigs = np.linalg.eigvals(M) if M.size else np.zeros(0, dtype=complex)
    small = np.abs(eigs) < tol_abs
    if small.any():
        raise ZeroEigenvalue(f"|lambda| = {np.abs(eigs).min():.3e} below {tol_abs:.3e}")
    if len(eigs) > 1:
        d = np.abs(eigs[:, None] - eigs[None, :])
        d[np.diag_indices(len(eigs))] = np.inf
        if d.min() < tol_abs:
            raise NonSimpleSpectrum(f"eigenvalues {d.min():.3e} apart (threshold {tol_abs:.3e})")
    _pair_negations(eigs, tol_abs)
    # one representative per +- pair: Re > 0, or Re == 0 and Im > 0
    reps = []
    for lam in eigs:
        if abs(lam.real) <= tol_abs:
            if lam.imag > 0:
                reps.append(lam)
        elif lam.real > 0:
            reps.append(lam)
    real, imag, quad = [], [], []
    for lam in reps:
        if abs(lam.imag) <= tol_abs:
            real.append(abs(lam.real))
        elif abs(lam.real) <= tol_abs:
            imag.append(abs(lam.imag))
        elif lam.imag > 0:
            quad.append((lam.real, lam.imag))
    n_quad_members = sum(1 for lam in reps if abs(lam.imag) > tol_abs and abs(lam.real) > tol_abs)
    if n_quad_members != 2 * len(quad):
        raise PairingViolation("complex eigenvalues do not close into quadruplets")
    real.sort()
    imag.sort()
    quad.sort()
    form = SpectrumForm(len(real), len(imag), len(quad),
                        tuple(real) + tuple(a for a, _ in quad),
                        tuple(imag) + tuple(b for _, b in quad))
    if 2 * form.p != M.shape[0]:
        raise PairingViolation("classified eigenvalues do not exhaust the spectrum")

    def nearest(z):
        return eigs[int(np.argmin(np.abs(eigs - z)))]

    groups = []
    for a in real:
        groups.append(_EigenGroup("real", [nearest(a), nearest(-a)], alpha=a))
    groups_imag = [_EigenGroup("imag", [nearest(1j * b), nearest(-1j * b)], beta=b) for b in imag]
    groups_quad = []
    for a, b in quad:
        lam = complex(a, b)
        groups_quad.append(_EigenGroup(
            "quad", [nearest(lam), nearest(lam.conjugate()), nearest(-lam), nearest(-lam.conjugate())],
            alpha=a, beta=b))
    return form, groups + groups_imag + groups_quad


def classify_spectrum(M, R, tol: float = DEFAULT_TOL) -> SpectrumForm:
    """Classify the spectrum of an anti-commuting matrix into its form."""
    R = as_involution(R)
    M = _check_shapes(M, R)
    if R.plus != R.minus:
        raise DimensionMismatch("spectrum form needs an involution with equal multiplicities")
    if max_norm(M @ R.R + R.R @ M) > tol * max(1.0, max_norm(M)):
        raise PairingViolation("M does not anti-commute with R")
    form, _ = _eigen_groups(M, tol)
    return form


def zero_exponent_multiplicity(M, R, tol: float = DEFAULT_TOL) -> int:
    """Number of (numerically) zero eigenvalues; at least |b - a| for valid input."""
    R = as_involution(R)
    M = _check_shapes(M, R)
    scale = max_norm(M)
    if scale == 0.0:
        return M.shape[0]
    eigs = np.linalg.eigvals(M)
    zero = np.abs(eigs) < tol * scale
    _pair_negations(eigs[~zero], tol * scale)
    return int(zero.sum())


def synthesize(form: SpectrumForm) -> tuple[np.ndarray, np.ndarray]:
    """Normal-form matrix with the given spectrum, anti-commuting with diag(I_p, -I_p).

    The matrix is ``[[0, I], [C, 0]]`` in the (+1, -1) splitting, so its
    eigenvalues are the square roots of the eigenvalues of ``C``.
    """
    p = form.p
    C = np.zeros((p, p))
    i = 0
    for a in form.alpha[: form.nu1]:
        C[i, i] = a * a
        i += 1
    for b in form.beta[: form.nu2]:
        C[i, i] = -b * b
        i += 1
    for a, b in zip(form.alpha[form.nu1:], form.beta[form.nu2:]):
        re, im = a * a - b * b, 2 * a * b
        C[i:i + 2, i:i + 2] = [[re, -im], [im, re]]
        i += 2
    M = np.zeros((2 * p, 2 * p))
    M[:p, p:] = np.eye(p)
    M[p:, :p] = C
    return M, standard_involution(p)


def _shift_generators(M: np.ndarray, tol: float) -> tuple[SpectrumForm, list[np.ndarray]]:
    """Real anti-commuting matrices commuting with M that shift one spectral coordinate each.

    Built from spectral projectors: for a real pair the generator is
    ``P(+a) - P(-a)``; for an imaginary pair ``i P(ib) - i P(-ib)``; quadruplets
    get one generator for the real part and one for the imaginary part.
    Returned order matches ``SpectrumForm.vector()``.
    """
    form, groups = _eigen_groups(M, tol)
    eigs, V = np.linalg.eig(M)
    Vinv = np.linalg.inv(V)

    def proj(lam):
        j = int(np.argmin(np.abs(eigs - lam)))
        return np.outer(V[:, j], Vinv[j, :])

    alpha_gens, beta_gens = [], []
    for g in groups:
        if g.kind == "real":
            alpha_gens.append(proj(g.eigs[0]) - proj(g.eigs[1]))
        elif g.kind == "imag":
            beta_gens.append(1j * proj(g.eigs[0]) - 1j * proj(g.eigs[1]))
    quad_alpha, quad_beta = [], []
    for g in groups:
        if g.kind == "quad":
            lam, lamc, mlam, mlamc = (proj(z) for z in g.eigs)
            quad_alpha.append(lam + lamc - mlam - mlamc)
            quad_beta.append(1j * lam - 1j * lamc - 1j * mlam + 1j * mlamc)
    gens = alpha_gens + quad_alpha + beta_gens + quad_beta
    return form, [np.real(G) for G in gens]


class Unfolding:
    """Family ``M_new(mu, chi) = M(mu) + sum_j chi_j B_j(mu)`` with ``S = p`` parameters.

    ``B_j(mu)`` are spectral-projector generators of ``M(mu)`` (see
    :func:`_shift_generators`), so ``(alpha, beta)`` of ``M_new(mu, chi)``
    equals ``(alpha, beta)(mu) + chi`` while the ordering of eigenvalues is
    preserved, and ``M_new(mu, 0) = M(mu)`` exactly.
    """

    def __init__(self, family: Callable, R: InvolutionMatrix, s: int, tol: float = DEFAULT_TOL):
        self.family = family
        self.R = R
        self.s = s
        self.tol = tol
        M0 = np.asarray(family(np.zeros(s)), dtype=float)
        self.base_form = classify_spectrum(M0, R, tol)
        self.S = self.base_form.p

    def base(self, mu) -> np.ndarray:
        return np.asarray(self.family(np.asarray(mu, dtype=float)), dtype=float)

    def __call__(self, mu, chi=None) -> np.ndarray:
        M = self.base(mu)
        if self.S == 0 or chi is None:
            return M
        chi = np.asarray(chi, dtype=float)
        if not np.any(chi):
            return M
        form, gens = _shift_generators(M, self.tol)
        if form.kinds != self.base_form.kinds:
            raise NonSimpleSpectrum("spectrum form changed along the parameter domain")
        return M + np.tensordot(chi, np.array(gens), axes=1)

    def spectrum(self, mu, chi=None) -> np.ndarray:
        return classify_spectrum(self(mu, chi), self.R, self.tol).vector()

    def chi_jacobian(self, mu=None, step: float = 1e-6) -> np.ndarray:
        mu = np.zeros(self.s) if mu is None else np.asarray(mu, dtype=float)
        base = self.spectrum(mu, np.zeros(self.S))
        cols = []
        for j in range(self.S):
            e = np.zeros(self.S)
            e[j] = step
            cols.append((self.spectrum(mu, e) - self.spectrum(mu, -e)) / (2 * step))
        return np.array(cols).T if cols else np.zeros((len(base), 0))


def build_unfolding(family, R, s: int | None = None, tol: float = DEFAULT_TOL,
                    rank_tol: float = 1e-6) -> Unfolding:
    """Versal-type unfolding of a reversible matrix family with ``S = p`` extra parameters.

    ``family`` is a callable ``mu -> M(mu)`` (``s`` must then be given) or a
    constant matrix (``s = 0``).
    """
    R = as_involution(R)
    if not callable(family):
        const = np.asarray(family, dtype=float)
        family, s = (lambda mu, _c=const: _c), 0
    if s is None:
        raise ValueError("parameter dimension s required for callable families")
    unf = Unfolding(family, R, s, tol)
    if unf.S:
        J = unf.chi_jacobian()
        sv = np.linalg.svd(J, compute_uv=False)
        if sv.min() < rank_tol * max(1.0, sv.max()):
            raise RankDeficient(f"spectral map has rank < {unf.S} (min singular value {sv.min():.2e})")
    return unf


def random_reversible(rng: np.random.Generator, p: int, minus: int | None = None) -> np.ndarray:
    """Random matrix anti-commuting with the standard involution."""
    R = standard_involution(p, minus)
    B = rng.standard_normal(R.shape)
    return 0.5 * (B - R @ B @ R)


def spectrum_of(family: Callable, R, mus: Sequence, tol: float = DEFAULT_TOL) -> list[SpectrumForm]:
    return [classify_spectrum(family(np.asarray(mu, dtype=float)), R, tol) for mu in mus]
