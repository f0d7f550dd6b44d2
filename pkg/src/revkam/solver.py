"""Fourier-Newton computation of reducible invariant tori.

The system is taken in its extended form: the frequency is an independent
parameter ``omega`` and the Floquet matrix may carry unfolding parameters
``chi``.  For a target ``(omega0, mu0, chi0)`` we look for the coordinate
change

    x = xb + X(xb)
    (y, z) = K(xb) + T(xb) (yb, zb),      K = (Y0, Z0),  T = I + [[Y1, Y2], [Z1, Z2]]

and parameter shifts ``sigma = v``, ``omega = omega0 + u``,
``(mu, chi) = (mu0, chi0) + (w, W)`` that bring the field to the form
``xb' = omega0 + O(yb, zb)``, ``yb' = O2``, ``zb' = Lam zb + O2`` with
``Lam`` the Floquet matrix at the target.

Unknown functions are stored as cos or sin series over one half of the
Fourier box ``|k|_inf <= N_F``; the parity of each function follows from
the requirement that the change commutes with the involution.  Newton steps
are solved by GMRES with finite-difference Jacobian-vector products,
preconditioned by the exact inverse of the unperturbed linearization, which
is block diagonal in the Fourier modes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import DomainExceeded, NewtonDiverged, RankDeficient, SmallDivisorBreakdown
from .model import PERTURBATION, SLOTS, ModelFamily, half_modes
from .revlin import Unfolding, classify_spectrum

log = logging.getLogger(__name__)

FD_STEP = math.sqrt(np.finfo(float).eps)
# a warm start may reuse the preconditioner of a target at most this far away
PRECOND_REUSE = 1e-3


@dataclass
class SolverOptions:
    N_F: int = 16
    tol_newton: float = 1e-11
    max_iters: int = 20
    grid_factor: int = 2
    divisor_tol: float = 1e-13
    rank_tol: float = 1e-10
    freeze_v: bool = False
    gmres_restart: int = 40


class ExtendedSystem:
    """Field with ``omega`` replacing the frequency map and ``M`` optionally unfolded."""

    def __init__(self, model: ModelFamily, unfolding: Unfolding | None = None, perturbed: bool = True):
        self.model = model
        self.dims = model.dims
        self.unfolding = unfolding
        slots = tuple(s for s in SLOTS if s not in ("Omega", "Delta", "M") and (perturbed or s not in PERTURBATION))
        self.compiled = model.compiled(slots)
        self.perturbed = perturbed

    @property
    def S(self) -> int:
        return 0 if self.unfolding is None else self.dims.p

    def without_perturbation(self) -> "ExtendedSystem":
        return ExtendedSystem(self.model, self.unfolding, perturbed=False)

    def matrix(self, mu, chi=None) -> np.ndarray:
        if self.unfolding is None:
            return self.model.M(mu)
        return self.unfolding(mu, chi)

    def spectrum(self, mu, chi=None) -> np.ndarray:
        if not self.dims.p:
            return np.zeros(0)
        return classify_spectrum(self.matrix(mu, chi), self.model.R).vector()

    def spectrum_jacobian(self, mu, chi=None, step: float = 1e-6) -> np.ndarray:
        """Derivative of (alpha, beta) with respect to (mu, chi)."""
        mu = np.asarray(mu, float)
        chi = np.zeros(self.S) if chi is None else np.asarray(chi, float)
        base = np.concatenate([mu, chi])
        cols = []
        for j in range(len(base)):
            e = np.zeros(len(base))
            e[j] = step
            hi, lo = base + e, base - e
            cols.append((self.spectrum(hi[:len(mu)], hi[len(mu):] if self.S else None)
                         - self.spectrum(lo[:len(mu)], lo[len(mu):] if self.S else None)) / (2 * step))
        return np.array(cols).T.reshape(self.dims.p, len(base))

    def field(self, x, y, z, sigma, omega, mu, chi=None, jacobian=False, check=True):
        """Velocity (and state Jacobian) at points ``x, y, z`` with shared parameters."""
        d = self.dims
        N = x.shape[0]
        sigma, mu = np.asarray(sigma, float), np.asarray(mu, float)
        if check:
            for key, arr in (("y", y), ("z", z), ("sigma", sigma), ("mu", mu)):
                if arr.size and np.abs(np.real(arr)).max() > self.model.radii[key] * (1 + 1e-12):
                    raise DomainExceeded(f"|{key}| exceeds the declared radius {self.model.radii[key]}")
        v = np.concatenate([y, z, np.broadcast_to(sigma, (N, d.m)), np.broadcast_to(mu, (N, d.s))], axis=1)
        out = self.compiled.evaluate(np.real(x), v, jacobian=jacobian)
        V, J = out if jacobian else (out, None)
        V = V.astype(np.result_type(V, y, z), copy=True)
        V[:, :d.n] += omega
        V[:, d.n:d.n + d.m] += sigma
        if d.p:
            Mz = self.matrix(mu, chi)
            V[:, d.n + d.m:] += z @ Mz.T
            if jacobian:
                J = J.copy()
                J[:, d.n + d.m:, d.n + d.m:] += Mz
        return (V, J) if jacobian else V


class FourierGrid:
    """Half-box cos/sin tables and their values on a uniform grid of the torus."""

    def __init__(self, n: int, N_F: int, factor: int = 2):
        self.n, self.N_F = n, N_F
        self.G = factor * (2 * N_F + 1)
        self.modes = np.array(half_modes(n, N_F), dtype=np.int64).reshape(-1, n)
        self.nH = len(self.modes)
        self.shape = (self.G,) * n
        self.P = self.G ** n
        self.pos = tuple((self.modes % self.G).T.tolist())
        self.neg = tuple(((-self.modes) % self.G).T.tolist())
        freq = np.fft.fftfreq(self.G, 1.0 / self.G)
        self.wave = np.stack(np.meshgrid(*[freq] * n, indexing="ij"), 0) if n else np.zeros((0,))
        axes = [2 * math.pi * np.arange(self.G) / self.G] * n
        self.points = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n)

    def spectrum(self, coeffs, parity):
        """Full complex FFT arrays (nf, G, ..., G) of real cos/sin series."""
        nf = coeffs.shape[0]
        F = np.zeros((nf,) + self.shape, dtype=complex)
        even = parity > 0
        half = 0.5 * coeffs[:, 1:]
        pos = tuple(np.array(ix)[1:] for ix in self.pos)
        neg = tuple(np.array(ix)[1:] for ix in self.neg)
        F[(slice(None),) + pos] = np.where(even[:, None], half, -1j * half)
        F[(slice(None),) + neg] = np.where(even[:, None], half, 1j * half)
        F[(slice(None),) + (0,) * self.n] = np.where(even, coeffs[:, 0], 0.0)
        return F

    def values(self, coeffs, parity, grad=False):
        F = self.spectrum(coeffs, parity)
        axes = tuple(range(1, self.n + 1))
        vals = (np.fft.ifftn(F, axes=axes).real * self.P).reshape(len(coeffs), self.P)
        if not grad:
            return vals
        grads = np.stack([(np.fft.ifftn(1j * self.wave[l] * F, axes=axes).real * self.P).reshape(len(coeffs), self.P)
                          for l in range(self.n)], axis=1)
        return vals, grads

    def analyze(self, vals, parity):
        """cos/sin coefficients of real grid functions (nf, P) with the given parities."""
        nf = vals.shape[0]
        axes = tuple(range(1, self.n + 1))
        F = np.fft.fftn(vals.reshape((nf,) + self.shape), axes=axes) / self.P
        Fk = F[(slice(None),) + self.pos]
        out = np.where((parity > 0)[:, None], 2 * Fk.real, -2 * Fk.imag)
        out[:, 0] = np.where(parity > 0, Fk[:, 0].real, 0.0)
        return out


def _function_layout(n: int, m: int, p: int):
    """Parities of the unknown functions and of the residual functions."""
    sgn = np.array([-1] * m + [1] * p + [-1] * p)
    N = m + 2 * p
    unknown = np.concatenate([-np.ones(n, int), sgn, np.outer(sgn, sgn).ravel()])
    residual = np.concatenate([np.ones(n, int), -sgn, -np.outer(sgn, sgn).ravel()])
    return unknown, residual, N


@dataclass
class TorusSolution:
    """Coordinate change, counterterms and convergence data.

    Fourier tables are complex arrays indexed like ``modes`` (all k with
    ``|k|_inf <= N_F``); a table of shape ``(len(modes), r, c)`` holds the
    coefficients of an r x c matrix function.
    """

    modes: np.ndarray
    X: np.ndarray
    Y0: np.ndarray
    Y1: np.ndarray
    Y2: np.ndarray
    Z0: np.ndarray
    Z1: np.ndarray
    Z2: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    W: np.ndarray
    residual: float
    newton_iters: int
    history: list
    omega0: np.ndarray
    mu0: np.ndarray
    chi0: np.ndarray
    Lam: np.ndarray
    N_F: int
    packed: np.ndarray = field(repr=False, default=None)
    precond: tuple = field(repr=False, default=None, compare=False)

    def tables(self) -> dict:
        return {name: getattr(self, name) for name in ("X", "Y0", "Y1", "Y2", "Z0", "Z1", "Z2")}

    def to_dict(self) -> dict:
        def enc(a):
            return {"re": np.real(a).tolist(), "im": np.imag(a).tolist()}
        return {"modes": self.modes.tolist(), "N_F": self.N_F,
                "tables": {k: enc(v) for k, v in self.tables().items()},
                "u": self.u.tolist(), "v": self.v.tolist(), "w": self.w.tolist(), "W": self.W.tolist(),
                "residual": self.residual, "newton_iters": self.newton_iters, "history": list(self.history),
                "omega0": self.omega0.tolist(), "mu0": self.mu0.tolist(), "chi0": self.chi0.tolist()}


class _TorusProblem:
    def __init__(self, system: ExtendedSystem, omega0, mu0, chi0, opts: SolverOptions):
        d = system.dims
        self.system, self.d, self.opts = system, d, opts
        self.n, self.m, self.p = d.n, d.m, d.p
        self.omega0 = np.asarray(omega0, float)
        self.mu0 = np.asarray(mu0, float)
        self.chi0 = np.zeros(system.S) if chi0 is None else np.asarray(chi0, float)
        self.grid = FourierGrid(d.n, opts.N_F, opts.grid_factor)
        self.upar, self.rpar, self.N = _function_layout(d.n, d.m, d.p)
        self.nf = len(self.upar)
        N, p = self.N, self.p
        self.Lam = system.matrix(self.mu0, self.chi0 if system.S else None) if p else np.zeros((0, 0))
        self.Lam0 = np.zeros((N, N))
        self.Lam0[self.m:, self.m:] = self.Lam
        if p:
            Jspec = system.spectrum_jacobian(self.mu0, self.chi0 if system.S else None)
            if np.linalg.matrix_rank(Jspec, tol=1e-8) < p:
                raise RankDeficient("the spectrum map is not submersive at the target")
            self.pmap = np.linalg.pinv(Jspec)                 # (s + S, p)
            self.gauge_mats = [np.linalg.matrix_power(self.Lam, 2 * j) for j in range(p)]
        else:
            self.pmap = np.zeros((d.s + system.S, 0))
            self.gauge_mats = []
        self.nparams = d.n + d.m + p
        self.n_even_u = int((self.upar > 0).sum())
        self.n_even_r = int((self.rpar > 0).sum())
        self.ngauge = d.m * d.m + p
        self.nmean = self.n_even_u + self.nparams
        if self.nmean != self.n_even_r + self.ngauge:
            raise RankDeficient("mean equations and unknowns do not balance")
        self.size = self.nmean + (self.grid.nH - 1) * self.nf

    # ---- packing ----------------------------------------------------------------
    def unpack(self, U):
        nH, nf = self.grid.nH, self.nf
        coeffs = np.zeros((nf, nH))
        even = self.upar > 0
        coeffs[even, 0] = U[:self.n_even_u]
        params = U[self.n_even_u:self.nmean]
        coeffs[:, 1:] = U[self.nmean:].reshape(nH - 1, nf).T
        return coeffs, params

    def pack(self, coeffs, params):
        return np.concatenate([coeffs[self.upar > 0, 0], params, coeffs[:, 1:].T.ravel()])

    def split_params(self, params):
        n, m = self.n, self.m
        u, v, eta = params[:n], params[n:n + m], params[n + m:]
        shift = self.pmap @ eta
        s = self.d.s
        return u, v, shift[:s], shift[s:]

    # ---- residual ---------------------------------------------------------------
    def residual(self, U, system=None):
        system = system or self.system
        n, m, N, P = self.n, self.m, self.N, self.grid.P
        coeffs, params = self.unpack(U)
        vals, grads = self.grid.values(coeffs, self.upar, grad=True)
        X, gX = vals[:n].T, grads[:n].transpose(2, 0, 1)                    # (P,n), (P,n,n)
        K, gK = vals[n:n + N].T, grads[n:n + N].transpose(2, 0, 1)          # (P,N), (P,N,n)
        T = vals[n + N:].T.reshape(P, N, N) + np.eye(N)
        gT = grads[n + N:].transpose(2, 0, 1).reshape(P, N, N, n)
        dT = gT @ self.omega0
        u, v, w, W = self.split_params(params)
        x = self.grid.points + X
        V, J = system.field(x, K[:, :m], K[:, m:], v, self.omega0 + u, self.mu0 + w,
                            (self.chi0 + W) if system.S else None, jacobian=True)
        Dx = np.eye(n) + gX
        Rx = V[:, :n] - Dx @ self.omega0
        Rn = V[:, n:] - gK @ self.omega0
        Jxn, Jnn = J[:, :n, n:], J[:, n:, n:]
        Nmat = np.linalg.solve(Dx, Jxn @ T)
        R1 = Jnn @ T - gK @ Nmat - dT - T @ self.Lam0
        rvals = np.concatenate([Rx.T, Rn.T, R1.reshape(P, N * N).T], axis=0)
        rc = self.grid.analyze(rvals, self.rpar)
        Y1mean = coeffs[n + N:, 0].reshape(N, N)[:m, :m]
        gauge = list(Y1mean.ravel())
        if self.p:
            Z2mean = coeffs[n + N:, 0].reshape(N, N)[m:, m:]
            gauge += [float(np.sum(Z2mean * G)) for G in self.gauge_mats]
        return np.concatenate([rc[self.rpar > 0, 0], gauge, rc[:, 1:].T.ravel()])

    # ---- preconditioner -----------------------------------------------------------
    def build_preconditioner(self):
        """Exact inverse of the linearization of the unperturbed problem at U = 0."""
        base = self.system.without_perturbation()
        nH, nf = self.grid.nH, self.nf
        zero = np.zeros(self.size)
        h = 1e-6

        def jvp0(delta):
            return (self.residual(zero + h * delta, base) - self.residual(zero - h * delta, base)) / (2 * h)

        blocks = np.zeros((nH - 1, nf, nf))
        mean = np.zeros((self.nmean, self.nmean))
        even_index = np.cumsum(self.upar > 0) - 1
        for f in range(nf):
            coeffs = np.zeros((nf, nH))
            coeffs[f, :] = 1.0
            out = jvp0(self.pack(coeffs, np.zeros(self.nparams)))
            blocks[:, :, f] = out[self.nmean:].reshape(nH - 1, nf)
            if self.upar[f] > 0:
                mean[:, even_index[f]] = out[:self.nmean]
        for j in range(self.nparams):
            params = np.zeros(self.nparams)
            params[j] = 1.0
            out = jvp0(self.pack(np.zeros((nf, nH)), params))
            mean[:, self.n_even_u + j] = out[:self.nmean]
        frozen = self._frozen_mask()
        mean[:, frozen[:self.nmean]] = 0.0
        if nH > 1:
            smin = np.linalg.svd(blocks, compute_uv=False)[:, -1]
            worst = int(np.argmin(smin))
            if smin[worst] < self.opts.divisor_tol:
                raise SmallDivisorBreakdown(
                    f"divisor {smin[worst]:.3e} at mode {self.grid.modes[worst + 1].tolist()}")
            self.block_inv = np.linalg.inv(blocks)
        else:
            self.block_inv = np.zeros((0, nf, nf))
        sv = np.linalg.svd(mean, compute_uv=False)
        expected = int(frozen[:self.nmean].sum())
        if not self.opts.freeze_v and sv.size and sv[-1] < self.opts.rank_tol * sv[0]:
            raise RankDeficient(f"mean block singular beyond the gauge: sigma_min/sigma_max = {sv[-1] / sv[0]:.2e}")
        self.mean_inv = np.linalg.pinv(mean, rcond=1e-12) if expected else np.linalg.inv(mean)

    def _frozen_mask(self):
        mask = np.zeros(self.size, dtype=bool)
        if self.opts.freeze_v:
            start = self.n_even_u + self.n
            mask[start:start + self.m] = True
        return mask

    def precondition(self, r):
        nH, nf = self.grid.nH, self.nf
        out = np.empty_like(r)
        out[:self.nmean] = self.mean_inv @ r[:self.nmean]
        modes = r[self.nmean:].reshape(nH - 1, nf)
        out[self.nmean:] = np.einsum("kij,kj->ki", self.block_inv, modes).ravel()
        return out


def _norm(r):
    return float(np.abs(r).max(initial=0.0))


def solve_source_torus(system, target, options: SolverOptions | None = None, warm: TorusSolution | None = None,
                       dioph=None) -> TorusSolution:
    """Newton iteration for the invariant reducible torus at ``target = (omega0, mu0[, chi0])``.

    ``system`` is an :class:`ExtendedSystem` or a model (used without unfolding).
    ``dioph = (tau, gamma, K_max)`` optionally checks the target frequencies
    first.  Raises NewtonDiverged, SmallDivisorBreakdown or RankDeficient.
    """
    opts = options or SolverOptions()
    if isinstance(system, ModelFamily):
        system = ExtendedSystem(system)
    omega0, mu0 = target[0], target[1]
    chi0 = target[2] if len(target) > 2 else None
    prob = _TorusProblem(system, omega0, mu0, chi0, opts)
    if dioph is not None and prob.p:
        from .diophantine import DiophantineParams, FrequencyData, check_affinely_diophantine
        form = classify_spectrum(prob.Lam, system.model.R)
        tau, gamma, K_max = dioph
        verdict = check_affinely_diophantine(FrequencyData(prob.omega0, form.beta),
                                             DiophantineParams(tau, gamma, 2, K_max))
        if verdict.violated:
            raise SmallDivisorBreakdown(f"target violates the Diophantine condition at k={verdict.k}, l={verdict.ell}")

    U = np.zeros(prob.size)
    if warm is not None and warm.packed is not None and len(warm.packed) == prob.size:
        U = warm.packed.copy()
    frozen = prob._frozen_mask()
    U[frozen] = 0.0
    precond_ready = False
    if warm is not None and warm.precond is not None and len(warm.packed) == prob.size:
        moved = max(np.abs(prob.omega0 - warm.omega0).max(initial=0.0), np.abs(prob.mu0 - warm.mu0).max(initial=0.0),
                    np.abs(prob.chi0 - warm.chi0).max(initial=0.0))
        if moved <= PRECOND_REUSE and warm.precond[2] == opts.freeze_v:
            prob.block_inv, prob.mean_inv = warm.precond[:2]
            precond_ready = True

    def F(vec):
        try:
            return prob.residual(vec)
        except DomainExceeded as exc:
            raise NewtonDiverged(f"iterate left the domain: {exc}") from None

    history = []
    r = F(U)
    rn = _norm(r)
    history.append(rn)
    iters = 1
    increases = 0
    while rn >= opts.tol_newton:
        if not np.isfinite(rn):
            raise NewtonDiverged("residual is not finite")
        if iters >= opts.max_iters:
            raise NewtonDiverged(f"no convergence in {opts.max_iters} iterations (residual {rn:.3e})")
        if not precond_ready:
            prob.build_preconditioner()
            precond_ready = True
        scale = 1.0 + np.linalg.norm(U)

        def jvp(delta, U=U, r=r):
            delta = np.where(frozen, 0.0, delta)
            nd = np.linalg.norm(delta)
            if nd == 0:
                return np.zeros_like(delta)
            h = FD_STEP * scale / nd
            return (F(U + h * delta) - r) / h

        A = LinearOperator((prob.size, prob.size), matvec=jvp, dtype=float)
        Mop = LinearOperator((prob.size, prob.size), matvec=prob.precondition, dtype=float)
        forcing = min(1e-2, max(rn, 1e-14))
        step, info = gmres(A, -r, M=Mop, rtol=forcing, atol=0.0, restart=opts.gmres_restart, maxiter=3)
        step[frozen] = 0.0
        U = U + step
        r = F(U)
        new = _norm(r)
        iters += 1
        increases = increases + 1 if new > rn else 0
        history.append(new)
        log.debug("newton iteration %d: residual %.3e (gmres info %d)", iters, new, info)
        rn = new
        if increases >= 2:
            raise NewtonDiverged(f"residual increased on two consecutive iterations ({history})")
    sol = _make_solution(prob, U, rn, iters, history)
    if precond_ready:
        sol.precond = (prob.block_inv, prob.mean_inv, opts.freeze_v)
    return sol


def _full_tables(grid: FourierGrid, coeffs, parity):
    """Complex coefficients over the full box from half-box cos/sin series."""
    n, N_F = grid.n, grid.N_F
    import itertools
    full = np.array(list(itertools.product(range(-N_F, N_F + 1), repeat=n)), dtype=np.int64).reshape(-1, n)
    index = {tuple(k): i for i, k in enumerate(full.tolist())}
    out = np.zeros((coeffs.shape[0], len(full)), dtype=complex)
    for h, k in enumerate(grid.modes.tolist()):
        i, j = index[tuple(k)], index[tuple(-c for c in k)]
        if h == 0:
            out[:, i] = np.where(parity > 0, coeffs[:, 0], 0.0)
            continue
        c = coeffs[:, h]
        out[:, i] = np.where(parity > 0, c / 2, -0.5j * c)
        out[:, j] = np.where(parity > 0, c / 2, 0.5j * c)
    return full, out


def _make_solution(prob: _TorusProblem, U, rn, iters, history) -> TorusSolution:
    coeffs, params = prob.unpack(U)
    full, tab = _full_tables(prob.grid, coeffs, prob.upar)
    n, m, N = prob.n, prob.m, prob.N
    K = len(full)
    Tt = tab[n + N:].T.reshape(K, N, N)
    u, v, w, W = prob.split_params(params)
    return TorusSolution(
        modes=full, X=tab[:n].T.copy(), Y0=tab[n:n + m].T.copy(), Y1=Tt[:, :m, :m].copy(),
        Y2=Tt[:, :m, m:].copy(), Z0=tab[n + m:n + N].T.copy(), Z1=Tt[:, m:, :m].copy(), Z2=Tt[:, m:, m:].copy(),
        u=u.copy(), v=v.copy(), w=w.copy(), W=W.copy(), residual=rn, newton_iters=iters, history=history,
        omega0=prob.omega0, mu0=prob.mu0, chi0=prob.chi0, Lam=prob.Lam, N_F=prob.opts.N_F, packed=U.copy())


# ---- independent verification ----------------------------------------------------

def _grid_values(modes, table, G, grad=False):
    """Real values of a full-box complex table on a G^n grid (via FFT)."""
    n = modes.shape[1]
    K = table.shape[0]
    rest = table.shape[1:]
    flat = table.reshape(K, -1)
    F = np.zeros((G,) * n + (flat.shape[1],), dtype=complex)
    idx = tuple((modes % G).T)
    F[idx] = flat
    P = G ** n
    axes = tuple(range(n))
    vals = np.fft.ifftn(F, axes=axes).real.reshape(P, *rest) * P
    if not grad:
        return vals
    freq = np.fft.fftfreq(G, 1.0 / G)
    wave = np.meshgrid(*[freq] * n, indexing="ij")
    grads = [np.fft.ifftn(1j * wave[l][..., None] * F, axes=axes).real.reshape(P, *rest) * P for l in range(n)]
    return vals, np.stack(grads, axis=-1)


def verify_floquet_form(system, solution: TorusSolution, fine_factor: int = 4, step: float = 1e-20) -> dict:
    """Transform the field through the solution on a fine grid and measure the defects.

    ``system`` is a model or :class:`ExtendedSystem` (evaluated at the
    solution's shifted parameters) or a callable ``field(x, y, z)`` that
    accepts complex ``y, z``; linear parts are taken by complex-step
    differentiation.  The target form is ``xb' = omega0 + O(yb, zb)``,
    ``yb' = O2``, ``zb' = Lam zb + O2``.  ``fine_factor`` sets the grid to
    ``fine_factor * (2 N_F + 1)`` points per angle.
    """
    sol = solution
    if isinstance(system, ModelFamily):
        system = ExtendedSystem(system)
    field_fn = extended_field_at(system, sol) if isinstance(system, ExtendedSystem) else system
    n = sol.modes.shape[1]
    m = sol.Y0.shape[1]
    N = m + sol.Z0.shape[1]
    G = fine_factor * (2 * sol.N_F + 1)
    X, gX = _grid_values(sol.modes, sol.X, G, grad=True)                     # (P,n), (P,n,n)
    Kt = np.concatenate([sol.Y0, sol.Z0], axis=1)
    K, gK = _grid_values(sol.modes, Kt, G, grad=True)
    Tt = np.concatenate([np.concatenate([sol.Y1, sol.Y2], axis=2), np.concatenate([sol.Z1, sol.Z2], axis=2)], axis=1)
    T, gT = _grid_values(sol.modes, Tt, G, grad=True)
    T = T + np.eye(N)
    P = X.shape[0]
    axes = [2 * math.pi * np.arange(G) / G] * n
    xb = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n)
    x = xb + X
    Dx = np.eye(n) + gX

    def transformed(nbar):
        nrm = K + T @ nbar
        V = field_fn(x, nrm[:, :m], nrm[:, m:])
        Wx = np.linalg.solve(Dx, V[:, :n, None])[..., 0]
        shift = gK + np.einsum("pabl,b->pal", gT, nbar)
        Wn = np.linalg.solve(T, (V[:, n:] - np.einsum("pal,pl->pa", shift, Wx))[..., None])[..., 0]
        return Wx, Wn

    Wx0, Wn0 = transformed(np.zeros(N))
    lin = np.zeros((P, N, N))
    for j in range(N):
        e = np.zeros(N, dtype=complex)
        e[j] = 1j * step
        _, Wn = transformed(e)
        lin[:, :, j] = Wn.imag / step
    Lam0 = np.zeros((N, N))
    Lam0[m:, m:] = sol.Lam
    lin_defect = lin - Lam0
    fields = {
        "x_const": np.real(Wx0) - sol.omega0,
        "y_const": np.real(Wn0[:, :m]),
        "z_const": np.real(Wn0[:, m:]),
        "y_linear": lin_defect[:, :m, :].reshape(P, -1),
        "z_linear": lin_defect[:, m:, :].reshape(P, -1),
    }
    report = {key: float(np.abs(val).max(initial=0.0)) for key, val in fields.items()}
    report["max"] = max(report.values())
    # locate the dominant Fourier mode of the defect
    stacked = np.concatenate([v.reshape(P, -1) for v in fields.values()], axis=1)
    spec = np.abs(np.fft.fftn(stacked.reshape((G,) * n + (-1,)), axes=tuple(range(n)))).max(axis=-1)
    flat = int(np.argmax(spec))
    k = np.array(np.unravel_index(flat, (G,) * n))
    k = np.where(k > G // 2, k - G, k)
    report["worst_mode"] = [int(c) for c in k]
    report["fine_grid"] = G
    return report


def extended_field_at(system: ExtendedSystem, solution: TorusSolution):
    """Field of the extended system at the solution's shifted parameters."""
    omega = solution.omega0 + solution.u
    mu = solution.mu0 + solution.w
    chi = (solution.chi0 + solution.W) if system.S else None
    return lambda x, y, z: system.field(x, y, z, solution.v, omega, mu, chi, check=False)


def apply_change(solution: TorusSolution, xb, nbar):
    """Evaluate the coordinate change at points ``xb`` (N, n) and normal coordinates ``nbar`` (N, m + 2p)."""
    sol = solution
    xb = np.atleast_2d(np.asarray(xb, float))
    nbar = np.atleast_2d(np.asarray(nbar, float))
    E = np.exp(1j * xb @ sol.modes.T)                                          # (N, K)
    X = (E @ sol.X).real
    K = (E @ np.concatenate([sol.Y0, sol.Z0], axis=1)).real
    Tt = np.concatenate([np.concatenate([sol.Y1, sol.Y2], axis=2), np.concatenate([sol.Z1, sol.Z2], axis=2)], axis=1)
    T = np.einsum("pk,kab->pab", E, Tt).real + np.eye(K.shape[1])
    return xb + X, K + np.einsum("pab,pb->pa", T, nbar)


def parity_check(solution: TorusSolution, R) -> float:
    """Largest violation of the involution compatibility of the tables, coefficient-wise."""
    Rm = np.asarray(getattr(R, "R", R), dtype=float)
    modes = solution.modes
    index = {tuple(k): i for i, k in enumerate(modes.tolist())}
    neg = np.array([index[tuple(-c for c in k)] for k in modes.tolist()])
    s = solution
    checks = [
        s.X[neg] + s.X,
        s.Y0[neg] + s.Y0,
        s.Y1[neg] - s.Y1,
        s.Y2[neg] @ Rm + s.Y2,
        s.Z0[neg] - s.Z0 @ Rm.T,
        Rm @ s.Z1 + s.Z1[neg],
        Rm @ s.Z2 - s.Z2[neg] @ Rm,
    ]
    return float(max((np.abs(c).max(initial=0.0) for c in checks), default=0.0))
