"""Partial preservation of frequencies and Floquet exponents.

The source solver works for the extended system where the frequency
``omega`` and an unfolding parameter ``chi`` are free.  Going back to the
original family means solving implicit equations for the target:

    omega + u = Omega(mu0 + w) + Delta(v, mu0 + w),    chi + W = 0,

then inverting ``mu = mu0 + w`` and finally shifting the selected parameters
``mu_+`` so that the selected frequencies and spectral coordinates of the
perturbed torus equal those of the unperturbed one.  :func:`run_pipeline`
solves all of these at once per grid point; the nested solvers
:func:`solve_phi_psi`, :func:`solve_upsilon` and :func:`solve_xi_plus` are
kept for individual use.
"""

from __future__ import annotations

import io
import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .diophantine import DiophantineParams, FrequencyData, check_affinely_diophantine
from .errors import (
    ConfigError,
    DegenerateJacobian,
    ImplicitSolveFailed,
    RevKamError,
)
from .model import ModelFamily, eval_field
from .nondegeneracy import is_QL_nondegenerate, jet_from_function
from .revlin import build_unfolding, classify_spectrum
from .solver import ExtendedSystem, SolverOptions, solve_source_torus, verify_floquet_form

log = logging.getLogger(__name__)

FD_REL_STEP = 1e-5
IMPLICIT_TOL = 1e-10
FLOQUET_TOL = 1e-7


@dataclass(frozen=True)
class PreservationSpec:
    """Preserved frequency, real-part and imaginary-part indices and the shifted parameters (1-based)."""

    S1: tuple = ()
    S2: tuple = ()
    S3: tuple = ()
    T: tuple = ()

    @property
    def d1(self) -> int:
        return len(self.S1)

    @property
    def d2(self) -> int:
        return len(self.S2)

    @property
    def d3(self) -> int:
        return len(self.S3)

    @property
    def d(self) -> int:
        return len(self.T)

    @classmethod
    def from_dict(cls, raw: dict) -> "PreservationSpec":
        return cls(*(tuple(int(i) for i in raw.get(key, ())) for key in ("S1", "S2", "S3", "T")))

    def to_dict(self) -> dict:
        return {"S1": list(self.S1), "S2": list(self.S2), "S3": list(self.S3), "T": list(self.T)}

    def validate(self, n: int, p: int, s: int, form) -> None:
        ranges = (("S1", self.S1, n), ("S2", self.S2, form.nu1 + form.nu3),
                  ("S3", self.S3, form.nu2 + form.nu3), ("T", self.T, s))
        for name, idx, top in ranges:
            if len(set(idx)) != len(idx) or any(not 1 <= i <= top for i in idx):
                raise ConfigError(f"{name} must contain distinct indices in 1..{top}")
        if self.d1 + self.d2 + self.d3 != self.d:
            raise ConfigError("the number of preserved quantities must equal the number of shifted parameters")
        if self.d > min(n + p, s - 1):
            raise ConfigError(f"d = {self.d} exceeds min(n + p, s - 1) = {min(n + p, s - 1)}")


def _zero_based(idx):
    return np.array([i - 1 for i in idx], dtype=int)


class Chart:
    """Local coordinates ``mu = mu(a, b)`` with ``(Omega_+, alpha_+, beta_+)(mu(a, b)) = b``.

    ``a`` collects the parameters outside ``T`` in their original order.
    """

    def __init__(self, model: ModelFamily, spec: PreservationSpec):
        d = model.dims
        self.model, self.spec = model, spec
        self.form0 = classify_spectrum(model.M(np.zeros(d.s)), model.R) if d.p else None
        spec.validate(d.n, d.p, d.s, self.form0 or _EmptyForm())
        self.plus_idx = _zero_based(spec.T)
        self.minus_idx = np.array([i for i in range(d.s) if i not in set(self.plus_idx)], dtype=int)
        self.P0 = self.preserved(np.zeros(d.s))
        if spec.d:
            J = self.jacobian(np.zeros(d.s))
            smin = np.linalg.svd(J, compute_uv=False)[-1]
            if smin <= 1e-8:
                raise DegenerateJacobian(f"preserved quantities do not depend on the shifted parameters (sigma_min {smin:.2e})")

    def preserved(self, mu) -> np.ndarray:
        """(Omega_+, alpha_+, beta_+) of the unperturbed family at ``mu``."""
        return self.select(self.model.Omega(mu), self._spectrum(mu))

    def select(self, omega, spectrum) -> np.ndarray:
        s = self.spec
        alpha, beta = spectrum
        return np.concatenate([np.asarray(omega)[_zero_based(s.S1)], np.asarray(alpha)[_zero_based(s.S2)],
                               np.asarray(beta)[_zero_based(s.S3)]])

    def _spectrum(self, mu):
        if not self.model.dims.p:
            return np.zeros(0), np.zeros(0)
        form = classify_spectrum(self.model.M(mu), self.model.R)
        return np.array(form.alpha), np.array(form.beta)

    def jacobian(self, mu, step: float = 1e-7) -> np.ndarray:
        cols = []
        for j in self.plus_idx:
            e = np.zeros(len(mu))
            e[j] = step
            cols.append((self.preserved(mu + e) - self.preserved(mu - e)) / (2 * step))
        return np.array(cols).T.reshape(self.spec.d, self.spec.d)

    def compose(self, a, mu_plus) -> np.ndarray:
        mu = np.zeros(self.model.dims.s)
        mu[self.minus_idx] = a
        mu[self.plus_idx] = mu_plus
        return mu

    def mu(self, a, b, tol: float = 1e-14, max_iter: int = 30) -> np.ndarray:
        a, b = np.atleast_1d(np.asarray(a, float)), np.atleast_1d(np.asarray(b, float))
        if not self.spec.d:
            return self.compose(a, ())
        mu_plus = np.zeros(self.spec.d)
        for _ in range(max_iter):
            mu = self.compose(a, mu_plus)
            r = self.preserved(mu) - b
            if np.abs(r).max() <= tol:
                return mu
            mu_plus = mu_plus - np.linalg.solve(self.jacobian(mu), r)
        mu = self.compose(a, mu_plus)
        if np.abs(self.preserved(mu) - b).max() > 1e-12:
            raise DegenerateJacobian("chart inversion did not converge")
        return mu

    def ab(self, mu):
        mu = np.asarray(mu, float)
        return mu[self.minus_idx], self.preserved(mu)

    def validate(self, radius: float = 0.05, points: int = 5) -> float:
        """Worst identity defect of the chart over a small grid around the base point."""
        offsets = np.linspace(-radius, radius, points)
        a_axes = [offsets] * (self.model.dims.s - self.spec.d)
        b_axes = [c + offsets for c in self.P0]
        worst = 0.0
        for a in itertools.product(*a_axes):
            for b in itertools.product(*b_axes):
                mu = self.mu(a, b)
                worst = max(worst, float(np.abs(self.preserved(mu) - np.array(b)).max(initial=0.0)),
                            float(np.abs(mu[self.minus_idx] - np.array(a)).max(initial=0.0)))
        return worst


class _EmptyForm:
    nu1 = nu2 = nu3 = 0


def reparameterize(model: ModelFamily, spec: PreservationSpec) -> Chart:
    return Chart(model, spec)


def check_pair_nondegeneracy(chart: Chart, Q: int = 1, L: int = 2, step: float = 1e-2):
    """(Q, L)-nondegeneracy of ``a -> (Omega_-, beta_-)(mu(a, P0))`` at ``a = 0``."""
    spec, model = chart.spec, chart.model
    minus_freq = [i for i in range(model.dims.n) if i + 1 not in spec.S1]
    nu = chart.form0.nu2 + chart.form0.nu3 if chart.form0 else 0
    minus_beta = [j for j in range(nu) if j + 1 not in spec.S3]
    base = np.zeros(model.dims.s - spec.d)

    def omega_minus(a):
        return model.Omega(chart.mu(a, chart.P0))[minus_freq]

    def beta_minus(a):
        return chart._spectrum(chart.mu(a, chart.P0))[1][minus_beta]

    jo = jet_from_function(omega_minus, base, Q, step) if minus_freq else None
    jb = jet_from_function(beta_minus, base, Q, step) if minus_beta else None
    return is_QL_nondegenerate(jo, jb, L)


@dataclass
class Gates:
    tau_star: float = 1.0
    gamma_star: float = 1e-3
    tau: float = 4.0
    gamma: float = 1e-4
    K_max: int = 200

    @classmethod
    def from_dict(cls, raw: dict) -> "Gates":
        keys = ("tau_star", "gamma_star", "tau", "gamma", "K_max")
        return cls(**{k: type(getattr(cls, k))(raw[k]) for k in keys if k in raw})


@dataclass
class PointResult:
    a: tuple
    b: tuple
    mu0: np.ndarray
    status: str                     # accepted, rejected, skipped or failed
    theta: np.ndarray | None = None
    xi: np.ndarray | None = None
    omega_tilde: np.ndarray | None = None
    M_tilde: np.ndarray | None = None
    alpha_tilde: np.ndarray | None = None
    beta_tilde: np.ndarray | None = None
    solver_residual: float = math.nan
    implicit_residual: float = math.nan
    margin: float = math.nan
    floquet_defect: float = math.nan
    message: str = ""

    @property
    def accepted(self) -> bool:
        return self.status == "accepted"


@dataclass
class PipelineResult:
    spec: PreservationSpec
    points: list
    gates: Gates
    nondegenerate: bool | None = None
    dims: tuple = ()

    @property
    def gated(self) -> list:
        return [p for p in self.points if p.status != "skipped"]

    @property
    def accepted(self) -> list:
        return [p for p in self.points if p.accepted]

    def accepted_fraction(self) -> float:
        gated = self.gated
        return len(self.accepted) / len(gated) if gated else 0.0

    def accepted_sets(self) -> dict:
        """For every gated b, the accepted a values."""
        out = {}
        for p in self.gated:
            out.setdefault(p.b, [])
            if p.accepted:
                out[p.b].append(p.a)
        return out

    def to_csv(self) -> str:
        n, s, nu1, nu = self.dims
        m = next((len(p.theta) for p in self.points if p.theta is not None), 0)
        da = len(self.points[0].a) if self.points else 0
        db = len(self.points[0].b) if self.points else 0
        head = ([f"a{i + 1}" for i in range(da)] + [f"b{i + 1}" for i in range(db)] + ["status", "accepted", "residual"]
                + [f"theta{i + 1}" for i in range(m)] + [f"xi{i + 1}" for i in range(s)]
                + [f"omega_tilde{i + 1}" for i in range(n)] + [f"alpha_tilde{i + 1}" for i in range(nu1)]
                + [f"beta_tilde{i + 1}" for i in range(nu)])
        buf = io.StringIO()
        buf.write(",".join(head) + "\n")
        for p in self.points:
            def vals(arr, width):
                return [_fmt(x) for x in arr] if arr is not None else [""] * width
            row = ([_fmt(x) for x in p.a] + [_fmt(x) for x in p.b] + [p.status, str(int(p.accepted)),
                   _fmt(p.solver_residual)] + vals(p.theta, m) + vals(p.xi, s) + vals(p.omega_tilde, n)
                   + vals(p.alpha_tilde, nu1) + vals(p.beta_tilde, nu))
            buf.write(",".join(row) + "\n")
        return buf.getvalue()


def _fmt(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else repr(x)


class HermanPipeline:
    """Source solves of the unfolded extended system with caching of warm starts."""

    def __init__(self, model: ModelFamily, spec: PreservationSpec = PreservationSpec(),
                 options: SolverOptions | None = None, unfold: bool = True):
        self.model = model
        self.spec = spec
        self.chart = Chart(model, spec)
        self.options = options or SolverOptions(N_F=8)
        unfolding = build_unfolding(model.M, model.R, model.dims.s) if (unfold and model.dims.p) else None
        self.system = ExtendedSystem(model, unfolding)
        self.S = self.system.S

    def source(self, omega, mu0, chi, warm=None):
        target = (np.asarray(omega, float), np.asarray(mu0, float), np.asarray(chi, float) if self.S else None)
        try:
            return solve_source_torus(self.system, target, self.options, warm=warm)
        except RevKamError as exc:
            raise ImplicitSolveFailed(f"source solve failed: {type(exc).__name__}: {exc}") from exc

    def spectrum_new(self, mu0, chi):
        if not self.model.dims.p:
            return np.zeros(0), np.zeros(0)
        form = classify_spectrum(self.system.matrix(mu0, chi if self.S else None), self.model.R)
        return np.array(form.alpha), np.array(form.beta)

    def frequency_residual(self, omega, mu0, chi, sol):
        """Residual of ``omega + u = Omega(mu0 + w) + Delta(v, mu0 + w)`` and ``chi + W = 0``."""
        mu = mu0 + sol.w
        r1 = omega + sol.u - self.model.Omega(mu) - self.model.Delta(sol.v, mu)
        r2 = chi + sol.W if self.S else np.zeros(0)
        return np.concatenate([r1, r2])


def _chord(F, z0, scale, what: str, tol: float = IMPLICIT_TOL, max_iter: int = 12):
    """Chord iteration with a forward-difference Jacobian at ``z0``.

    ``F(z, warm)`` returns ``(residual, state)``; ``state`` is passed back as
    a warm start.  The Jacobian is rebuilt once if convergence stalls.
    """
    r0, state0 = F(z0, None)

    def jacobian(z, r, state):
        J = np.empty((len(r), len(z)))
        for j in range(len(z)):
            h = FD_REL_STEP * max(1.0, abs(z[j]), scale[j])
            e = np.zeros(len(z))
            e[j] = h
            J[:, j] = (F(z + e, state)[0] - r) / h
        return J

    z, r, state = z0, r0, state0
    if np.abs(r).max(initial=0.0) <= tol:
        return z, r, state
    J = jacobian(z, r, state)
    rebuilt = False
    for _ in range(max_iter):
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            raise ImplicitSolveFailed(f"{what}: singular Jacobian") from None
        z_new = z + step
        r_new, state_new = F(z_new, state)
        ratio = np.abs(r_new).max() / max(np.abs(r).max(), 1e-300)
        z, r, state = z_new, r_new, state_new
        if np.abs(r).max() <= tol:
            return z, r, state
        if ratio > 0.5:
            if rebuilt:
                raise ImplicitSolveFailed(f"{what}: chord iteration stalled at {np.abs(r).max():.2e}")
            J = jacobian(z, r, state)
            rebuilt = True
    raise ImplicitSolveFailed(f"{what}: no convergence in {max_iter} iterations (residual {np.abs(r).max():.2e})")


# ---- nested solvers ---------------------------------------------------------------

def solve_phi_psi(pipe: HermanPipeline, mu, warm=None):
    """``(omega, chi) = (phi(mu), psi(mu))`` with the torus solution at that target."""
    mu = np.asarray(mu, float)
    n, S = pipe.model.dims.n, pipe.S

    def F(z, state):
        sol = pipe.source(z[:n], mu, z[n:], warm=state or warm)
        return pipe.frequency_residual(z[:n], mu, z[n:], sol), sol

    z0 = np.concatenate([pipe.model.Omega(mu), np.zeros(S)])
    z, r, sol = _chord(F, z0, np.ones(n + S), "phi/psi")
    return z[:n], z[n:], sol


def solve_upsilon(pipe: HermanPipeline, mu):
    """``mu0 = Upsilon(mu)`` solving ``mu = mu0 + w(phi(mu0), mu0, psi(mu0))``."""
    mu = np.asarray(mu, float)
    cache = {}

    def F(z, state):
        omega, chi, sol = solve_phi_psi(pipe, z, warm=state)
        cache[tuple(z)] = (omega, chi, sol)
        return z + sol.w - mu, sol

    z, r, _ = _chord(F, mu.copy(), np.ones(len(mu)), "upsilon")
    return z


def hat_maps(pipe: HermanPipeline, mu):
    """``(Omega_hat, alpha_hat, beta_hat, Theta_hat, M_hat)`` at ``mu`` via the nested solvers."""
    mu0 = solve_upsilon(pipe, mu)
    omega, chi, sol = solve_phi_psi(pipe, mu0)
    alpha, beta = pipe.spectrum_new(mu0, chi)
    return omega, alpha, beta, sol.v, pipe.system.matrix(mu0, chi if pipe.S else None)


def solve_xi_plus(pipe: HermanPipeline, mu) -> np.ndarray:
    """``Xi(mu)``: shift of the ``T`` parameters restoring the preserved quantities; zero outside ``T``."""
    chart = pipe.chart
    mu = np.asarray(mu, float)
    if not chart.spec.d:
        return np.zeros(len(mu))
    goal = chart.preserved(mu)

    def F(z, state):
        shifted = mu.copy()
        shifted[chart.plus_idx] = z
        omega, alpha, beta, _, _ = hat_maps(pipe, shifted)
        return chart.select(omega, (alpha, beta)) - goal, None

    z, _, _ = _chord(F, mu[chart.plus_idx].copy(), np.ones(chart.spec.d), "xi")
    xi = np.zeros(len(mu))
    xi[chart.plus_idx] = z - mu[chart.plus_idx]
    return xi


# ---- joint per-point solve ------------------------------------------------------------

@dataclass
class PointSolution:
    omega: np.ndarray
    chi: np.ndarray
    mu0: np.ndarray
    mu_star: np.ndarray
    solution: object
    residual: float


def solve_point(pipe: HermanPipeline, mu_point) -> PointSolution:
    """All implicit equations at once for the grid point ``mu_point``.

    Unknowns ``(omega, chi, mu0, mu*_+)``; the source solve runs at target
    ``(omega, mu0, chi)`` and the equations are the frequency relations,
    ``mu0 + w = (mu*_+, mu_-)`` and the preservation identities.
    """
    chart, d = pipe.chart, pipe.model.dims
    n, S, s, dd = d.n, pipe.S, d.s, chart.spec.d
    mu_point = np.asarray(mu_point, float)
    goal = chart.preserved(mu_point)

    def unpack(z):
        omega, chi, mu0 = z[:n], z[n:n + S], z[n + S:n + S + s]
        mu_star = mu_point.copy()
        mu_star[chart.plus_idx] = z[n + S + s:]
        return omega, chi, mu0, mu_star

    def F(z, state):
        omega, chi, mu0, mu_star = unpack(z)
        sol = pipe.source(omega, mu0, chi, warm=state)
        r12 = pipe.frequency_residual(omega, mu0, chi, sol)
        r3 = mu0 + sol.w - mu_star
        r4 = chart.select(omega, pipe.spectrum_new(mu0, chi)) - goal
        return np.concatenate([r12, r3, r4]), sol

    z0 = np.concatenate([pipe.model.Omega(mu_point), np.zeros(S), mu_point, mu_point[chart.plus_idx]])
    z, r, sol = _chord(F, z0, np.ones(len(z0)), "point")
    omega, chi, mu0, mu_star = unpack(z)
    return PointSolution(omega, chi, mu0, mu_star, sol, float(np.abs(r).max(initial=0.0)))


def _diophantine(omega, beta, tau, gamma, K_max):
    return check_affinely_diophantine(FrequencyData(tuple(omega), tuple(beta)), DiophantineParams(tau, gamma, 2, K_max))


def evaluate_point(pipe: HermanPipeline, a, b, gates: Gates, verify: bool = True) -> PointResult:
    chart = pipe.chart
    model = pipe.model
    a, b = tuple(float(x) for x in np.atleast_1d(a)), tuple(float(x) for x in np.atleast_1d(b))
    try:
        mu_point = chart.mu(a, b)
    except RevKamError as exc:
        return PointResult(a, b, None, "failed", message=f"{type(exc).__name__}: {exc}")
    try:
        ps = solve_point(pipe, mu_point)
    except RevKamError as exc:
        return PointResult(a, b, mu_point, "failed", message=f"{type(exc).__name__}: {exc}")
    Mt = pipe.system.matrix(ps.mu0, ps.chi if pipe.S else None)
    alpha_t, beta_t = pipe.spectrum_new(ps.mu0, ps.chi)
    xi = ps.mu_star - mu_point
    xi[chart.minus_idx] = 0.0
    res = PointResult(a, b, mu_point, "rejected", theta=ps.solution.v.copy(), xi=xi, omega_tilde=ps.omega.copy(),
                      M_tilde=Mt, alpha_tilde=alpha_t, beta_tilde=beta_t,
                      solver_residual=ps.solution.residual, implicit_residual=ps.residual)
    verdict = _diophantine(ps.omega, beta_t, gates.tau, gates.gamma, gates.K_max)
    res.margin = math.nan if verdict.margin is None else float(verdict.margin)
    if verdict.violated:
        res.message = f"(tau, gamma, 2) gate failed at k={verdict.k}, l={verdict.ell}"
        return res
    if verify:
        sigma, mu = res.theta, mu_point + xi

        def field_fn(x, y, z):
            return eval_field(model, x, y, z, sigma, mu, check=False)

        sol = ps.solution
        # the original system must be in Floquet form with the tilde quantities
        res.floquet_defect = verify_floquet_form(field_fn, _retarget(sol, ps.omega, Mt))["max"]
        if not res.floquet_defect < FLOQUET_TOL:
            res.status = "failed"
            res.message = f"Floquet defect {res.floquet_defect:.2e} of the original system"
            return res
    res.status = "accepted"
    return res


def _retarget(sol, omega, Lam):
    from copy import copy
    out = copy(sol)
    out.omega0 = np.asarray(omega, float)
    out.Lam = Lam
    return out


def _grid_axis(center, radius, points):
    return np.linspace(center - radius, center + radius, points) if points > 1 else np.array([center])


def run_pipeline(model: ModelFamily, spec: PreservationSpec, grids=None, gates: Gates | None = None,
                 options: SolverOptions | None = None, radius: float = 0.1, points: int = 9, Q: int = 1,
                 verify: bool = True, jobs: int = 1) -> PipelineResult:
    """Sweep the (a, b) grid and return per-point results.

    ``grids`` is ``(a_axes, b_axes)``, lists of 1-d arrays; by default both
    are uniform with ``points`` values over ``[-radius, radius]`` around the
    base point.  Points whose ``b`` fails the ``(tau_star, gamma_star, 2)``
    gate are marked skipped.
    """
    gates = gates or Gates()
    pipe = HermanPipeline(model, spec, options)
    chart = pipe.chart
    d = model.dims
    if grids is None:
        a_axes = [_grid_axis(0.0, radius, points)] * (d.s - spec.d)
        b_axes = [_grid_axis(c, radius, points) for c in chart.P0]
    else:
        a_axes, b_axes = [np.asarray(g, float) for g in grids[0]], [np.asarray(g, float) for g in grids[1]]
    report = check_pair_nondegeneracy(chart, Q)
    if not report.verdict:
        warnings.warn("the pair (Omega_-, beta_-) is not (Q, 2)-nondegenerate at a = 0; "
                      "the accepted set may be small", RuntimeWarning, stacklevel=2)
    tasks = []
    for b in itertools.product(*b_axes):
        bt = np.array(b)
        b1 = bt[:spec.d1]
        b3 = bt[spec.d1 + spec.d2:]
        gate = not spec.d or not _diophantine(b1, b3, gates.tau_star, gates.gamma_star, gates.K_max).violated
        for a in itertools.product(*a_axes):
            tasks.append((a, b, gate))
    results = _map(lambda t: evaluate_point(pipe, t[0], t[1], gates, verify) if t[2]
                   else PointResult(tuple(map(float, t[0])), tuple(map(float, t[1])), None, "skipped",
                                    message="(tau_star, gamma_star, 2) gate failed for b"),
                   tasks, jobs)
    form = chart.form0
    dims = (d.n, d.s, (form.nu1 + form.nu3) if form else 0, (form.nu2 + form.nu3) if form else 0)
    return PipelineResult(spec, results, gates, report.verdict, dims)


def _map(fn, items, jobs):
    if jobs <= 1:
        return [fn(t) for t in items]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def run_russmann(model: ModelFamily, mu_axes=None, gates: Gates | None = None, options: SolverOptions | None = None,
                 radius: float = 0.1, points: int = 9, verify: bool = True, jobs: int = 1) -> PipelineResult:
    """The pipeline with nothing preserved: a grid directly in the parameters."""
    grids = None if mu_axes is None else (mu_axes, [])
    return run_pipeline(model, PreservationSpec(), grids, gates, options, radius, points, verify=verify, jobs=jobs)


def verify_identities(result: PipelineResult, model: ModelFamily) -> dict:
    """Worst violation of the preservation identities and of reversibility over accepted points."""
    chart = Chart(model, result.spec)
    worst = {"omega_plus": 0.0, "alpha_plus": 0.0, "beta_plus": 0.0, "anticommutation": 0.0, "xi_outside_T": 0.0}
    s = result.spec
    for p in result.accepted:
        form = classify_spectrum(p.M_tilde, model.R) if model.dims.p else None
        at = np.array(form.alpha) if form else np.zeros(0)
        bt = np.array(form.beta) if form else np.zeros(0)
        # the preserved quantities must reproduce b itself
        b = np.asarray(p.b, dtype=float)
        targets = np.split(b, [s.d1, s.d1 + s.d2])
        for key, new, old, idx in (("omega_plus", p.omega_tilde, targets[0], s.S1), ("alpha_plus", at, targets[1], s.S2),
                                   ("beta_plus", bt, targets[2], s.S3)):
            i = _zero_based(idx)
            worst[key] = max(worst[key], float(np.abs(np.asarray(new)[i] - old).max(initial=0.0)))
        if model.dims.p:
            R = model.R.R
            worst["anticommutation"] = max(worst["anticommutation"], float(np.abs(p.M_tilde @ R + R @ p.M_tilde).max()))
        worst["xi_outside_T"] = max(worst["xi_outside_T"], float(np.abs(p.xi[chart.minus_idx]).max(initial=0.0)))
    worst["points"] = len(result.accepted)
    return worst
