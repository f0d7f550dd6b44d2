"""Reversible parameterized vector fields on T^n x R^m x R^2p.

A system is a list of monomial terms.  Each term is

    coeff * trig(k . x) * y^a * z^b * sigma^c * mu^d

attached to one component of the x-, y- or z-equation and to a *slot* that
records its structural role (frequency map, frequency shift, the three
nonlinearities, the Floquet matrix, or one of the perturbations f, g, h).
The y-equation always carries the linear drift ``sigma``.

The reversing involution is ``(x, y, z) -> (-x, -y, R z)`` with R in the
canonical form ``diag(I_p, -I_p)``.  The parity of every term is checked at
build time, so a built model is reversible by construction.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ConfigError,
    DomainExceeded,
    OrderViolation,
    ParityViolation,
    RevKamError,
    SpectrumInvalid,
)
from .revlin import InvolutionMatrix, classify_spectrum

SLOTS = ("Omega", "Delta", "xi", "eta", "M", "zeta", "f", "g", "h")
SLOT_TARGET = {"Omega": "x", "Delta": "x", "xi": "x", "f": "x",
               "eta": "y", "g": "y", "M": "z", "zeta": "z", "h": "z"}
UNPERTURBED = ("Omega", "Delta", "xi", "eta", "M", "zeta")
PERTURBATION = ("f", "g", "h")
REVERSIBILITY_TOL = 1e-12
DOMAIN_SLACK = 1e-12


@dataclass(frozen=True)
class Term:
    slot: str
    index: int                 # component within the target equation
    k: tuple                   # Fourier mode
    trig: str                  # "cos" or "sin"
    y: tuple
    z: tuple
    sigma: tuple
    mu: tuple
    coeff: float

    @property
    def target(self) -> str:
        return SLOT_TARGET[self.slot]

    def to_dict(self) -> dict:
        return {"slot": self.slot, "target": self.target, "index": self.index, "k": list(self.k),
                "trig": self.trig,
                "degrees": {"y": list(self.y), "z": list(self.z), "sigma": list(self.sigma), "mu": list(self.mu)},
                "coeff": self.coeff}


@dataclass(frozen=True)
class Dims:
    n: int
    m: int
    p: int
    s: int

    @property
    def state(self) -> int:
        return self.n + self.m + 2 * self.p

    @property
    def normal(self) -> int:
        return self.m + 2 * self.p


def _ints(seq, length, what):
    seq = tuple(int(v) for v in (seq if seq is not None else [0] * length))
    if len(seq) != length:
        raise ConfigError(f"{what} has length {len(seq)}, expected {length}")
    if any(v < 0 for v in seq):
        raise ConfigError(f"{what} has negative exponents")
    return seq


def make_term(dims: Dims, slot: str, index: int, coeff: float, k=None, trig="cos",
              y=None, z=None, sigma=None, mu=None) -> Term:
    if slot not in SLOTS:
        raise ConfigError(f"unknown slot {slot!r}")
    if trig not in ("cos", "sin"):
        raise ConfigError(f"trig must be cos or sin, got {trig!r}")
    k = tuple(int(v) for v in (k if k is not None else [0] * dims.n))
    if len(k) != dims.n:
        raise ConfigError("Fourier mode has the wrong length")
    return Term(slot, int(index), k, trig, _ints(y, dims.m, "y degrees"), _ints(z, 2 * dims.p, "z degrees"),
                _ints(sigma, dims.m, "sigma degrees"), _ints(mu, dims.s, "mu degrees"), float(coeff))


def term_sign(term: Term, p: int) -> int:
    """Sign picked up by a term under the involution (x, y, z) -> (-x, -y, Rz)."""
    sign = -1 if term.trig == "sin" else 1
    flips = sum(term.y) + sum(term.z[p:])
    return sign * (-1) ** flips


def required_sign(term: Term, p: int) -> int:
    # x- and y-components are even; z-components satisfy h(G.) = -R h
    if term.target in ("x", "y"):
        return 1
    return -1 if term.index < p else 1


def _check_order(term: Term, dims: Dims) -> None:
    dy, dz, ds, dm = sum(term.y), sum(term.z), sum(term.sigma), sum(term.mu)
    slot = term.slot
    width = {"x": dims.n, "y": dims.m, "z": 2 * dims.p}[term.target]
    if not 0 <= term.index < width:
        raise ConfigError(f"{slot} term targets component {term.index} out of range")
    if slot in UNPERTURBED and (any(term.k) or term.trig != "cos"):
        raise OrderViolation(f"{slot} terms must not depend on the angles")
    if slot == "Omega" and (dy or dz or ds):
        raise OrderViolation("Omega terms depend on mu only")
    if slot == "Delta" and (dy or dz or ds == 0):
        raise OrderViolation("Delta terms must vanish at sigma = 0 and not involve y, z")
    if slot == "xi" and dy + dz < 1:
        raise OrderViolation("xi terms must vanish at y = z = 0")
    if slot == "eta" and dy + dz < 2:
        raise OrderViolation("eta terms must be at least quadratic in (y, z)")
    if slot == "zeta" and dy + dz + ds < 2:
        raise OrderViolation("zeta terms must be at least quadratic in (y, z, sigma)")
    if slot == "M" and (dy or ds or dz != 1):
        raise OrderViolation("M entries are linear in z and depend on mu only")


@dataclass(frozen=True)
class PerturbationSpec:
    seed: int
    size: float
    N_f: int
    terms_per_component: int = 12

    def to_dict(self) -> dict:
        return {"seed": self.seed, "size": self.size, "N_f": self.N_f,
                "terms_per_component": self.terms_per_component}


@dataclass(frozen=True)
class ModelFamily:
    dims: Dims
    R: InvolutionMatrix
    terms: tuple
    radii: dict
    perturbation: PerturbationSpec | None = None
    explicit_terms: tuple = ()      # terms given in the config, before generated ones
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    # ---- unperturbed pieces -------------------------------------------------
    def compiled(self, slots=SLOTS) -> "CompiledTerms":
        key = tuple(slots)
        if key not in self._cache:
            self._cache[key] = CompiledTerms(self.dims, [t for t in self.terms if t.slot in key])
        return self._cache[key]

    def Omega(self, mu) -> np.ndarray:
        return self._mu_only("Omega", mu, self.dims.n)

    def Delta(self, sigma, mu) -> np.ndarray:
        out = np.zeros(self.dims.n)
        sigma, mu = np.asarray(sigma, float), np.asarray(mu, float)
        for t in self.terms:
            if t.slot == "Delta":
                out[t.index] += t.coeff * np.prod(sigma ** np.array(t.sigma)) * np.prod(mu ** np.array(t.mu))
        return out

    def M(self, mu) -> np.ndarray:
        P2 = 2 * self.dims.p
        out = np.zeros((P2, P2))
        mu = np.asarray(mu, float)
        for t in self.terms:
            if t.slot == "M":
                out[t.index, t.z.index(1)] += t.coeff * np.prod(mu ** np.array(t.mu))
        return out

    def _mu_only(self, slot, mu, width):
        out = np.zeros(width)
        mu = np.asarray(mu, float)
        for t in self.terms:
            if t.slot == slot:
                out[t.index] += t.coeff * np.prod(mu ** np.array(t.mu))
        return out

    def with_terms(self, extra, perturbation=None) -> "ModelFamily":
        extra = tuple(extra)
        return replace(self, terms=self.terms + extra, explicit_terms=self.explicit_terms + extra,
                       perturbation=perturbation or self.perturbation, _cache={})

    def unperturbed(self) -> "ModelFamily":
        keep = tuple(t for t in self.terms if t.slot in UNPERTURBED)
        return replace(self, terms=keep, explicit_terms=tuple(t for t in self.explicit_terms if t.slot in UNPERTURBED),
                       perturbation=None, _cache={})

    # ---- serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        d = self.dims
        cfg = {
            "dims": {"n": d.n, "m": d.m, "p": d.p, "s": d.s},
            "R": self.R.R.tolist(),
            "radii": dict(self.radii),
            "Omega": {"terms": [{"index": t.index, "mu": list(t.mu), "coeff": t.coeff}
                                for t in self.explicit_terms if t.slot == "Omega"]},
            "M": {"entries": [{"row": t.index, "col": t.z.index(1), "mu": list(t.mu), "coeff": t.coeff}
                              for t in self.explicit_terms if t.slot == "M"]},
            "terms": [t.to_dict() for t in self.explicit_terms if t.slot not in ("Omega", "M")],
        }
        if self.perturbation is not None:
            cfg["perturbation"] = self.perturbation.to_dict()
        return cfg

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


class CompiledTerms:
    """Dense coefficient tensor ``C[component, trig basis, monomial]``.

    The trig basis stacks ``cos(k.x)`` for every distinct k, then ``sin(k.x)``.
    Monomials run over the variables ``(y, z, sigma, mu)``.
    """

    def __init__(self, dims: Dims, terms):
        self.dims = dims
        n, D = dims.n, dims.state
        ks = sorted({t.k for t in terms}) or [tuple([0] * n)]
        exps = sorted({t.y + t.z + t.sigma + t.mu for t in terms}) or [tuple([0] * (2 * dims.m + 2 * dims.p + dims.s))]
        kpos = {k: i for i, k in enumerate(ks)}
        epos = {e: i for i, e in enumerate(exps)}
        nk = len(ks)
        C = np.zeros((D, 2 * nk, len(exps)))
        offset = {"x": 0, "y": n, "z": n + dims.m}
        for t in terms:
            b = kpos[t.k] + (nk if t.trig == "sin" else 0)
            C[offset[t.target] + t.index, b, epos[t.y + t.z + t.sigma + t.mu]] += t.coeff
        self.ks = np.array(ks, dtype=float).reshape(nk, n)
        self.exps = np.array(exps, dtype=np.int64)
        self.maxdeg = int(self.exps.max(initial=0))
        self.C = C
        self.nk = nk
        self.empty = not terms
        # Jacobian needs only the state variables (y, z) among the monomial variables
        self.n_state_vars = dims.m + 2 * dims.p

    def _build_closure(self):
        # every monomial is a parent (one degree lower) times one variable
        nvar = self.exps.shape[1]
        closure = {tuple([0] * nvar)}
        stack = [tuple(e) for e in self.exps]
        while stack:
            e = stack.pop()
            if e in closure:
                continue
            closure.add(e)
            for q in range(nvar):
                if e[q]:
                    stack.append(e[:q] + (e[q] - 1,) + e[q + 1:])
        order = sorted(closure, key=lambda e: (sum(e), e))
        self._cpos = {e: i for i, e in enumerate(order)}
        self._steps = []
        for e in order[1:]:
            q = next(i for i, c in enumerate(e) if c)
            self._steps.append((self._cpos[e], self._cpos[e[:q] + (e[q] - 1,) + e[q + 1:]], q))
        self._mono_rows = np.array([self._cpos[tuple(e)] for e in self.exps])
        self._down = {}
        for q in range(nvar):
            rows, coef = [], []
            for e in self.exps:
                e = tuple(e)
                if e[q]:
                    rows.append(self._cpos[e[:q] + (e[q] - 1,) + e[q + 1:]])
                    coef.append(e[q])
                else:
                    rows.append(0)
                    coef.append(0)
            self._down[q] = (np.array(rows), np.array(coef, dtype=float))
        self._n_closure = len(order)

    def _monomials(self, v, dvars=()):
        """Monomial values (N, nmono) and derivatives (N, nmono, len(dvars))."""
        if not hasattr(self, "_steps"):
            self._build_closure()
        N = v.shape[0]
        vt = np.ascontiguousarray(v.T)
        rows = np.empty((self._n_closure, N), dtype=v.dtype)
        rows[0] = 1.0
        for dst, src, q in self._steps:
            np.multiply(rows[src], vt[q], out=rows[dst])
        mono = rows[self._mono_rows].T
        if not len(dvars):
            return mono, None
        dmono = np.empty((N, len(self.exps), len(dvars)), dtype=v.dtype)
        for i, q in enumerate(dvars):
            idx, coef = self._down[q]
            dmono[:, :, i] = (rows[idx] * coef[:, None]).T
        return mono, dmono

    def evaluate(self, x, v, jacobian=False):
        """Values (N, D) and optionally the Jacobian (N, D, n + m + 2p) in (x, y, z)."""
        N = x.shape[0]
        D = self.dims.state
        dtype = np.result_type(x, v, float)
        if self.empty:
            V = np.zeros((N, D), dtype=dtype)
            return (V, np.zeros((N, D, D), dtype=dtype)) if jacobian else V
        nk2, nmono = 2 * self.nk, len(self.exps)
        phase = x @ self.ks.T if self.dims.n else np.zeros((N, self.nk))
        cs, sn = np.cos(phase), np.sin(phase)
        T = np.concatenate([cs, sn], axis=1)                        # (N, 2nk)
        mono, dmono = self._monomials(v, range(self.n_state_vars) if jacobian else ())
        # CM[i, d, b] = sum_j C[d, b, j] mono[i, j]
        CM = (mono @ self.C.transpose(2, 0, 1).reshape(nmono, D * nk2)).reshape(N, D, nk2)
        V = np.matmul(CM, T[:, :, None])[:, :, 0]
        if not jacobian:
            return V
        n = self.dims.n
        if n:
            dT = np.concatenate([-sn[:, :, None] * self.ks[None], cs[:, :, None] * self.ks[None]], axis=1)
            Jx = np.matmul(CM, dT)
        else:
            Jx = np.zeros((N, D, 0), dtype=dtype)
        TC = (T @ self.C.transpose(1, 0, 2).reshape(nk2, D * nmono)).reshape(N, D, nmono)
        Jv = np.matmul(TC, dmono)
        return V, np.concatenate([Jx, Jv], axis=2)


# ---- building ----------------------------------------------------------------

def _parse_term(dims: Dims, raw: dict) -> Term:
    try:
        deg = raw.get("degrees", {})
        slot = raw["slot"]
        t = make_term(dims, slot, raw.get("index", 0), raw["coeff"], raw.get("k"), raw.get("trig", "cos"),
                      deg.get("y"), deg.get("z"), deg.get("sigma"), deg.get("mu"))
    except KeyError as exc:
        raise ConfigError(f"term is missing field {exc}") from None
    if "target" in raw and raw["target"] != t.target:
        raise ConfigError(f"slot {t.slot} belongs to the {t.target}-equation, not {raw['target']}")
    return t


def build_model(config: dict) -> ModelFamily:
    """Validate a model config and return the immutable model.

    Raises OrderViolation, ParityViolation or SpectrumInvalid for structurally
    inadmissible systems, ConfigError for malformed input.
    """
    try:
        d = config["dims"]
        dims = Dims(int(d["n"]), int(d["m"]), int(d["p"]), int(d["s"]))
        radii = {key: float(config["radii"][key]) for key in ("y", "z", "sigma", "mu")}
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed model config: {exc}") from None
    if dims.n < 0 or dims.m < 1 or dims.p < 0 or dims.s < 0:
        raise ConfigError("dimensions out of range")
    if any(r <= 0 for r in radii.values()):
        raise ConfigError("domain radii must be positive")
    R = InvolutionMatrix.from_array(np.array(config.get("R", np.diag([1.0] * dims.p + [-1.0] * dims.p)),
                                             dtype=float).reshape(2 * dims.p, 2 * dims.p))
    if dims.p and not R.is_canonical:
        raise ConfigError("terms are interpreted in the basis where R = diag(I, -I); pass R in that form")
    if dims.p and R.plus != R.minus:
        raise ConfigError("R must have eigenvalues +1 and -1 with equal multiplicity")

    terms = []
    for raw in config.get("Omega", {}).get("terms", []):
        terms.append(make_term(dims, "Omega", raw["index"], raw["coeff"], mu=raw.get("mu")))
    for raw in config.get("M", {}).get("entries", []):
        zdeg = [0] * (2 * dims.p)
        if not 0 <= int(raw["col"]) < 2 * dims.p:
            raise ConfigError("M entry column out of range")
        zdeg[int(raw["col"])] = 1
        terms.append(make_term(dims, "M", raw["row"], raw["coeff"], z=zdeg, mu=raw.get("mu")))
    terms += [_parse_term(dims, raw) for raw in config.get("terms", [])]
    for t in terms:
        _check_order(t, dims)
        if t.coeff and term_sign(t, dims.p) != required_sign(t, dims.p):
            raise ParityViolation(f"{t.slot} term {t.to_dict()} breaks reversibility")

    pert = None
    generated = ()
    if config.get("perturbation"):
        raw = config["perturbation"]
        pert = PerturbationSpec(int(raw["seed"]), float(raw["size"]), int(raw["N_f"]),
                                int(raw.get("terms_per_component", 12)))
        generated = random_reversible_perturbation(dims, pert.size, pert.N_f, pert.seed, radii,
                                                   pert.terms_per_component)
    model = ModelFamily(dims, R, tuple(terms) + tuple(generated), radii, pert, tuple(terms))

    if dims.p:
        try:
            classify_spectrum(model.M(np.zeros(dims.s)), R)
        except RevKamError as exc:
            raise SpectrumInvalid(f"M(0) is not admissible: {type(exc).__name__}: {exc}") from None
    resid = check_reversibility(model, 64, seed=0)
    if resid > REVERSIBILITY_TOL:
        raise ParityViolation(f"reversibility residual {resid:.3e}")
    return model


def model_from_json(text: str) -> ModelFamily:
    return build_model(json.loads(text))


# ---- evaluation ----------------------------------------------------------------

def _check_domain(model: ModelFamily, **values) -> None:
    for key, arr in values.items():
        if arr.size and np.abs(np.real(arr)).max() > model.radii[key] * (1 + DOMAIN_SLACK):
            raise DomainExceeded(f"|{key}| exceeds the declared radius {model.radii[key]}")


def _batch(arr, width):
    arr = np.asarray(arr)
    if arr.dtype.kind not in "fc":
        arr = arr.astype(float)
    if width == 0:
        return np.zeros((1, 0), dtype=arr.dtype)
    return arr.reshape(-1, width)


def eval_field(model: ModelFamily, x, y, z, sigma, mu, jacobian: bool = False, slots=SLOTS, check=True):
    """Velocity of the system at a point or at a batch of points.

    Inputs may be single vectors or arrays with a leading batch axis.  With
    ``jacobian=True`` also returns the derivative with respect to
    ``(x, y, z, sigma, mu)``, computed term-wise.
    """
    d = model.dims
    x, y, z = _batch(x, d.n), _batch(y, d.m), _batch(z, 2 * d.p)
    sigma, mu = _batch(sigma, d.m), _batch(mu, d.s)
    N = max(len(x), len(y), len(z), len(sigma), len(mu))
    x, y, z, sigma, mu = (np.broadcast_to(a, (N, a.shape[1])) for a in (x, y, z, sigma, mu))
    if check:
        _check_domain(model, y=y, z=z, sigma=sigma, mu=mu)
    comp = model.compiled(tuple(s for s in SLOTS if s in slots))
    v = np.concatenate([y, z, sigma, mu], axis=1)
    single = N == 1
    if not jacobian:
        V = comp.evaluate(np.real(x), v)
        V[:, d.n:d.n + d.m] += sigma
        return V[0] if single else V
    # full derivative: evaluate the state Jacobian, parameters by the same monomial machinery
    V, Js = comp.evaluate(np.real(x), v, jacobian=True)
    V[:, d.n:d.n + d.m] += sigma
    Jp = _parameter_jacobian(comp, np.real(x), v, d)
    Jp[:, d.n:d.n + d.m, :d.m] += np.eye(d.m)
    J = np.concatenate([Js, Jp], axis=2)
    return (V[0], J[0]) if single else (V, J)


def _parameter_jacobian(comp: CompiledTerms, x, v, d: Dims):
    N = x.shape[0]
    npar = d.m + d.s
    if comp.empty:
        return np.zeros((N, d.state, npar), dtype=np.result_type(v, float))
    nst = d.m + 2 * d.p
    _, dmono = comp._monomials(v, range(nst, nst + npar))
    phase = x @ comp.ks.T if d.n else np.zeros((N, comp.nk))
    T = np.concatenate([np.cos(phase), np.sin(phase)], axis=1)
    nk2, nmono = 2 * comp.nk, len(comp.exps)
    TC = (T @ comp.C.transpose(1, 0, 2).reshape(nk2, d.state * nmono)).reshape(N, d.state, nmono)
    return np.matmul(TC, dmono)


def involution(model: ModelFamily, x, y, z):
    Rd = model.R.R
    return -np.asarray(x), -np.asarray(y), np.asarray(z) @ Rd.T


def sample_points(model: ModelFamily, count: int, seed: int):
    d = model.dims
    rng = np.random.Generator(np.random.Philox(seed))
    r = model.radii
    return (rng.uniform(0, 2 * math.pi, (count, d.n)), rng.uniform(-r["y"], r["y"], (count, d.m)),
            rng.uniform(-r["z"], r["z"], (count, 2 * d.p)), rng.uniform(-r["sigma"], r["sigma"], (count, d.m)),
            rng.uniform(-r["mu"], r["mu"], (count, d.s)))


def check_reversibility(model: ModelFamily, samples: int = 64, seed: int = 0) -> float:
    """Largest ``|V(G p) + DG V(p)|`` over random points of the domain."""
    d = model.dims
    x, y, z, sigma, mu = sample_points(model, samples, seed)
    V = eval_field(model, x, y, z, sigma, mu).reshape(samples, d.state)
    gx, gy, gz = involution(model, x, y, z)
    VG = eval_field(model, gx, gy, gz, sigma, mu).reshape(samples, d.state)
    DG = np.concatenate([-np.ones(d.n + d.m), np.diag(model.R.R)]) if d.p else -np.ones(d.n + d.m)
    res = VG + V * DG
    return float(np.abs(res).max(initial=0.0))


# ---- perturbations ------------------------------------------------------------

def half_modes(n: int, N: int):
    """Modes with |k|_inf <= N, one of each +-k pair, zero first."""
    out = [tuple([0] * n)]
    for k in itertools.product(range(-N, N + 1), repeat=n):
        nz = next((c for c in k if c), 0)
        if nz > 0:
            out.append(k)
    return out


def _low_monomials(count: int, degree: int):
    return [e for total in range(degree + 1) for e in _compositions(count, total)]


def _compositions(count, total):
    if count == 0:
        if total == 0:
            yield ()
        return
    for first in range(total, -1, -1):
        for rest in _compositions(count - 1, total - first):
            yield (first,) + rest


def random_reversible_perturbation(dims: Dims, size: float, N_f: int, seed: int, radii: dict | None = None,
                                   terms_per_component: int = 12):
    """Random f, g, h with the reversible parity built in.

    Each component gets ``terms_per_component`` terms picked from Fourier modes
    ``|k|_inf <= N_f`` times monomials of degree at most 2 in (y, z), optionally
    multiplied by one sigma or mu coordinate.  The mean-mode terms of degree at
    most one in (y, z) allowed by parity are always included, so the averaged
    field moves at first order in ``size``.  Coefficients are scaled so that
    the sum of |coeff| times the radii powers, an upper bound for the sup-norm
    on the domain, equals ``size`` per component.
    """
    if size < 0:
        raise ValueError("size must be nonnegative")
    radii = radii or {"y": 0.5, "z": 0.5, "sigma": 0.1, "mu": 0.2}
    rng = np.random.Generator(np.random.Philox(seed))
    modes = half_modes(dims.n, N_f)
    yz = _low_monomials(dims.m + 2 * dims.p, 2)
    extras = [((0,) * dims.m, (0,) * dims.s)]
    extras += [(tuple(int(i == j) for i in range(dims.m)), (0,) * dims.s) for j in range(dims.m)]
    extras += [((0,) * dims.m, tuple(int(i == j) for i in range(dims.s))) for j in range(dims.s)]
    out = []
    for slot, width in (("f", dims.n), ("g", dims.m), ("h", 2 * dims.p)):
        for index in range(width):
            candidates = []
            for k in modes:
                for e in yz:
                    for sg, mu in extras:
                        ey, ez = e[:dims.m], e[dims.m:]
                        probe = Term(slot, index, k, "cos", ey, ez, sg, mu, 1.0)
                        trig = "cos" if term_sign(probe, dims.p) == required_sign(probe, dims.p) else "sin"
                        if trig == "sin" and not any(k):
                            continue
                        candidates.append(replace(probe, trig=trig))
            anchors = [i for i, t in enumerate(candidates)
                       if not any(t.k) and sum(t.y) + sum(t.z) <= 1 and not any(t.sigma) and not any(t.mu)]
            rest = [i for i in range(len(candidates)) if i not in anchors]
            extra = max(terms_per_component - len(anchors), 0)
            pick = rng.choice(rest, size=min(extra, len(rest)), replace=False) if extra and rest else []
            chosen = [candidates[i] for i in sorted(anchors + [int(i) for i in pick])]
            raw = rng.standard_normal(len(chosen))
            bound = sum(abs(c) * radii["y"] ** sum(t.y) * radii["z"] ** sum(t.z) * radii["sigma"] ** sum(t.sigma)
                        * radii["mu"] ** sum(t.mu) for c, t in zip(raw, chosen))
            scale = size / bound if bound else 0.0
            out += [replace(t, coeff=float(c * scale)) for c, t in zip(raw, chosen) if c * scale != 0.0]
    return tuple(out)
