"""Command-line entry point.

Every command reads an optional JSON input (``--input``), applies ``--set``
overrides and writes JSON or CSV to ``--output`` (stdout by default).  Exit
codes: 0 success, 1 domain error (class name on stderr), 2 config error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from importlib import resources

import numpy as np

from . import diophantine as dio
from .errors import ConfigError, NewtonDiverged, RevKamError
from .herman import Gates, PreservationSpec, run_pipeline
from .model import build_model
from .nondegeneracy import Jet, is_QL_nondegenerate
from .quotient import TorusLattice, lattice_normal_form, quotient_flow
from .reference import reference_config, reference_target
from .revlin import build_unfolding, classify_spectrum, standard_involution
from .solver import SolverOptions, solve_source_torus

log = logging.getLogger("revkam")

COMMANDS = ("classify", "unfold", "dioph-check", "dioph-measure", "nondeg", "quotient",
            "solve", "herman", "demo-example24", "demo-drift")


# config plumbing

def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, pairs) -> dict:
    """Set dotted keys, e.g. ``grid.points=3``; values are parsed as JSON when possible."""
    for pair in pairs or ():
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        node = cfg
        *path, last = key.split(".")
        for part in path:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot set {key}: {part} is not a table")
        node[last] = parse_value(raw)
    return cfg


def load_input(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("the input must be a JSON object")
    return data


def require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing required key {key!r}")
    return cfg[key]


def matrix(value, name) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ConfigError(f"{name} must be a square matrix")
    return arr


def involution_for(cfg: dict, dim: int) -> np.ndarray:
    if "R" in cfg:
        return matrix(cfg["R"], "R")
    if dim % 2:
        raise ConfigError("odd dimension needs an explicit involution R")
    return standard_involution(dim // 2)


def model_for(cfg: dict, seed):
    """The ``model`` table if given, otherwise the reference family."""
    if "model" in cfg:
        model_cfg = cfg["model"]
        if seed is not None and "perturbation" in model_cfg:
            model_cfg["perturbation"]["seed"] = seed
        return build_model(model_cfg)
    ref = cfg.get("reference", {})
    return build_model(reference_config(delta=float(ref.get("delta", 1e-3)),
                                        seed=int(seed if seed is not None else ref.get("seed", 1)),
                                        N_f=int(ref.get("N_f", 2)), drift=float(ref.get("drift", 0.0))))


def solver_options(cfg: dict, default_N_F: int) -> SolverOptions:
    raw = dict(cfg.get("solver", {}))
    raw.setdefault("N_F", default_N_F)
    fields = SolverOptions.__dataclass_fields__
    unknown = set(raw) - set(fields)
    if unknown:
        raise ConfigError(f"unknown solver options: {sorted(unknown)}")
    return SolverOptions(**raw)


# output

def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def dump_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def load_schema(command: str) -> dict:
    """Published JSON schema for a command's output."""
    path = resources.files("revkam") / "schemas" / f"{command}.schema.json"
    return json.loads(path.read_text(encoding="utf-8"))


# commands; each returns the text to emit

def cmd_classify(cfg, args):
    M = matrix(require(cfg, "M"), "M")
    form = classify_spectrum(M, involution_for(cfg, M.shape[0]))
    return dump_json(form.to_dict())


def cmd_unfold(cfg, args):
    M = matrix(require(cfg, "M"), "M")
    unf = build_unfolding(M, involution_for(cfg, M.shape[0]))
    gens = []
    for j in range(unf.S):
        e = np.zeros(unf.S)
        e[j] = 1.0
        gens.append((unf(np.zeros(0), e) - M).tolist())
    return dump_json({"S": unf.S, "form": unf.base_form.to_dict(), "generators": gens,
                      "spectrum_jacobian": unf.chi_jacobian().tolist()})


def _dioph_params(cfg, defaults):
    merged = {**defaults, **{k: cfg[k] for k in ("tau", "gamma", "L", "K_max") if k in cfg}}
    return float(merged["tau"]), float(merged.get("gamma", 1e-3)), int(merged["L"]), int(merged["K_max"])


def cmd_dioph_check(cfg, args):
    fd = dio.FrequencyData(require(cfg, "omega"), cfg.get("beta", ()))
    tau, gamma, L, K_max = _dioph_params(cfg, {"tau": fd.n, "gamma": 1e-3, "L": 2, "K_max": 200})
    verdict = dio.check_affinely_diophantine(fd, dio.DiophantineParams(tau, gamma, L, K_max))
    return dump_json(verdict.to_dict())


def _affine_map(spec, dim, name):
    A = np.atleast_2d(np.asarray(spec.get("matrix", np.eye(dim)), dtype=float))
    c = np.asarray(spec.get("offset", np.zeros(A.shape[0])), dtype=float)
    if A.shape[1] != dim or c.shape != (A.shape[0],):
        raise ConfigError(f"{name} map does not match the region dimension {dim}")
    return A, c


def cmd_dioph_measure(cfg, args):
    box = cfg.get("box", [[1.0, 2.0]])
    region = dio.ProductRegion(tuple(dio.interval(float(lo), float(hi)) for lo, hi in box))
    A, c = _affine_map(cfg.get("omega", {}), region.dim, "omega")
    B, e = _affine_map(cfg["beta"], region.dim, "beta") if "beta" in cfg else (None, None)
    tau, _, L, K_max = _dioph_params(cfg, {"tau": 2.0, "L": 2, "K_max": 200})

    def fd_map(pts):
        omegas = pts @ A.T + c
        betas = pts @ B.T + e if B is not None else None
        return omegas, betas

    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    rows = dio.measure_curve(region, fd_map, tau, L, K_max, cfg.get("gammas", [1e-2, 1e-3, 1e-4]),
                             int(cfg.get("samples", 10_000)), seed, vectorized=True)
    return dump_csv(["gamma", "fraction", "half_width"], rows)


def cmd_nondeg(cfg, args):
    jo = Jet.from_dict(cfg["omega_jet"]) if cfg.get("omega_jet") else None
    jb = Jet.from_dict(cfg["beta_jet"]) if cfg.get("beta_jet") else None
    if jo is None and jb is None:
        raise ConfigError("nondeg needs omega_jet and/or beta_jet")
    return dump_json(is_QL_nondegenerate(jo, jb, int(cfg.get("L", 2))).to_dict())


def cmd_quotient(cfg, args):
    rows = require(cfg, "rows")
    lattice = TorusLattice.from_rows(rows, cfg.get("n"))
    nf = lattice_normal_form(lattice)
    out = {"normal_form": {"k": nf.k, "Q": [list(r) for r in nf.Qmat], "q": list(nf.qvals)}}
    if "omega" in cfg:
        out["flow"] = quotient_flow(lattice, cfg["omega"]).to_dict()
    return dump_json(out)


def _target(cfg):
    if "target" not in cfg:
        return reference_target()
    t = cfg["target"]
    return (np.asarray(require(t, "omega"), float), np.asarray(require(t, "mu"), float))


def cmd_solve(cfg, args):
    model = model_for(cfg, args.seed)
    sol = solve_source_torus(model, _target(cfg), solver_options(cfg, 16))
    if cfg.get("format", "json") == "csv":
        omega, mu = _target(cfg)
        header = ([f"omega{i + 1}" for i in range(len(omega))] + [f"mu{i + 1}" for i in range(len(mu))]
                  + ["residual", "newton_iters"] + [f"u{i + 1}" for i in range(len(sol.u))]
                  + [f"v{i + 1}" for i in range(len(sol.v))] + [f"w{i + 1}" for i in range(len(sol.w))])
        row = [*map(float, omega), *map(float, mu), float(sol.residual), sol.newton_iters,
               *map(float, sol.u), *map(float, sol.v), *map(float, sol.w)]
        return dump_csv(header, [row])
    return dump_json(sol.to_dict())


def cmd_herman(cfg, args):
    model = model_for(cfg, args.seed)
    spec = PreservationSpec.from_dict({k: cfg.get(k, d) for k, d in (("S1", [1]), ("S2", []), ("S3", []), ("T", [1]))})
    grid = cfg.get("grid", {})
    result = run_pipeline(model, spec, gates=Gates.from_dict(cfg), options=solver_options(cfg, 8),
                          radius=float(grid.get("radius", 0.1)), points=int(grid.get("points", 9)),
                          Q=int(cfg.get("Q", 1)), jobs=args.jobs)
    log.info("herman: %d of %d gated points accepted", len(result.accepted), len(result.gated))
    return result.to_csv()


def cmd_demo_example24(cfg, args):
    demo = dio.ScaledFamilyDemo(**{k: cfg[k] for k in ("delta", "c2_factor", "tau", "L", "K_max") if k in cfg})
    bs = cfg.get("bs") or list(np.linspace(0.5 * demo.c1, 1.5 * demo.c2, 13))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    rows = demo.table(bs, float(cfg.get("gamma", 1e-4)), int(cfg.get("samples", 2000)), seed)
    return dump_csv(["b", "fraction", "half_width"], rows)


def cmd_demo_drift(cfg, args):
    c = float(cfg.get("drift", 1e-2))
    ref = dict(cfg.get("reference", {}))
    ref.setdefault("delta", 0.0)
    ref["drift"] = c
    base = {**cfg, "reference": ref}
    model = model_for(base, args.seed)
    opts = solver_options(cfg, 8)
    out = {"drift": c}
    free = solve_source_torus(model, _target(cfg), opts)
    out["free"] = {"converged": True, "newton_iters": free.newton_iters, "residual": free.residual,
                   "v": free.v.tolist(), "v_plus_drift": float(np.abs(free.v + c).max())}
    frozen_opts = SolverOptions(**{**opts.__dict__, "freeze_v": True})
    try:
        sol = solve_source_torus(model, _target(cfg), frozen_opts)
        out["frozen"] = {"converged": True, "newton_iters": sol.newton_iters, "residual": sol.residual}
    except NewtonDiverged as exc:
        out["frozen"] = {"converged": False, "error": type(exc).__name__, "message": str(exc)}
    return dump_json(out)


HANDLERS = {
    "classify": cmd_classify, "unfold": cmd_unfold, "dioph-check": cmd_dioph_check,
    "dioph-measure": cmd_dioph_measure, "nondeg": cmd_nondeg, "quotient": cmd_quotient,
    "solve": cmd_solve, "herman": cmd_herman, "demo-example24": cmd_demo_example24,
    "demo-drift": cmd_demo_drift,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="revkam", description="Reversible KAM numerical toolkit.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--input", help="JSON config file")
    parser.add_argument("--output", help="output file (default: stdout)")
    parser.add_argument("--seed", type=int, help="seed for perturbations and sampling")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry; dotted keys address nested tables")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads for grid sweeps")
    return parser


def run(argv=None) -> int:
    level = os.environ.get("REVKAM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg = apply_overrides(load_input(args.input), args.set)
        text = HANDLERS[args.command](cfg, args)
    except RevKamError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return 2
    except (KeyError, TypeError, ValueError) as exc:
        # malformed values that got past the config readers
        print(f"ConfigError: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if args.output:
        try:
            with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"ConfigError: cannot write {args.output}: {exc.strerror}", file=sys.stderr)
            return 2
    else:
        sys.stdout.write(text)
    return 0


def main() -> None:
    sys.exit(run())
