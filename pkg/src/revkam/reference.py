"""Reference model configurations used by the CLI demos and the test suite.

The reference family has two angles, one action-like variable y, one real
pair of Floquet exponents and two external parameters:

    x' = (1 + mu1 + 0.2 sigma + 0.1 z1 + 0.02 z2^2,  g + mu2 + 0.05 y^2) + f
    y' = sigma + 0.1 y^2 - 0.05 z1^2 + g
    z' = a(mu) [[0, 1], [1, 0]] z + zeta(y, z, sigma) + h

with g the golden mean and a(mu) = 1 + 0.5 mu1 - 0.3 mu2.
"""

from __future__ import annotations

import copy
import math

GOLDEN = (1 + math.sqrt(5)) / 2

_REFERENCE = {
    "dims": {"n": 2, "m": 1, "p": 1, "s": 2},
    "R": [[1.0, 0.0], [0.0, -1.0]],
    "radii": {"y": 0.5, "z": 0.5, "sigma": 0.1, "mu": 0.2},
    "Omega": {"terms": [
        {"index": 0, "mu": [0, 0], "coeff": 1.0},
        {"index": 0, "mu": [1, 0], "coeff": 1.0},
        {"index": 1, "mu": [0, 0], "coeff": GOLDEN},
        {"index": 1, "mu": [0, 1], "coeff": 1.0},
    ]},
    "M": {"entries": [
        {"row": 0, "col": 1, "mu": [0, 0], "coeff": 1.0},
        {"row": 0, "col": 1, "mu": [1, 0], "coeff": 0.5},
        {"row": 0, "col": 1, "mu": [0, 1], "coeff": -0.3},
        {"row": 1, "col": 0, "mu": [0, 0], "coeff": 1.0},
        {"row": 1, "col": 0, "mu": [1, 0], "coeff": 0.5},
        {"row": 1, "col": 0, "mu": [0, 1], "coeff": -0.3},
    ]},
    "terms": [
        {"slot": "Delta", "index": 0, "degrees": {"sigma": [1]}, "coeff": 0.2},
        {"slot": "xi", "index": 0, "degrees": {"z": [1, 0]}, "coeff": 0.1},
        {"slot": "xi", "index": 0, "degrees": {"z": [0, 2]}, "coeff": 0.02},
        {"slot": "xi", "index": 1, "degrees": {"y": [2]}, "coeff": 0.05},
        {"slot": "eta", "index": 0, "degrees": {"y": [2]}, "coeff": 0.1},
        {"slot": "eta", "index": 0, "degrees": {"z": [2, 0]}, "coeff": -0.05},
        {"slot": "zeta", "index": 0, "degrees": {"y": [1], "z": [1, 0]}, "coeff": 0.1},
        {"slot": "zeta", "index": 0, "degrees": {"sigma": [1], "z": [0, 1]}, "coeff": 1.0},
        {"slot": "zeta", "index": 1, "degrees": {"y": [2]}, "coeff": 0.1},
        {"slot": "zeta", "index": 1, "degrees": {"sigma": [1], "z": [1, 0]}, "coeff": 0.05},
    ],
}


def reference_config(delta: float = 1e-3, seed: int = 1, N_f: int = 2, drift: float = 0.0) -> dict:
    """Config dict for the reference family with a random perturbation of size ``delta``.

    ``drift`` adds a constant term to the y-equation.
    """
    cfg = copy.deepcopy(_REFERENCE)
    if delta:
        cfg["perturbation"] = {"seed": seed, "size": delta, "N_f": N_f}
    if drift:
        cfg["terms"].append({"slot": "g", "index": 0, "coeff": drift})
    return cfg


def reference_target():
    """Default frequency target and parameter point for the reference family."""
    return (1.0, GOLDEN), (0.0, 0.0)
