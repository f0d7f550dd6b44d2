import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from revkam.errors import ConfigError, DomainExceeded, OrderViolation, ParityViolation, SpectrumInvalid
from revkam.model import (
    Dims,
    build_model,
    check_reversibility,
    eval_field,
    involution,
    make_term,
    model_from_json,
    random_reversible_perturbation,
    sample_points,
)
from revkam.reference import GOLDEN, reference_config


@pytest.fixture(scope="module")
def unperturbed():
    return build_model(reference_config(delta=0.0))


@pytest.fixture(scope="module")
def perturbed():
    return build_model(reference_config(delta=1e-3))


def test_unperturbed_torus_velocity(unperturbed):
    mu = np.array([0.05, -0.1])
    V = eval_field(unperturbed, [0.3, 1.2], [0.0], [0.0, 0.0], [0.0], mu)
    assert np.allclose(V[:2], [1 + mu[0], GOLDEN + mu[1]], atol=0, rtol=1e-15)
    assert np.all(V[2:] == 0)


def test_sigma_shape(unperturbed):
    sigma, mu = 0.05, np.array([0.1, 0.0])
    V = eval_field(unperturbed, [0.3, 1.2], [0.0], [0.0, 0.0], [sigma], mu)
    assert V[0] == pytest.approx(1 + mu[0] + 0.2 * sigma)
    assert V[2] == pytest.approx(sigma)
    # zeta has no sigma-only terms, so z' vanishes at y = z = 0
    assert np.all(V[3:] == 0)


def test_unperturbed_torus_is_invariant(unperturbed):
    x, _, _, _, mu = sample_points(unperturbed, 500, seed=3)
    V = eval_field(unperturbed, x, np.zeros((500, 1)), np.zeros((500, 2)), np.zeros((500, 1)), mu)
    assert np.abs(V[:, 2:]).max() == 0.0


def test_linear_eta_is_rejected():
    cfg = reference_config(delta=0.0)
    cfg["terms"].append({"slot": "eta", "index": 0, "degrees": {"y": [1]}, "coeff": 0.1})
    with pytest.raises(OrderViolation):
        build_model(cfg)
    cfg = reference_config(delta=0.0)
    cfg["terms"].append({"slot": "Delta", "index": 0, "degrees": {"mu": [1, 0]}, "coeff": 0.1})
    with pytest.raises(OrderViolation):
        build_model(cfg)


def test_wrong_trig_is_rejected():
    cfg = reference_config(delta=0.0)
    cfg["terms"].append({"slot": "f", "index": 0, "k": [1, 0], "trig": "sin", "coeff": 1e-3})
    with pytest.raises(ParityViolation):
        build_model(cfg)


def test_broken_parity_residual(unperturbed):
    c = 1e-3
    bad = make_term(unperturbed.dims, "f", 0, c, k=(1, 0), trig="sin")
    model = unperturbed.with_terms([bad])
    res = check_reversibility(model, samples=4096, seed=1)
    # the x-row residual is -2 c sin(x1), so its maximum over many samples tends to 2|c|
    assert res == pytest.approx(2 * c, rel=1e-3)


def test_non_reversible_matrix_is_rejected():
    cfg = reference_config(delta=0.0)
    cfg["M"]["entries"] = [{"row": 0, "col": 0, "mu": [0, 0], "coeff": 1.0}]
    with pytest.raises((ParityViolation, SpectrumInvalid)):
        build_model(cfg)
    cfg["M"]["entries"] = []
    with pytest.raises(SpectrumInvalid):
        build_model(cfg)


def test_malformed_config():
    with pytest.raises(ConfigError):
        build_model({"dims": {"n": 2}})
    cfg = reference_config(delta=0.0)
    cfg["radii"]["y"] = -1
    with pytest.raises(ConfigError):
        build_model(cfg)


def test_equilibrium_example_parities():
    # no angles: state (y, z+, z-), involution keeps z+ and flips v = (y, z-)
    cfg = {
        "dims": {"n": 0, "m": 1, "p": 1, "s": 1},
        "radii": {"y": 0.5, "z": 0.5, "sigma": 0.1, "mu": 0.2},
        "M": {"entries": [{"row": 0, "col": 1, "mu": [0], "coeff": 1.0},
                          {"row": 1, "col": 0, "mu": [1], "coeff": 2.0},
                          {"row": 1, "col": 0, "mu": [0], "coeff": 0.5}]},
        "terms": [
            {"slot": "eta", "index": 0, "degrees": {"y": [2]}, "coeff": 0.3},
            {"slot": "eta", "index": 0, "degrees": {"z": [0, 2]}, "coeff": -0.2},
            {"slot": "zeta", "index": 0, "degrees": {"y": [1], "z": [1, 0]}, "coeff": 0.1},
            {"slot": "zeta", "index": 1, "degrees": {"z": [2, 0]}, "coeff": 0.4},
        ],
        "perturbation": {"seed": 5, "size": 1e-2, "N_f": 0},
    }
    model = build_model(cfg)
    _, y, z, sigma, mu = sample_points(model, 200, seed=2)
    x = np.zeros((200, 0))
    V = eval_field(model, x, y, z, sigma, mu)
    Vf = eval_field(model, x, -y, z * [1, -1], sigma, mu)
    U, W = V[:, 1], V[:, [0, 2]]
    Uf, Wf = Vf[:, 1], Vf[:, [0, 2]]
    assert np.abs(Uf + U).max() < 1e-15      # odd in v
    assert np.abs(Wf - W).max() < 1e-15      # even in v
    # on Fix G the u-velocity vanishes identically
    Z = z * [1, 0]
    assert np.abs(eval_field(model, x, 0 * y, Z, sigma, mu)[:, 1]).max() == 0.0


def test_involution_is_involutive(perturbed):
    x, y, z, _, _ = sample_points(perturbed, 10_000, seed=7)
    gx, gy, gz = involution(perturbed, *involution(perturbed, x, y, z))
    assert np.array_equal(gx, x) and np.array_equal(gy, y) and np.array_equal(gz, z)


def test_reversibility_of_built_models(perturbed):
    assert check_reversibility(perturbed, samples=1000, seed=11) <= 1e-12


def test_jacobian_matches_finite_differences(perturbed):
    x, y, z, sigma, mu = sample_points(perturbed, 20, seed=5)
    y, z, sigma, mu = 0.8 * y, 0.8 * z, 0.8 * sigma, 0.8 * mu
    _, J = eval_field(perturbed, x, y, z, sigma, mu, jacobian=True)
    base = np.concatenate([x, y, z, sigma, mu], axis=1)
    cuts = np.cumsum([2, 1, 2, 1])
    h = 1e-6
    for j in range(base.shape[1]):
        e = np.zeros(base.shape[1])
        e[j] = h
        hi = np.split(base + e, cuts, axis=1)
        lo = np.split(base - e, cuts, axis=1)
        fd = (eval_field(perturbed, *hi) - eval_field(perturbed, *lo)) / (2 * h)
        scale = np.abs(J).max()
        assert np.abs(fd - J[:, :, j]).max() <= 1e-6 * scale


def test_sin_perturbation_is_additive(unperturbed):
    delta = 1e-3
    # evaluation does not validate, so a non-reversible term can be added directly
    model = unperturbed.with_terms([make_term(unperturbed.dims, "f", 0, delta, k=(1, 0), trig="sin")])
    x, y, z, sigma, mu = sample_points(unperturbed, 100, seed=9)
    diff = eval_field(model, x, y, z, sigma, mu) - eval_field(unperturbed, x, y, z, sigma, mu)
    assert np.abs(diff[:, 0] - delta * np.sin(x[:, 0])).max() < 1e-15
    assert np.all(diff[:, 1:] == 0)


def test_perturbation_sizes():
    dims = Dims(2, 1, 1, 2)
    assert random_reversible_perturbation(dims, 0.0, 2, seed=1) == ()
    a = random_reversible_perturbation(dims, 1e-3, 2, seed=1)
    b = random_reversible_perturbation(dims, 1e-3, 2, seed=2)
    assert hash(tuple(a)) != hash(tuple(b))
    assert a == random_reversible_perturbation(dims, 1e-3, 2, seed=1)
    model = build_model(reference_config(delta=1e-2))
    pert = model.with_terms([]).unperturbed()
    x, y, z, sigma, mu = sample_points(model, 2000, seed=4)
    diff = eval_field(model, x, y, z, sigma, mu) - eval_field(pert, x, y, z, sigma, mu)
    for lo, hi in ((0, 2), (2, 3), (3, 5)):
        assert np.abs(diff[:, lo:hi]).max() <= 1e-2 * (1 + 1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1e-4, 1e-2, 0.1]))
def test_generated_perturbations_are_reversible(seed, size):
    model = build_model(reference_config(delta=size, seed=seed))
    assert check_reversibility(model, samples=256, seed=seed % 97) <= 1e-12


def test_json_round_trip(perturbed):
    text = perturbed.to_json()
    again = model_from_json(text)
    assert again.to_json() == text
    assert again.terms == perturbed.terms
    assert json.loads(text)["perturbation"]["size"] == 1e-3


def test_domain_is_enforced(perturbed):
    with pytest.raises(DomainExceeded):
        eval_field(perturbed, [0, 0], [0.6], [0, 0], [0], [0, 0])
    with pytest.raises(DomainExceeded):
        eval_field(perturbed, [0, 0], [0.0], [0, 0], [0], [0.3, 0])
    # angles are unrestricted
    V = eval_field(perturbed, [100 * math.pi, -7.0], [0.1], [0, 0], [0], [0, 0])
    assert np.all(np.isfinite(V))
