"""Acceptance suite: one PASS/FAIL line per criterion, repeated in the run summary.

Run alone with ``pytest tests/test_acceptance.py -s`` to see the lines inline.
"""

import math
import time

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment
from sympy import Matrix
from sympy.matrices.normalforms import hermite_normal_form

from revkam.diophantine import ScaledFamilyDemo, interval, measure_curve
from revkam.errors import NewtonDiverged
from revkam.herman import Gates, PreservationSpec, run_pipeline, run_russmann, verify_identities
from revkam.model import build_model
from revkam.nondegeneracy import Jet, derivative_rank, jet_from_function, multi_indices, rho_Q
from revkam.quotient import (
    TWO_PI_LD,
    TorusLattice,
    _det,
    annihilator_project,
    circle_distance,
    lattice_normal_form,
    quotient_flow,
)
from revkam.reference import reference_config, reference_target
from revkam.revlin import (
    build_unfolding,
    classify_spectrum,
    random_reversible,
    standard_involution,
    synthesize,
)
from revkam.solver import SolverOptions, parity_check, solve_source_torus, verify_floquet_form


def union_length(intervals, lo, hi):
    total, cur = 0.0, None
    for a, b in sorted((max(a, lo), min(b, hi)) for a, b in intervals if b > lo and a < hi):
        if cur is None or a > cur[1]:
            if cur is not None:
                total += cur[1] - cur[0]
            cur = [a, b]
        else:
            cur[1] = max(cur[1], b)
    return total + (cur[1] - cur[0] if cur is not None else 0.0)


def scalar_failing_measure(gamma, tau, K_max):
    """Failing set of a in [1, 2] for the frequency a itself: |k a| < gamma |k|^-tau."""
    ivs = [(-gamma / k ** (tau + 1), gamma / k ** (tau + 1)) for k in range(1, K_max + 1)]
    return union_length(ivs, 1.0, 2.0)


def pair_failing_measure(gamma, tau, K_max):
    """Failing set of a in [1, 2] for frequencies (1, a), as a union of resonance intervals."""
    ivs = []
    for k2 in range(1, K_max + 1):
        for k1 in range(-(K_max - k2), K_max - k2 + 1):
            half = gamma * (abs(k1) + k2) ** (-tau) / k2
            ivs.append((-k1 / k2 - half, -k1 / k2 + half))
    return union_length(ivs, 1.0, 2.0)


def grid_axes(radius, n):
    """Broadcastable coordinate arrays of the box [-radius, radius]^n."""
    axis = np.arange(-radius, radius + 1, dtype=np.int64)
    return [axis.reshape([-1 if i == j else 1 for i in range(n)]) for j in range(n)]


def echelon_membership(G, axes):
    """Lattice membership on a grid by exact elimination against a Hermite basis.

    After eliminating the coordinates above c, coordinate c only depends on
    the axes c, ..., n-1, so broadcasting keeps every step small.
    """
    H = hermite_normal_form(Matrix(G.tolist()).T)
    basis = [np.array(c, dtype=np.int64) for c in H.T.tolist() if any(c)]
    pivots = [int(np.flatnonzero(b)[-1]) for b in basis]
    assert len(set(pivots)) == len(pivots)
    cols = list(axes)
    ok = np.ones((1,) * len(axes), dtype=bool)
    for c in range(len(cols) - 1, -1, -1):
        if c in pivots:
            b = basis[pivots.index(c)]
            ok = ok & (cols[c] % b[c] == 0)
            q = cols[c] // b[c]
            cols = [x - q * b[j] if b[j] else x for j, x in enumerate(cols)]
        else:
            ok = ok & (cols[c] == 0)
    return np.broadcast_to(ok, np.broadcast_shapes(*(x.shape for x in axes))).ravel()


def shape_membership(nf, axes):
    Q = np.array(nf.Qmat, dtype=np.int64)
    mods = [0] * (nf.n - nf.k) + list(nf.qvals)
    ok = np.ones((1,) * len(axes), dtype=bool)
    for j, q in enumerate(mods):
        w = sum(int(Q[i, j]) * x for i, x in enumerate(axes))
        ok = ok & (w == 0 if q == 0 else w % q == 0)
    return np.broadcast_to(ok, np.broadcast_shapes(*(x.shape for x in axes))).ravel()


def test_spectrum_pairing(report):
    rng = np.random.Generator(np.random.Philox(1))
    start = time.perf_counter()
    worst, round_trip = 0.0, True
    for trial in range(1000):
        p = 1 + trial % 4
        M = random_reversible(rng, p)
        R = standard_involution(p)
        eig = np.linalg.eigvals(M)
        cost = np.abs(eig[:, None] + eig[None, :])
        rows, cols = linear_sum_assignment(cost)
        worst = max(worst, cost[rows, cols].max() / np.abs(M).max())
        form = classify_spectrum(M, R).sorted()
        M2, R2 = synthesize(form)
        again = classify_spectrum(M2, R2).sorted()
        round_trip &= again.kinds == form.kinds and again.isclose(form, rtol=1e-9)
    elapsed = time.perf_counter() - start
    ok = worst < 1e-8 and round_trip and elapsed < 10
    report("criterion 1 (spectrum pairing)", ok,
           f"worst pairing {worst:.1e} / |M|, round trip {'exact' if round_trip else 'broken'}, {elapsed:.1f} s")
    assert ok


def test_unfolding_contract(report):
    rng = np.random.Generator(np.random.Philox(2))
    start = time.perf_counter()
    worst, ranks_ok = 0.0, True
    for trial in range(50):
        p = 1 + trial % 4
        M = random_reversible(rng, p)
        R = standard_involution(p)
        unf = build_unfolding(M, R)
        for chi in rng.uniform(-0.05, 0.05, (3, p)):
            X = unf(np.zeros(0), chi)
            worst = max(worst, np.abs(X @ R + R @ X).max())
        ranks_ok &= np.linalg.matrix_rank(unf.chi_jacobian(), tol=1e-6) == p
    elapsed = time.perf_counter() - start
    ok = worst < 1e-10 and ranks_ok and elapsed < 30
    report("criterion 2 (unfolding contract)", ok,
           f"anti-commutation {worst:.1e}, full rank {ranks_ok}, {elapsed:.1f} s")
    assert ok


def test_diophantine_measure(report):
    gammas = [1e-2, 1e-3, 1e-4]
    start = time.perf_counter()
    rows = measure_curve(interval(1.0, 2.0), lambda pts: (pts, None), 2.0, 0, 200, gammas, 100_000, 0,
                         vectorized=True)
    fails = [1 - frac for _, frac, _ in rows]
    oracle = [scalar_failing_measure(g, 2.0, 200) for g in gammas]
    elapsed = time.perf_counter() - start
    within = all((f == o == 0.0) or (o > 0 and 0.5 <= f / o <= 2) for f, o in zip(fails, oracle))
    monotone = fails[0] >= fails[1] >= fails[2]
    ok = within and monotone and elapsed < 60
    report("criterion 3 (diophantine measure, frequency a)", ok,
           f"failing {fails}, oracle {oracle}, {elapsed:.1f} s; the set is empty since |k a| >= 1")
    assert ok

    # the same protocol where resonances do occur: frequencies (1, a)
    start = time.perf_counter()
    pair = lambda pts: (np.hstack([np.ones((len(pts), 1)), pts]), None)
    rows = measure_curve(interval(1.0, 2.0), pair, 2.0, 0, 200, gammas, 100_000, 0, vectorized=True)
    fails = [1 - frac for _, frac, _ in rows]
    oracle = [pair_failing_measure(g, 2.0, 200) for g in gammas]
    elapsed = time.perf_counter() - start
    ratios = [f / o for f, o in zip(fails, oracle)]
    monotone = fails[0] > fails[1] > fails[2]
    # sampling noise: about 5 expected hits at the smallest gamma
    statistical = all(abs(f - o) <= 4 * math.sqrt(o / 100_000) + 1e-5 for f, o in zip(fails, oracle))
    ok = monotone and statistical and elapsed < 60
    report("criterion 3 companion (frequencies (1, a))", ok,
           "ratio sampled/oracle " + ", ".join(f"{r:.2f}" for r in ratios)
           + f" (within 2x: {all(0.5 <= r <= 2 for r in ratios)}), within 4 sigma: {statistical}, {elapsed:.1f} s")
    assert ok


def random_jet(rng, s, n, Q, rank=None):
    B = rng.standard_normal((n, rank)) if rank is not None else None
    coeffs = {}
    for J in range(1, Q + 1):
        for q in multi_indices(s, J):
            c = rng.standard_normal(rank if rank is not None else n)
            coeffs[q] = B @ c if B is not None else c
    return Jet(np.zeros(s), Q, coeffs)


def test_nondegeneracy_oracle(report):
    rng = np.random.Generator(np.random.Philox(4))
    agree = 0
    for trial in range(200):
        s, n, Q = (int(x) for x in rng.integers(1, 4, size=3))
        rank = int(rng.integers(1, n)) if trial % 2 and n > 1 else None
        jet = random_jet(rng, s, n, Q, rank)
        agree += (rho_Q(jet) > 1e-6) == (derivative_rank(jet) == n)
    worked = rho_Q(jet_from_function(lambda mu: np.array([mu[0], mu[0] ** 2]), np.zeros(1), 2))
    ok = agree == 200 and abs(worked - 2 / math.sqrt(5)) < 1e-4
    report("criterion 4 (nondegeneracy oracle)", ok,
           f"{agree}/200 jets agree, rho for (mu, mu^2) = {worked:.8f} vs {2 / math.sqrt(5):.8f}")
    assert ok


def test_quotient_algebra(report):
    rng = np.random.Generator(np.random.Philox(5))
    axes = grid_axes(20, 4)
    start = time.perf_counter()
    shape_ok = det_ok = sets_ok = True
    worst = 0.0
    for _ in range(100):
        G = rng.integers(-9, 10, size=(int(rng.integers(1, 6)), 4))
        L = TorusLattice.from_rows(G.tolist())
        nf = lattice_normal_form(L)
        shape_ok &= (nf.k == np.linalg.matrix_rank(G.astype(float)) and min(nf.qvals, default=1) >= 1
                     and all(a % b == 0 for a, b in zip(nf.qvals, nf.qvals[1:])))
        det_ok &= _det([list(r) for r in nf.Qmat]) == 1
        sets_ok &= bool(np.array_equal(shape_membership(nf, axes), echelon_membership(G, axes)))
        omega = rng.uniform(-2, 2, 4)
        flow = quotient_flow(L, omega)
        freq = np.array([sum(np.longdouble(c) * np.longdouble(w) for c, w in zip(row, omega))
                         for row in nf.quotient_rows()])
        for _ in range(5):
            phi = rng.uniform(0, 2 * math.pi, 4).astype(np.longdouble)
            t = np.longdouble(rng.uniform(-10, 10))
            lhs = annihilator_project(flow, phi + omega.astype(np.longdouble) * t)
            rhs = np.mod(annihilator_project(flow, phi).astype(np.longdouble) + freq * t, TWO_PI_LD)
            worst = max(worst, float(circle_distance(lhs, rhs.astype(float)).max(initial=0.0)))
    elapsed = time.perf_counter() - start
    ok = shape_ok and det_ok and sets_ok and worst < 1e-10 and elapsed < 30
    report("criterion 5 (quotient algebra)", ok,
           f"shape {shape_ok}, det +1 {det_ok}, set equality on {41 ** 4} points {sets_ok}, "
           f"semiconjugacy {worst:.1e}, {elapsed:.1f} s")
    assert ok


def counterterm_size(sol):
    return float(np.abs(np.concatenate([sol.u, sol.v, sol.w])).max())


def test_source_solver(report):
    start = time.perf_counter()
    model = build_model(reference_config(delta=1e-3))
    sol = solve_source_torus(model, reference_target(), SolverOptions(N_F=16))
    defect = verify_floquet_form(model, sol)["max"]
    parity = parity_check(sol, model.R)
    sizes = [counterterm_size(solve_source_torus(build_model(reference_config(delta=d)), reference_target(),
                                                 SolverOptions(N_F=16))) for d in (1e-2, 1e-3, 1e-4)]
    ratios = [a / b for a, b in zip(sizes, sizes[1:])]
    elapsed = time.perf_counter() - start
    ok = (sol.newton_iters <= 8 and defect < 1e-9 and parity < 1e-13
          and all(5 <= r <= 20 for r in ratios) and elapsed < 120)
    report("criterion 6 (source solver)", ok,
           f"{sol.newton_iters} iterations, Floquet defect {defect:.1e}, parity {parity:.1e}, "
           f"counterterm ratios per decade {ratios[0]:.2f}, {ratios[1]:.2f}, {elapsed:.1f} s")
    assert ok


def test_drift_obstruction(report):
    c = 1e-2
    start = time.perf_counter()
    opts = SolverOptions(N_F=16)
    outcomes = []
    for delta in (0.0, 1e-3):
        model = build_model(reference_config(delta=delta, drift=c))
        try:
            solve_source_torus(model, reference_target(), SolverOptions(N_F=16, freeze_v=True))
            diverged = False
        except NewtonDiverged:
            diverged = True
        v = solve_source_torus(model, reference_target(), opts).v[0]
        v0 = solve_source_torus(build_model(reference_config(delta=delta)), reference_target(), opts).v[0]
        outcomes.append((diverged, abs(v - v0 + c)))
    elapsed = time.perf_counter() - start
    ok = all(d and err < 1e-6 for d, err in outcomes) and elapsed < 60
    report("criterion 7 (drift obstruction)", ok,
           f"frozen v diverges {[d for d, _ in outcomes]}, |v + c| {outcomes[0][1]:.1e} unperturbed, "
           f"{outcomes[1][1]:.1e} shift at delta 1e-3, {elapsed:.1f} s")
    assert ok


def test_partial_preservation(report):
    model = build_model(reference_config(delta=1e-3))
    start = time.perf_counter()
    result = run_pipeline(model, PreservationSpec(S1=(1,), T=(1,)), gates=Gates(tau=4.0, gamma=1e-4, K_max=200),
                          options=SolverOptions(N_F=8), radius=0.1, points=9)
    elapsed = time.perf_counter() - start
    ids = verify_identities(result, model)
    kinds = classify_spectrum(model.M(np.zeros(2)), model.R).kinds
    kinds_ok = all(classify_spectrum(p.M_tilde, model.R).kinds == kinds for p in result.accepted)
    frac = result.accepted_fraction()
    ok = (ids["omega_plus"] < 1e-8 and kinds_ok and ids["anticommutation"] < 1e-10
          and frac > 0.9 and elapsed < 600)
    report("criterion 8 (partial preservation)", ok,
           f"{len(result.accepted)}/{len(result.gated)} gated points accepted ({frac:.2f}), "
           f"|omega_plus - b| {ids['omega_plus']:.1e}, class counts kept {kinds_ok}, "
           f"anti-commutation {ids['anticommutation']:.1e}, {elapsed:.0f} s")
    assert ok


def test_zero_d_specialization(report):
    model = build_model(reference_config(delta=1e-3))
    axes = [np.linspace(-0.1, 0.1, 3), np.linspace(-0.1, 0.1, 3)]
    generic = run_pipeline(model, PreservationSpec(), grids=(axes, []), options=SolverOptions(N_F=8))
    dedicated = run_russmann(model, axes, options=SolverOptions(N_F=8))
    xi_zero = all(np.all(p.xi == 0) for p in generic.points if p.xi is not None)
    same = generic.to_csv() == dedicated.to_csv()
    ok = xi_zero and len(generic.accepted) > 0 and same
    report("criterion 9 (nothing preserved)", ok,
           f"parameter shift identically zero {xi_zero}, {len(generic.accepted)} accepted, identical to dedicated run {same}")
    assert ok


def test_scaled_family_demo(report):
    demo = ScaledFamilyDemo()
    high = [demo.pass_fraction(b, 1e-4)[0] for b in (demo.c2, 1.5 * demo.c2, 3 * demo.c2, 10 * demo.c2)]
    low = [demo.pass_fraction(b, 1e-4)[0] for b in (0.1, 0.5, 1.0, demo.c1)]
    ok = all(f == 0.0 for f in high) and all(f > 0.9 for f in low)
    report("criterion 10 (scaled family)", ok,
           f"pass fraction beyond c2 {high}, at or below c1 min {min(low):.3f}")
    assert ok
