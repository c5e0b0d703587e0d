"""Acceptance criteria, one test each. A summary line per criterion is printed at the end of the run."""

from fractions import Fraction
import time

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.linalg import expm

from rdstatic.driver import ExperimentConfig, experiment_hydrostatics
from rdstatic.elliptic import build_census, heteroclinic_edges, linearization_spectrum, zero_mode
from rdstatic.fwgraph import (
    W_eval,
    brute_force_arborescence,
    invariant_sandwich,
    tree_polynomial_Q,
    tree_weights,
)
from rdstatic.ldp import J_functional, TestField, pointwise_maximizer, rate_I, solve_H
from rdstatic.model import build_rate_table, config_index, generator_matrix, kmc_final_states
from rdstatic.pde import DensityPath, hydro_solve, l2_norm
from rdstatic.quasipotential import mam_minimize
from rdstatic.reaction import bd_polynomials, chafee_infante_F, chafee_infante_params, concavity_criterion


def _detail(record_property, text):
    record_property("detail", text)


def _random_profile(rng, m, modes=6):
    th = np.arange(m) / m
    v = np.full(m, rng.uniform(0.3, 0.7))
    for k in range(1, modes + 1):
        v += rng.normal(0, 0.15 / k) * np.cos(2 * np.pi * k * th + rng.uniform(0, 2 * np.pi))
    return np.clip(v, 0.02, 0.98)


@pytest.mark.acceptance(1, "generator law vs KMC")
def test_acceptance_1_generator_law(record_property):
    t0 = time.perf_counter()
    N, horizon, runs = 5, 0.3, 100_000
    rates = build_rate_table((17, 1, 5))
    init = np.array([1, 1, 0, 0, 0], dtype=np.uint8)
    exact = expm(horizon * generator_matrix(N, rates))[config_index(init)]
    codes = kmc_final_states(init, rates, horizon, seed=20240601, n_runs=runs)
    freq = np.bincount(codes, minlength=2**N) / runs
    sigma = np.sqrt(exact * (1 - exact) / runs)
    z = np.abs(freq - exact) / np.where(sigma > 0, sigma, np.inf)
    elapsed = time.perf_counter() - t0
    _detail(record_property, f"max |z| = {z.max():.2f} over 32 states")
    assert np.all(np.abs(freq - exact) <= 3 * sigma + 1e-15)
    assert elapsed < 120


@pytest.mark.acceptance(2, "B/D polynomials and concavity")
def test_acceptance_2_bd_exact(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    for _ in range(20):
        fa = Fraction(int(rng.integers(1, 50)), int(rng.integers(1, 10)))
        fb = fa + Fraction(int(rng.integers(1, 50)), int(rng.integers(1, 10)))
        ci = chafee_infante_params(fa, fb)
        p = bd_polynomials(ci.rates)
        # (fb - fa) u - fb u^3 with u = 2 rho - 1, expanded by hand
        expect = (-(fb - fa) + fb, 2 * (fb - fa) - 6 * fb, 12 * fb, -8 * fb)
        assert p.F_exact == tuple(chafee_infante_F(fa, fb)) == expect
        b = p.B_exact
        b2 = [2 * b[2], 6 * b[3]] if len(b) > 3 else [2 * b[2], 0]
        analytic = b2[0] <= 0 and b2[0] + b2[1] <= 0
        assert concavity_criterion(*ci.rates) == analytic
    elapsed = time.perf_counter() - t0
    _detail(record_property, "20 exact matches")
    assert elapsed < 1.0


@pytest.mark.acceptance(3, "maximum principle and L2 contraction")
def test_acceptance_3_pde_invariants(record_property, poly12):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    dt, T, m = 1e-3, 0.5, 64
    worst_mp, worst_ratio = -np.inf, 0.0
    for _ in range(100):
        g1, g2 = _random_profile(rng, m), _random_profile(rng, m)
        p1 = hydro_solve(g1, T, dt, poly12, save_every=1)
        p2 = hydro_solve(g2, T, dt, poly12, save_every=1)
        for g, p in ((g1, p1), (g2, p2)):
            lo, hi = [g.min()], [g.max()]
            for _ in range(p.n_steps):
                lo.append(lo[-1] + dt * poly12.F(lo[-1]))
                hi.append(hi[-1] + dt * poly12.F(hi[-1]))
            breach = max(np.max(np.array(lo) - p.slices.min(axis=1)), np.max(p.slices.max(axis=1) - np.array(hi)))
            worst_mp = max(worst_mp, breach)
        d = l2_norm(p1.slices - p2.slices)
        worst_ratio = max(worst_ratio, np.max(d / (np.exp(poly12.lipschitz_F * p1.times) * d[0])))
    elapsed = time.perf_counter() - t0
    _detail(record_property, f"max envelope breach {worst_mp:.2e}, max contraction ratio {worst_ratio:.3f}")
    assert worst_mp <= 1e-8
    assert worst_ratio <= 1.05
    assert elapsed < 60


@pytest.mark.acceptance(4, "rate functional zero set and duality")
def test_acceptance_4_rate_zero_set(record_property, poly12):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(20):
        g = _random_profile(rng, 32, modes=3)
        hyd = hydro_solve(g, 0.2, 1e-4, poly12)
        worst = max(worst, rate_I(hyd, poly12) / hyd.horizon)
    # duality on a path off the hydrodynamic flow
    th = np.arange(32) / 32
    ts = np.linspace(0, 1, 41)
    path = DensityPath(1.0 / 40, 0.5 + 0.2 * np.sin(2 * np.pi * (th[None, :] + 0.7 * ts[:, None]))
                       + 0.02 * rng.standard_normal((41, 32)))
    H = solve_H(path, poly12)
    I = rate_I(path, poly12, H=H)
    rel = abs(J_functional(path, H, poly12) - I) / I
    excess = -np.inf
    for k in range(200):
        if k % 2:
            # near the maximiser, where the inequality is tight
            G = TestField(path.dt, H.values + 10.0 ** rng.uniform(-4, -1) * rng.standard_normal(H.values.shape),
                          "intervals")
        else:
            loc = "nodes" if k % 4 else "intervals"
            shape = (path.n_steps + (loc == "nodes"), path.grid_size)
            G = TestField(path.dt, rng.normal(0, 0.5) + rng.uniform(0.05, 1.0) * rng.standard_normal(shape), loc)
        excess = max(excess, J_functional(path, G, poly12) - I)
    elapsed = time.perf_counter() - t0
    _detail(record_property, f"max I/T on hydro paths {worst:.2e}; |J(H)-I|/I {rel:.1e}; max J-I {excess:.3g}")
    assert worst < 1e-5
    assert rel < 1e-6
    assert excess <= 0.0
    assert elapsed < 300


@pytest.mark.acceptance(5, "scalar oracle")
def test_acceptance_5_scalar_oracle(record_property, poly12):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    K = 4000
    worst = 0.0
    for _ in range(20):
        u, v = rng.uniform(0.05, 0.95, 2)
        T = rng.uniform(0.2, 3.0)

        def f(t):
            r = u + (v - u) * t / T
            h = pointwise_maximizer((v - u) / T, r, poly12)
            return poly12.B(r) * (1 - np.exp(h) + h * np.exp(h)) + poly12.D(r) * (1 - np.exp(-h) - h * np.exp(-h))

        oracle = quad(f, 0, T, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        ts = np.linspace(0, 1, K + 1)
        path = DensityPath(T / K, np.repeat(((1 - ts) * u + ts * v)[:, None], 16, axis=1))
        worst = max(worst, abs(rate_I(path, poly12) - oracle) / oracle)
    elapsed = time.perf_counter() - t0
    _detail(record_property, f"max relative error {worst:.1e}")
    assert worst < 1e-6
    assert elapsed < 10


@pytest.mark.acceptance(6, "stationary census and spectrum")
def test_acceptance_6_census(record_property):
    t0 = time.perf_counter()
    counts, spec_err = [], 0.0
    for fb, a in ((2, 0.5), (12, 5.5)):
        poly = bd_polynomials(build_rate_table(chafee_infante_params(1, fb).rates))
        census = build_census(poly)
        counts.append(len(census))
        half = census[census.index_of(value=0.5)]
        w = linearization_spectrum(half, poly, 11)
        k = np.arange(6)
        lam = 4 * a - 2 * np.pi**2 * k**2
        expect = np.sort(np.concatenate([lam[:1], np.repeat(lam[1:], 2)]))[::-1]
        spec_err = max(spec_err, np.max(np.abs(w - expect)))
    phi = census[census.index_of(kind="nonconstant")]
    lam0, cos = zero_mode(phi, poly)
    top = linearization_spectrum(phi, poly)[0]
    elapsed = time.perf_counter() - t0
    _detail(record_property, f"families {counts}; spectrum err {spec_err:.1e}; zero mode {lam0:.1e} (cos {cos:.9f}); "
                             f"top {top:.3f}")
    assert counts == [3, 4]
    assert spec_err < 1e-6
    assert abs(lam0) < 1e-6 and cos > 1 - 1e-6
    assert top > 0
    assert elapsed < 60


@pytest.mark.acceptance(7, "heteroclinics and zero-cost edges")
def test_acceptance_7_zero_edges(record_property, poly12, census12, vmat12):
    t0 = time.perf_counter()
    edges = heteroclinic_edges(census12, poly12)
    mam = [mam_minimize(census12[1], census12[j], poly12, (8.0,), m=16).value for j in (0, 2)]
    out = [vmat12.values[i, j] for i in (0, 2) for j in range(3) if j != i]
    elapsed = time.perf_counter() - t0
    _detail(record_property, f"edges {sorted(edges)}; MAM on edges {max(mam):.1e}; min exit cost {min(out):.4f}")
    assert edges == {(1, 0), (1, 2)}
    assert max(mam) < 1e-3
    assert min(out) > 1e-3
    assert elapsed < 900


@pytest.mark.acceptance(8, "arborescence exactness")
def test_acceptance_8_arborescence(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    det_err = 0.0
    for n in range(2, 8):
        for trial in range(1000):
            # a third of the instances carry integer weights, so ties occur
            W = rng.integers(0, 4, (n, n)).astype(float) if trial % 3 == 0 else rng.random((n, n))
            np.fill_diagonal(W, 0.0)
            tw = tree_weights(W)
            for r in range(n):
                w_b, t_b = brute_force_arborescence(W, r)
                assert abs(tw.w[r] - w_b) <= 1e-12 and list(tw.trees[r]) == t_b
            assert tw.check_triangle(W)
            for j in range(n):
                assert abs(W_eval(W[:, j], tw) - tw.normalized[j]) <= 1e-12
            if trial < 100:
                p = rng.random((n, n))
                for i in range(n):
                    a, b = tree_polynomial_Q(p, i), tree_polynomial_Q(p, i, "enumeration")
                    det_err = max(det_err, abs(a - b) / b)
    elapsed = time.perf_counter() - t0
    _detail(record_property, f"6000 instances; determinant vs enumeration {det_err:.1e}")
    assert det_err < 1e-10
    assert elapsed < 60


@pytest.mark.acceptance(9, "hydrostatics concentration")
def test_acceptance_9_hydrostatics(record_property, tmp_path):
    t0 = time.perf_counter()
    cfg = ExperimentConfig({"N": [64, 128, 256], "replicas": 200, "n_samples": 50, "burn_in": 3.0,
                            "thinning": 0.05, "delta": [0.05], "seed": 20240601})
    rep = experiment_hydrostatics(cfg, tmp_path)
    e = rep["by_N"]
    within = e["256"]["frac_within_0.05_stable"]
    split = e["256"]["split_upper_well"]
    unstable = [e[n]["frac_nearest_unstable_constant"] for n in ("64", "128", "256")]
    mean_d = [e[n]["mean_distance_to_stable"] for n in ("64", "128", "256")]
    elapsed = time.perf_counter() - t0
    _detail(record_property, f"N=256: within 0.05 {within:.3f}, split {split:.3f}; near 1/2 by N {unstable}; "
                             f"mean distance by N {[round(x, 4) for x in mean_d]}")
    assert rep["flip_symmetric"]
    assert e["256"]["n_samples"] == 10_000
    assert abs(split - 0.5) <= 0.1
    assert unstable[0] >= unstable[1] >= unstable[2] and unstable[0] > unstable[2]
    assert elapsed < 1800
    assert within >= 0.95


@pytest.mark.acceptance(10, "invariant measure sandwich")
def test_acceptance_10_sandwich(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    a, l, per = 1.2, 4, 3
    worst = np.inf
    for _ in range(1000):
        p = rng.uniform(0.01, 0.2, (l, l))
        np.fill_diagonal(p, 0.0)
        n = l * per
        P = np.zeros((n, n))
        for x in range(n):
            i = x // per
            for j in range(l):
                if j == i:
                    continue
                mass = p[i, j] * rng.uniform(1 / a, a)
                P[x, j * per:(j + 1) * per] = mass * rng.dirichlet(np.ones(per))
            inside = rng.dirichlet(np.ones(per)) * rng.uniform(0, 1 - P[x].sum())
            P[x, i * per:(i + 1) * per] += inside
            P[x, x] += 1 - P[x].sum()
        A = np.vstack([P.T - np.eye(n), np.ones(n)])
        nu = np.linalg.lstsq(A, np.r_[np.zeros(n), 1.0], rcond=None)[0]
        mass = nu.reshape(l, per).sum(axis=1)
        lo, hi = invariant_sandwich(p, p, a)
        worst = min(worst, np.min(mass - lo), np.min(hi - mass))
        assert np.all(lo <= mass) and np.all(mass <= hi)
    elapsed = time.perf_counter() - t0
    _detail(record_property, f"1000 chains, min slack {worst:.3g}")
    assert elapsed < 10
