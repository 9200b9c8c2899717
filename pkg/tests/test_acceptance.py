"""
Acceptance suite: one test per criterion, each printing a PASS/FAIL line
with the measured quantity, the tolerance and the wall-clock time.

Run on its own with ``pytest tests/test_acceptance.py -v -s``, or as a
script: ``python3 tests/test_acceptance.py``.
"""
import json
import shutil
import time

import mpmath
import numpy as np
import pytest

from palaeovar import fixture_path
from palaeovar.bessel import x_k1
from palaeovar.cli import main
from palaeovar.covariance import (TEMPORAL_RADIUS, build_spatial_correlation, build_temporal_correlation,
                                  dense_covariance, factorize, matern_c)
from palaeovar.diagnostics import analysis_covariance, gain, ls_study, lt_study, resolution_matrix
from palaeovar.domain import GridSpec
from palaeovar.obs_operator import budyko_mu, gdd5
from palaeovar.scaling import ScalingContext
from palaeovar.solver import Problem, SolverConfig, evaluate_cost
from palaeovar.synthetic import LT_MTWA, build_problem, lt_prior, lt_problem, multisite_problem, smooth_prior
from palaeovar.twin import TwinConfig, run_twin

from _fixtures import SC, linear_problem, nine_cell_problem, sites_at

RESULTS = {}


def record(number, title, ok, detail, elapsed, limit=None):
    timing = f"{elapsed:.2f}s" + (f" (limit {limit:g}s)" if limit else "")
    ok = bool(ok) and (limit is None or elapsed < limit)
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}; {timing}"
    RESULTS[number] = line
    print(line)
    return ok


# 1 -------------------------------------------------------------------------
def test_criterion_01_gradient():
    t0 = time.perf_counter()
    p = nine_cell_problem()
    f = p.factor(400.0, 1.0)
    J = lambda w: evaluate_cost(w, p.x_b, p.y, p.r_inv, f, p.operator, gradient=False).J
    rng = np.random.default_rng(2024)
    worst, h = 0.0, 1e-6
    for _ in range(20):
        w = 0.3 * rng.standard_normal(f.size)
        g = evaluate_cost(w, p.x_b, p.y, p.r_inv, f, p.operator).gradient
        fd = np.array([(J(w + h * e) - J(w - h * e)) / (2 * h) for e in np.eye(f.size)])
        worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    assert record(1, "gradient vs central differences", worst < 1e-5,
                  f"worst relative error {worst:.2e} over 20 points (tol 1e-05)", time.perf_counter() - t0, 10)


# 2 -------------------------------------------------------------------------
def test_criterion_02_blue():
    t0 = time.perf_counter()
    tight = SolverConfig(gradient_norm_tolerance=1e-8, max_iterations=2000)
    worst_lin = 0.0
    for seed, (M, n) in enumerate([(1, 4), (2, 6), (3, 8)]):
        p, f = linear_problem(M=M, n_obs=n, seed=seed)
        K = gain(f, p.operator.A, p.r_inv)
        blue = p.x_b + K @ (p.y - p.operator.apply(p.x_b))
        worst_lin = max(worst_lin, np.max(np.abs(p.solve(f, tight).x_a - blue)))

    prior = lt_prior()
    vals = np.zeros((1, 6)); vals[0, 2] = 14.0
    present = np.zeros((1, 6), bool); present[0, 2] = True
    se = np.ones((1, 6)); se[0, 2] = 1.5
    p = build_problem(prior, sites_at(prior.grid, [0], vals, se, present))
    f = p.factor(400.0, 1.0)
    x_a = p.solve(f).x_a
    H = p.operator.jacobian(p.x_b).toarray()[2]
    b, r, hb = H @ f.apply_B(H), 1.0 / p.r_inv[2], p.operator.apply(p.x_b)[2]
    scalar = abs(p.operator.apply(x_a)[2] - (hb + b * (p.y[2] - hb) / (b + r)))
    ok = worst_lin < 1e-6 and scalar < 1e-9
    assert record(2, "BLUE equivalence", ok,
                  f"linear max error {worst_lin:.1e} (tol 1e-06), scalar error {scalar:.1e} (tol 1e-09)",
                  time.perf_counter() - t0)


# 3 -------------------------------------------------------------------------
def test_criterion_03_prior_recovery():
    t0 = time.perf_counter()
    p = nine_cell_problem()
    res = Problem(p.grid, p.x_b, p.sigma, p.y, np.zeros_like(p.r_inv), p.operator, SC).solve(p.factor(400.0, 1.0))
    exact = np.array_equal(res.x_a, p.x_b)
    dim = smooth_prior(p.grid).state()
    rt = np.max(np.abs(res.x_a_dimensional - dim) / np.maximum(np.abs(dim), 1.0))
    assert record(3, "prior recovery", exact and rt < 1e-8,
                  f"non-dimensional exact={exact}, dimensional round trip {rt:.1e} (tol 1e-08)",
                  time.perf_counter() - t0)


# 4 -------------------------------------------------------------------------
def test_criterion_04_covariance():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    e_dense = e_fact = 0.0
    min_q = np.inf
    for M in (1, 2, 3, 4):
        grid = GridSpec.from_bounds(36, 38, 20, 20 + 2 * M, 2.0)
        sigma = 0.5 + rng.random(13 * M)
        C_s, C_t = build_spatial_correlation(grid, 400.0), build_temporal_correlation(1.0)
        ref = np.empty((13 * M, 13 * M))
        for i in range(13 * M):
            for j in range(13 * M):
                ref[i, j] = sigma[i] * sigma[j] * C_s[i // 13, j // 13] * C_t[i % 13, j % 13]
        B = dense_covariance(sigma, C_s, C_t)
        e_dense = max(e_dense, np.max(np.abs(B - ref)))
        G = factorize(sigma, C_s, C_t).dense_factor()
        e_fact = max(e_fact, np.max(np.abs(G @ G.T - B)))
        for _ in range(50):
            v = rng.standard_normal(B.shape[0])
            min_q = min(min_q, v @ B @ v)
    ok = e_dense < 1e-12 and e_fact < 1e-8 and min_q >= 0
    assert record(4, "covariance structure", ok,
                  f"|B - Sig(Cs x Ct)Sig| {e_dense:.1e} (tol 1e-12), |GG^T - B| {e_fact:.1e} (tol 1e-08), "
                  f"min v^T B v {min_q:.3g} over 200 v", time.perf_counter() - t0)


# 5 -------------------------------------------------------------------------
def test_criterion_05_matern():
    t0 = time.perf_counter()
    at_zero = matern_c(0.0, 1.0, TEMPORAL_RADIUS)
    mpmath.mp.dps = 40
    oracle = float(mpmath.besselk(1, 1))
    err = abs(float(x_k1(1.0)) - oracle)
    sweep = matern_c(np.linspace(0, np.pi, 100), 1.0, TEMPORAL_RADIUS)
    mono = bool(np.all(np.diff(sweep) < 0))
    ok = at_zero == 1.0 and err < 1e-9 and mono
    assert record(5, "Matern kernel", ok,
                  f"c(0)={at_zero!r}, |xK1(1) - {oracle:.6f}| {err:.1e} (tol 1e-09), strictly decreasing={mono}",
                  time.perf_counter() - t0)


# 6 -------------------------------------------------------------------------
def test_criterion_06_lt_study():
    t0 = time.perf_counter()
    entries = lt_study(lt_problem(), [0.1, 1.0, 2.0])
    rough = [e.roughness for e in entries]
    smoother = all(a - b > 1e-6 for a, b in zip(rough, rough[1:]))
    july = entries[0].analysis_monthly[6]
    within = abs(july - LT_MTWA) < 2.0 - 1e-6                  # sigma of the MTWA observation
    d = np.diag(entries[0].resolution)
    others = np.delete(d, [1, 7])
    dominate = min(d[1], d[7]) - others.max() > 1e-6
    ok = smoother and within and dominate
    assert record(6, "L_t study", ok,
                  f"roughness {rough[0]:.1f} > {rough[1]:.1f} > {rough[2]:.1f}, July {july:.2f} vs {LT_MTWA} "
                  f"(sigma 2), N_jan {d[1]:.3f} N_jul {d[7]:.3f} vs others <= {others.max():.2e}",
                  time.perf_counter() - t0, 5)


# 7 -------------------------------------------------------------------------
def test_criterion_07_ls_study():
    t0 = time.perf_counter()
    grid = GridSpec.from_bounds(30, 50, -10, 50, 2.0)
    st = ls_study(multisite_problem(grid, 12, seed=0), [100.0 * k for k in range(1, 9)])
    finite = bool(np.all(np.isfinite(st.kappa)))
    ok = finite and st.kappa[-1] > st.kappa[0]
    assert record(7, "L_s study trend", ok,
                  f"kappa(100 km) {st.kappa[0]:.4g}, kappa(800 km) {st.kappa[-1]:.4g}, finite={finite}, "
                  f"Spearman {st.trend:.2f}", time.perf_counter() - t0, 30)


# 8 -------------------------------------------------------------------------
def test_criterion_08_diagnostics():
    t0 = time.perf_counter()
    p, f = linear_problem(M=3, n_obs=7, seed=8)
    H = p.operator.A
    K0 = gain(f, H, np.zeros_like(p.r_inv))
    no_info = not np.any(K0) and not np.any(resolution_matrix(f, K0, H))

    rng = np.random.default_rng(8)
    grid = GridSpec.from_bounds(36, 38, 20, 22)
    f1 = factorize(0.5 + rng.random(13), build_spatial_correlation(grid, 400.0), build_temporal_correlation(1.0))
    I = np.eye(13)
    N1 = resolution_matrix(f1, gain(f1, I, np.full(13, 1e8)), I)
    full = np.max(np.abs(N1 - I))

    excess = -np.inf
    fixtures = [linear_problem(M=m, n_obs=n, seed=s) for s, (m, n) in enumerate([(1, 3), (2, 9), (4, 20)])]
    for q in (nine_cell_problem(), lt_problem()):
        fixtures.append((q, q.factor(400.0, 1.0)))
    for q, fq in fixtures:
        Hq = q.operator.jacobian(q.x_b)
        Hq = Hq.toarray() if hasattr(Hq, "toarray") else Hq
        A = analysis_covariance(gain(fq, Hq, q.r_inv), Hq, fq)
        excess = max(excess, np.max(np.diag(A) - np.diag(fq.dense_B())))
    ok = no_info and full < 1e-3 and excess <= 1e-8
    assert record(8, "diagnostics identities", ok,
                  f"K = N = 0 without information: {no_info}, |N - I| {full:.1e} (tol 1e-03), "
                  f"max diag(A) - diag(B) {excess:.1e} (tol 1e-08)", time.perf_counter() - t0)


# 9 -------------------------------------------------------------------------
def test_criterion_09_appendix_pins():
    t0 = time.perf_counter()
    sc = ScalingContext()
    Ps = sc.P_star
    cont = abs(sc.dp_forward(Ps * (1 - 1e-15)) - sc.dp_forward(Ps * (1 + 1e-15)))
    P = np.geomspace(1e-2, 1e4, 1001)
    rt_p = np.max(np.abs(sc.dp_inverse(sc.dp_forward(P)) / P - 1))
    w = np.linspace(-8, 8, 1001)
    rt_w = np.max(np.abs(sc.dp_forward(sc.dp_inverse(w)) - w))
    T3 = np.zeros(12); T3[0] = 3.0
    gdd = max(abs(gdd5(np.ones(12))), abs(gdd5(np.full(12, 2.0)) - 1), abs(gdd5(T3) - 62 / 365))
    bud = max(abs(budyko_mu(0.0)), abs(budyko_mu(1.0) - (2 - 2 ** (1 / 3))), abs(budyko_mu(1e5) - 1))
    ok = cont < 1e-12 and max(rt_p, rt_w) < 1e-10 and gdd < 1e-12 and bud < 1e-9
    assert record(9, "appendix pins", ok,
                  f"D_P jump at P* {cont:.1e}, round trips {max(rt_p, rt_w):.1e}, GDD5 {gdd:.1e}, "
                  f"Budyko {bud:.1e}", time.perf_counter() - t0)


# 10 ------------------------------------------------------------------------
def test_criterion_10_twin():
    t0 = time.perf_counter()
    grid = GridSpec.from_bounds(30, 50, 0, 20, 2.0)
    assert grid.M == 100
    improved, converged, ratios = 0, 0, []
    for seed in range(10):
        r = run_twin(grid, seed, TwinConfig(fraction=0.3, noise=0.05))
        improved += bool(np.all(r.obs_rmse_analysis < r.obs_rmse_prior))
        converged += r.converged
        ratios.append(np.max(r.obs_rmse_analysis / r.obs_rmse_prior))
    assert record(10, "twin experiment", improved == 10,
                  f"{improved}/10 seeds improve every observed variable (worst RMSE ratio {max(ratios):.3f}); "
                  f"{converged}/10 solver runs hit the gradient tolerance", time.perf_counter() - t0, 300)


# 11 ------------------------------------------------------------------------
def test_criterion_11_determinism(tmp_path):
    t0 = time.perf_counter()
    src = tmp_path / "fixture"
    src.mkdir()
    for n in ["config.yaml", "modern.tsv", "m1_lgm.tsv", "m1_pi.tsv", "m2_lgm.tsv", "m2_pi.tsv", "sites.csv"]:
        shutil.copy(fixture_path(n), src / n)
    same = True
    for cmd in ("assimilate", "twin"):
        a, b = tmp_path / f"{cmd}_a", tmp_path / f"{cmd}_b"
        main([cmd, "--config", str(src / "config.yaml"), "--output", str(a)])
        main([cmd, "--config", str(a / "manifest.json"), "--output", str(b)])
        for f in sorted(a.iterdir()):
            if f.name in ("manifest.json", "timings.json"):
                continue
            same &= f.read_bytes() == (b / f.name).read_bytes()
        ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, b))
        same &= ma["outputs"] == mb["outputs"]
    assert record(11, "determinism", same, f"re-runs from manifests byte-identical: {same}",
                  time.perf_counter() - t0)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
