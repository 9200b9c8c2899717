import numpy as np
import pytest

from palaeovar.diagnostics import (DENSE_MAX_CELLS, AnalysisCovariance, SingularMatrixError, analysis_covariance,
                                   condition_number, gain, hessian_surrogate, identity_closeness, ls_study,
                                   lt_study, posterior_spread, prior_spread, resolution_matrix, roughness)
from palaeovar.domain import GridSpec
from palaeovar.obs_operator import LinearObservationOperator
from palaeovar.solver import Problem
from palaeovar.synthetic import LT_MTWA, lt_problem, multisite_problem

from _fixtures import linear_problem, nine_cell_problem


def test_condition_number():
    assert condition_number(np.eye(4)) == 1.0
    assert condition_number(np.diag([4.0, 1.0])) == pytest.approx(4.0)
    S = np.array([[3.0, 1.0], [1.0, 2.0]])
    assert condition_number(7.5 * S) == pytest.approx(condition_number(S), rel=1e-12)
    with pytest.raises(SingularMatrixError):
        condition_number(np.diag([1.0, 1e-16]))


def test_gain_limits_and_defining_equation():
    p, f = linear_problem(M=4, n_obs=7, seed=2)
    H = p.operator.A
    assert not np.any(gain(f, H, np.zeros(7)))
    K = gain(f, H, p.r_inv)
    B = f.dense_B()
    S = H @ B @ H.T + np.diag(1 / p.r_inv)
    assert np.max(np.abs(K @ S - B @ H.T)) < 1e-8 * max(1.0, np.abs(B @ H.T).max())


def test_scalar_gain_and_analysis_covariance():
    from palaeovar.covariance import factorize
    f = factorize(np.ones(13), np.eye(1), np.eye(13))
    H = np.zeros((1, 13)); H[0, 4] = 1.0
    K = gain(f, H, np.array([1.0]))
    assert K[4, 0] == pytest.approx(0.5) and np.count_nonzero(K) == 1
    A = analysis_covariance(K, H, f)
    assert A[4, 4] == pytest.approx(0.5)
    assert np.allclose(analysis_covariance(np.zeros_like(K), H, f), f.dense_B())


def test_analysis_covariance_views_and_variance_reduction():
    for p, f in (linear_problem(M=3, n_obs=9, seed=5), (nine_cell_problem(), None)):
        f = f or p.factor(400.0, 1.0)
        H = p.operator.jacobian(p.x_b)
        K = gain(f, H, p.r_inv)
        A = AnalysisCovariance(K, H, f)
        D = A.dense()
        B = f.dense_B()
        assert np.all(np.diag(D) <= np.diag(B) + 1e-8)
        v = np.random.default_rng(0).standard_normal(f.size)
        assert np.allclose(A.matvec(v), D @ v, atol=1e-10)
        blocks = A.cell_blocks()
        for m in range(f.M):
            sl = slice(13 * m, 13 * m + 13)
            assert np.allclose(blocks[m], 0.5 * (D[sl, sl] + D[sl, sl].T), atol=1e-12)
        assert np.allclose(A.diagonal(), np.diag(D), atol=1e-12)


def test_dense_gate():
    g = GridSpec.from_bounds(30, 40, 0, 8, 2.0)
    assert g.M > DENSE_MAX_CELLS
    p = multisite_problem(g, 4)
    f = p.factor(400.0, 1.0)
    H = p.operator.jacobian(p.x_b)
    K = gain(f, H, p.r_inv)
    assert isinstance(analysis_covariance(K, H, f), AnalysisCovariance)
    with pytest.raises(ValueError):
        resolution_matrix(f, K, H)
    cols = resolution_matrix(f, K, H, columns=[0, 14])
    assert cols.shape == (f.size, 2)


def test_resolution_limits():
    p, f = linear_problem(M=2, n_obs=6, seed=3)
    H = p.operator.A
    assert not np.any(resolution_matrix(f, gain(f, H, np.zeros(6)), H))
    N = resolution_matrix(f, gain(f, H, p.r_inv), H)
    assert -1e-8 <= np.trace(N) <= np.linalg.matrix_rank(H) + 1e-8

    grid = GridSpec.from_bounds(36, 38, 20, 22)
    rng = np.random.default_rng(1)
    full = Problem(grid, rng.standard_normal(13), 0.5 + rng.random(13), np.zeros(13), np.full(13, 1e8),
                   LinearObservationOperator(np.eye(13)))
    f1 = full.factor(400.0, 1.0)
    N1 = resolution_matrix(f1, gain(f1, np.eye(13), full.r_inv), np.eye(13))
    assert np.max(np.abs(N1 - np.eye(13))) < 1e-3
    assert identity_closeness(N1) < 1e-3


def test_spread_reduction_at_sites():
    p = nine_cell_problem()
    f = p.factor(400.0, 1.0)
    res = p.solve(f)
    H = p.operator.jacobian(p.x_b)
    A = AnalysisCovariance(gain(f, H, p.r_inv), H, f)
    post = posterior_spread(p.operator, res.x_a, A)
    prior_at_a = prior_spread(p.operator, res.x_a, f)
    assert np.all(post <= prior_at_a + 1e-8)


def test_roughness():
    assert roughness(np.full(12, 3.0)) == 0.0
    s = np.zeros(12); s[0] = 1.0
    assert roughness(s) == pytest.approx(6.0)      # second differences 1, -2, 1


def test_lt_study_shape_and_determinism():
    p = lt_problem()
    a = lt_study(p, [0.1, 1.0, 2.0])
    b = lt_study(p, [0.1, 1.0, 2.0])
    assert [e.L_t for e in a] == [0.1, 1.0, 2.0]
    for x, y in zip(a, b):
        assert x.resolution.shape == (13, 13)
        assert np.array_equal(x.analysis_monthly, y.analysis_monthly)
        assert np.array_equal(x.resolution, y.resolution)
    assert a[0].roughness > a[1].roughness > a[2].roughness
    assert abs(a[0].analysis_monthly[6] - LT_MTWA) <= 2.0
    with pytest.raises(ValueError):
        lt_study(nine_cell_problem(), [1.0])
    with pytest.raises(ValueError):
        lt_study(p, [])


def test_ls_study_rows_and_trend():
    g = GridSpec.from_bounds(30, 50, -10, 50, 2.0)
    st = ls_study(multisite_problem(g, 12), [100 * k for k in range(1, 9)])
    assert st.kappa.shape == (8,) and np.all(np.isfinite(st.kappa))
    assert st.increasing and st.kappa[-1] > st.kappa[0]
    single = ls_study(multisite_problem(g, 1), np.linspace(100, 800, 15))
    assert np.all(np.isfinite(single.kappa))
    with pytest.raises(ValueError):
        ls_study(multisite_problem(g, 1), [])


def test_hessian_surrogate_drops_absent_slots():
    p = lt_problem()
    hs = hessian_surrogate(p.factor(400.0, 1.0), p.operator.jacobian(p.x_b), p.r_inv)
    assert hs.S.shape == (2, 2) and list(hs.rows) == [3, 4]
    assert np.array_equal(hs.S, hs.S.T)
