import math

import numpy as np
import pytest

from palaeovar.domain import DomainError, GridSpec, MONTH_LENGTHS
from palaeovar.obs_operator import (DEFAULT_CONSTANTS, assemble_H, assemble_h,
                                    budyko_inverse, budyko_mu, budyko_mu_derivative, gdd5, magnus_slope,
                                    magnus_slope_derivative, moisture_index, site_jacobian, site_observe)
from palaeovar.radiation import MID_MONTH_DAYS, ConstantRadiation, Davis2016Radiation

from _fixtures import SC, sites_at

REF_MI = 49.71986913827788          # T = 15 degC, S = 0.5, 37.5 N, P = 500 mm/yr, davis2016
REF_ALPHA = 0.9998651603509053


def test_magnus():
    assert magnus_slope(0.0) == pytest.approx(10.5485 / 237.3 ** 2, rel=1e-15)
    assert magnus_slope(0.0) == pytest.approx(1.8733e-4, rel=1e-4)
    T = np.linspace(-40, 50, 500)
    assert np.all(np.diff(magnus_slope(T)) > 0)
    for bad in (-237.3, -300.0):
        with pytest.raises(DomainError):
            magnus_slope(bad)
    h = 1e-5
    fd = (magnus_slope(T + h) - magnus_slope(T - h)) / (2 * h)
    assert np.allclose(magnus_slope_derivative(T), fd, rtol=1e-7)


def test_budyko():
    assert budyko_mu(0.0) == 0.0
    assert abs(budyko_mu(1.0) - (2 - 2 ** (1 / 3))) < 1e-12
    assert abs(budyko_mu(100.0) - 1) < 1e-3
    m = np.linspace(0, 1e3, 20001)
    mu = budyko_mu(m)
    assert np.all(np.diff(mu) > 0) and np.all((mu >= 0) & (mu < 1))
    with pytest.raises(DomainError):
        budyko_mu(-0.1)
    x = np.geomspace(1e-3, 500, 50)
    fd = (budyko_mu(x * (1 + 1e-6)) - budyko_mu(x * (1 - 1e-6))) / (2e-6 * x)
    assert np.allclose(budyko_mu_derivative(x), fd, rtol=1e-6)


def test_budyko_inverse():
    assert budyko_inverse(0.0) == 0.0
    assert abs(budyko_inverse(0.740079) - 1.0) < 1e-6
    for m in (0.01, 0.3, 2.0, 17.0):
        assert budyko_inverse(budyko_mu(m)) == pytest.approx(m, abs=1e-9)


def test_moisture_index_properties_and_pinned():
    T, S = np.full(12, 15.0), np.full(12, 0.5)
    rad = Davis2016Radiation()
    assert moisture_index(0.0, T, S, 37.5, rad) == 0.0
    assert moisture_index(1000.0, T, S, 37.5, rad) == pytest.approx(2 * moisture_index(500.0, T, S, 37.5, rad), rel=1e-14)
    assert moisture_index(500.0, T, S, 37.5, rad) == pytest.approx(REF_MI, rel=1e-12)

    # standalone loop evaluation with scalar maths
    E = 0.0
    for k in range(12):
        t = T[k]
        s = 10.5485 / (237.3 + t) ** 2 * math.exp(17.27 * t / (237.3 + t))
        R = float(rad.evaluate(37.5, int(MID_MONTH_DAYS[k]), t, 0.5)) * 86400.0
        E += MONTH_LENGTHS[k] * R * s / (s + 0.067)
    assert moisture_index(500.0, T, S, 37.5, rad) == pytest.approx(500.0 * 2.45e6 / E, rel=1e-13)

    with pytest.raises(DomainError):
        moisture_index(500.0, T, S, 37.5, ConstantRadiation(0.0))


def test_gdd5():
    assert gdd5(np.ones(12)) == 0.0
    assert abs(gdd5(np.full(12, 2.0)) - 1.0) < 1e-12
    T = np.zeros(12); T[0] = 3.0
    assert abs(gdd5(T) - 62 / 365) < 1e-12
    rng = np.random.default_rng(0)
    for _ in range(50):
        T = rng.uniform(-2, 6, 12)
        base = gdd5(T)
        for k in range(12):
            T2 = T.copy(); T2[k] += 0.3
            assert gdd5(T2) >= base


def _state(P, T):
    return SC.nondim_state(np.concatenate([[P], T]))


def test_site_observe_fixture_and_identities():
    rad = Davis2016Radiation()
    S = np.full(12, 0.5)
    out = site_observe(_state(500.0, np.full(12, 15.0)), 37.5, S, rad)
    assert out[0] == pytest.approx(REF_ALPHA, rel=1e-12)
    assert out[1] == pytest.approx(SC.dp_forward(500.0), rel=1e-15)
    assert out[2] == pytest.approx(3.0) and out[3] == 3.0 and out[4] == 3.0
    assert out[5] == pytest.approx(2.0)
    rng = np.random.default_rng(1)
    for _ in range(100):
        o = site_observe(_state(rng.uniform(50, 2000), rng.uniform(-20, 30, 12)), 40.0, S, rad)
        assert o[4] <= o[2] <= o[3]


def test_month_permutation_with_matched_lengths():
    import dataclasses
    rng = np.random.default_rng(2)
    x = _state(700.0, rng.uniform(-5, 25, 12))
    perm = rng.permutation(12)
    c2 = dataclasses.replace(DEFAULT_CONSTANTS, month_lengths=MONTH_LENGTHS[perm])
    x2 = np.concatenate([[x[0]], x[1:][perm]])
    rad = ConstantRadiation()     # radiation must not depend on the calendar for this to hold
    a = site_observe(x, 40.0, np.full(12, 0.5), rad)
    b = site_observe(x2, 40.0, np.full(12, 0.5), rad, c2)
    assert np.allclose(a, b, rtol=1e-13, atol=0)


def test_radiation_substitution_only_touches_alpha():
    x = _state(600.0, np.linspace(-3, 22, 12))
    S = np.full(12, 0.4)
    a = site_observe(x, 38.0, S, ConstantRadiation(100.0))
    b = site_observe(x, 38.0, S, Davis2016Radiation())
    assert np.array_equal(a[1:], b[1:]) and a[0] != b[0]


def _smooth_states(n, rng):
    states = []
    while len(states) < n:
        T = rng.uniform(-15, 30, 12)
        Ts = np.sort(T)
        if Ts[-1] - Ts[-2] < 0.05 or Ts[1] - Ts[0] < 0.05 or np.min(np.abs(T / 5 - 1)) < 5e-3:
            continue
        states.append(_state(rng.uniform(20, 3000), T))
    return np.array(states)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(5)
    X = _smooth_states(50, rng)
    S = np.full(12, 0.5)
    rad = ConstantRadiation()
    h = 1e-5
    for x in X:
        J = site_jacobian(x, 40.0, S, rad)
        fd = np.empty_like(J)
        for j in range(13):
            e = np.zeros(13); e[j] = h
            fd[:, j] = (site_observe(x + e, 40.0, S, rad) - site_observe(x - e, 40.0, S, rad)) / (2 * h)
        scale = np.maximum(np.abs(fd).max(axis=1, keepdims=True), 1e-300)
        assert np.all(np.abs(J - fd) <= 1e-5 * scale + 1e-12), np.abs(J - fd).max()


def test_jacobian_conventions():
    x = _state(400.0, np.full(12, 12.0))
    J = site_jacobian(x, 40.0, np.full(12, 0.5))
    assert J[2, 1:].sum() == pytest.approx(1.0, abs=1e-15)
    assert J[3, 1:].tolist() == [1.0] + [0.0] * 11       # first argmax on a tie
    assert J[4, 1:].tolist() == [1.0] + [0.0] * 11
    assert J[1].tolist() == [1.0] + [0.0] * 12
    at = site_jacobian(_state(400.0, np.full(12, 5.0)), 40.0, np.full(12, 0.5))
    assert not np.any(at[5])                             # zero at the GDD threshold


def test_assembly():
    g = GridSpec.from_bounds(36, 40, 20, 24, 2.0)
    rng = np.random.default_rng(0)
    cloud = np.full((g.M, 12), 0.5)
    X = np.array([_state(rng.uniform(300, 900), rng.uniform(-5, 25, 12)) for _ in range(g.M)]).ravel()
    empty = sites_at(g, [], np.zeros((0, 6)), np.ones((0, 6)))
    assert assemble_h(X, empty, g, cloud).shape == (0,)
    assert assemble_H(X, empty, g, cloud).shape == (0, 13 * g.M)

    sites = sites_at(g, [1, 1, 3], np.zeros((3, 6)), np.ones((3, 6)))
    h = assemble_h(X, sites, g, cloud)
    assert np.array_equal(h[0:6], h[6:12])
    H = assemble_H(X, sites, g, cloud).toarray()
    blocks = [site_jacobian(X.reshape(-1, 13)[c], g.lats[c], cloud[c]) for c in (1, 1, 3)]
    for j in range(13 * g.M):
        col = np.zeros((3, 6))
        cell, var = divmod(j, 13)
        for i, c in enumerate((1, 1, 3)):
            if c == cell:
                col[i] = blocks[i][:, var]
        assert np.array_equal(H[:, j], col.ravel())
    assert np.count_nonzero(H[:, 0:13]) == 0             # cell 0 is unobserved


def test_nonstrict_flags_bad_cells():
    x = _state(500.0, np.full(12, 10.0))
    with pytest.raises(DomainError):
        site_observe(x, 40.0, np.full(12, 0.5), ConstantRadiation(-1.0))
    o = site_observe(x, 40.0, np.full(12, 0.5), ConstantRadiation(-1.0), strict=False)
    assert np.isnan(o[0]) and np.all(np.isfinite(o[1:]))
