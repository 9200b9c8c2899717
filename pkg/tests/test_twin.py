import numpy as np
import pytest

from palaeovar.domain import GridSpec
from palaeovar.twin import TwinConfig, _rmse, run_twin

GRID = GridSpec.from_bounds(30, 40, 0, 10, 2.0)


def test_rmse_ignores_missing():
    a = np.array([[1.0, np.nan], [3.0, np.nan]])
    assert _rmse(a, np.zeros_like(a))[0] == pytest.approx(np.sqrt(5))
    assert np.isnan(_rmse(a, np.zeros_like(a))[1])


def test_no_sites_leaves_prior_untouched():
    r = run_twin(GRID, 0, TwinConfig(fraction=0.0))
    assert r.n_sites == 0 and r.converged
    assert np.array_equal(r.state_rmse_analysis, r.state_rmse_prior)
    assert np.all(np.isnan(r.obs_rmse_prior))


def test_same_seed_same_result():
    a, b = run_twin(GRID, 7), run_twin(GRID, 7)
    assert list(a.rows()) == list(b.rows())
    assert not np.array_equal(a.state_rmse_prior, run_twin(GRID, 8).state_rmse_prior)


def test_analysis_beats_prior_in_observation_space():
    r = run_twin(GRID, 1)
    assert r.n_sites == round(0.3 * GRID.M)
    assert np.all(r.obs_rmse_analysis < r.obs_rmse_prior)


def test_config_validation():
    for bad in (dict(fraction=1.5), dict(noise=-1), dict(L_s=0)):
        with pytest.raises(ValueError):
            TwinConfig(**bad)
