"""
Synthetic-truth verification runs.

A truth is drawn from the prior distribution, ``x_t = x_b + G z`` with
``z ~ N(0, I)``; noisy observations of ``h(x_t)`` are taken at a random
subset of cells and assimilated.  Because the truth is known, errors of the
prior and of the analysis can be compared directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import N_OBS, N_STATE, OBS_NAMES, STATE_NAMES, GridSpec
from .obs_operator import DEFAULT_CONSTANTS, SiteObservationOperator
from .radiation import ConstantRadiation
from .solver import Problem, SolverConfig
from .synthetic import smooth_prior

NOISE_FLOOR = 1e-3


@dataclass(frozen=True)
class TwinConfig:
    fraction: float = 0.3          # share of cells carrying a site
    noise: float = 0.05            # noise sd as a share of each variable's RMS magnitude
    L_s: float = 400.0
    L_t: float = 1.0
    variables: tuple = tuple(range(N_OBS))

    def __post_init__(self):
        if not 0 <= self.fraction <= 1:
            raise ValueError("fraction must lie in [0, 1]")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        if not (self.L_s > 0 and self.L_t > 0):
            raise ValueError("length scales must be positive")


@dataclass
class TwinResult:
    seed: int
    n_sites: int
    converged: bool
    iterations: int
    state_rmse_prior: np.ndarray      # (13,) dimensional
    state_rmse_analysis: np.ndarray
    obs_rmse_prior: np.ndarray        # (6,) dimensional, over observed slots
    obs_rmse_analysis: np.ndarray

    def rows(self):
        for k, name in enumerate(STATE_NAMES):
            yield self.seed, "state", name, self.state_rmse_prior[k], self.state_rmse_analysis[k]
        for k, name in enumerate(OBS_NAMES):
            yield self.seed, "obs", name, self.obs_rmse_prior[k], self.obs_rmse_analysis[k]


def _rmse(a, b):
    """Column RMSE over finite entries; NaN for columns with none."""
    d = np.asarray(a) - np.asarray(b)
    ok = np.isfinite(d)
    n = ok.sum(axis=0)
    ss = (np.where(ok, d, 0.0) ** 2).sum(axis=0)
    return np.where(n > 0, np.sqrt(ss / np.maximum(n, 1)), np.nan)


def run_twin(grid: GridSpec, seed: int, cfg: TwinConfig = TwinConfig(), prior=None, rad=None,
             consts=DEFAULT_CONSTANTS, solver: SolverConfig = None) -> TwinResult:
    rng = np.random.default_rng(seed)
    rad = rad or ConstantRadiation()
    prior = prior or smooth_prior(grid)
    sc = consts.scaling()
    x_b, v_b = prior.nondimensional(sc)

    n_sites = int(round(cfg.fraction * grid.M))
    cells = np.sort(rng.choice(grid.M, size=n_sites, replace=False))
    op = SiteObservationOperator(grid, cells, prior.cloud, rad, consts)
    tmp = Problem(grid, x_b, np.sqrt(v_b), np.zeros(op.n_obs), np.zeros(op.n_obs), op, sc)
    factor = tmp.factor(cfg.L_s, cfg.L_t)

    z = rng.standard_normal(factor.size)
    x_t = x_b + factor.apply_factor(z)
    h_t = op.observe_cells(x_t, strict=False)[cells]                  # (n, 6)
    mask = np.zeros_like(h_t, bool)
    mask[:, list(cfg.variables)] = True
    mask &= np.isfinite(h_t)
    rms = np.sqrt(np.nanmean(np.where(mask, h_t, np.nan) ** 2, axis=0)) if n_sites else np.zeros(N_OBS)
    sd = np.maximum(cfg.noise * np.nan_to_num(rms), NOISE_FLOOR)
    eps = rng.standard_normal(h_t.shape)
    y = np.where(mask, h_t + sd * eps, np.nan)
    r_inv = np.where(mask, 1.0 / sd ** 2, 0.0)

    problem = Problem(grid, x_b, np.sqrt(v_b), y.reshape(-1), r_inv.reshape(-1), op, sc)
    res = problem.solve(factor, solver)

    X_t = sc.redim_state(x_t).reshape(grid.M, N_STATE)
    X_b = sc.redim_state(x_b).reshape(grid.M, N_STATE)
    X_a = sc.redim_state(res.x_a).reshape(grid.M, N_STATE)
    dims = lambda h: sc.redim_obs(h)
    H_t = dims(h_t)
    H_b = dims(op.observe_cells(x_b, strict=False)[cells])
    H_a = dims(op.observe_cells(res.x_a, strict=False)[cells])
    sel = lambda h: np.where(mask, h, np.nan)
    return TwinResult(
        seed=int(seed), n_sites=n_sites, converged=res.converged, iterations=res.iterations,
        state_rmse_prior=_rmse(X_b, X_t), state_rmse_analysis=_rmse(X_a, X_t),
        obs_rmse_prior=_rmse(sel(H_b), sel(H_t)), obs_rmse_analysis=_rmse(sel(H_a), sel(H_t)),
    )
