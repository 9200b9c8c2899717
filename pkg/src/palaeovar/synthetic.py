"""
Synthetic priors and problems for the length-scale studies and twin runs.

Nothing here is fitted to real data.  The fields are smooth, deterministic
functions of latitude, longitude and month chosen to look like a cool,
seasonal mid-latitude climate.
"""
from __future__ import annotations

import numpy as np

from .domain import N_OBS, GridSpec, SiteObservationSet
from .ingest import BackgroundPrior
from .obs_operator import DEFAULT_CONSTANTS, SiteObservationOperator
from .radiation import ConstantRadiation
from .solver import Problem

LT_SITE = (37.50, 33.73)
LT_MTCO = -15.0
LT_MTWA = 30.0

_PHASE = 2 * np.pi * np.arange(12) / 12


def lt_prior():
    """One-cell prior whose seasonal cycle peaks in July and bottoms in January."""
    T = 7.5 - 12.5 * np.cos(_PHASE)
    sd_T = 3.0 - 2.0 * np.cos(_PHASE)
    grid = GridSpec.from_bounds(36, 38, 32, 34, 2.0)
    return BackgroundPrior(
        grid=grid,
        precip=np.array([500.0]), temperature=T[None, :],
        precip_var=np.array([50.0 ** 2]), temperature_var=sd_T[None, :] ** 2,
        cloud=np.full((1, 12), 0.5),
    )


def lt_sites(obs_sd=2.0):
    values = np.full((1, N_OBS), np.nan)
    values[0, 3], values[0, 4] = LT_MTWA, LT_MTCO
    present = np.zeros((1, N_OBS), bool)
    present[0, [3, 4]] = True
    se = np.full((1, N_OBS), np.inf)
    se[0, [3, 4]] = obs_sd
    return SiteObservationSet(["lt-site"], [LT_SITE[0]], [LT_SITE[1]], values, se, present)


def lt_problem(rad=None, consts=DEFAULT_CONSTANTS):
    """Single simulated site observing only MTCO and MTWA."""
    return build_problem(lt_prior(), lt_sites(), rad or ConstantRadiation(), consts)


def build_problem(prior, sites, rad=None, consts=DEFAULT_CONSTANTS) -> Problem:
    """Non-dimensionalise a dimensional prior and site set into a Problem."""
    sc = consts.scaling()
    x_b, v_b = prior.nondimensional(sc)
    y, se = sc.nondim_obs(np.where(sites.present, sites.values, 1.0),
                          np.where(sites.present, sites.std_errors, 1.0))
    y = np.where(sites.present, y, np.nan)
    iv = np.zeros_like(y)
    iv[sites.present] = 1.0 / se[sites.present] ** 2
    op = SiteObservationOperator.for_sites(sites, prior.grid, prior.cloud, rad or ConstantRadiation(), consts)
    return Problem(prior.grid, x_b, np.sqrt(v_b), y.reshape(-1), iv.reshape(-1), op, sc)


def smooth_prior(grid: GridSpec, temp_sd=2.0, precip_cv=0.2) -> BackgroundPrior:
    """Smooth climatology on an arbitrary grid."""
    lat, lon = grid.lats[:, None], grid.lons[:, None]
    T_ann = 28.0 - 0.45 * np.abs(lat) + 0.03 * (lon - 20.0)
    amp = 4.0 + 0.2 * np.abs(lat)
    T = T_ann - amp * np.cos(_PHASE)[None, :]
    P = 350.0 + 12.0 * (50.0 - np.abs(grid.lats)) + 4.0 * np.cos(np.radians(4 * grid.lons))
    sd_T = temp_sd * (1.0 + 0.25 * np.cos(_PHASE))[None, :] * np.ones_like(lat)
    cloud = np.clip(0.45 + 0.15 * np.cos(_PHASE)[None, :] + 0.004 * (lat - 40.0), 0.05, 0.95)
    return BackgroundPrior(
        grid=grid, precip=P, temperature=T,
        precip_var=(precip_cv * P) ** 2, temperature_var=sd_T ** 2, cloud=cloud,
    )


def spread_sites(grid: GridSpec, n_sites: int, seed=0):
    """Pick ``n_sites`` distinct cells at random and place a site at each centre."""
    rng = np.random.default_rng(seed)
    cells = np.sort(rng.choice(grid.M, size=n_sites, replace=False))
    return cells, grid.lats[cells], grid.lons[cells]


def placeholder_sites(grid, cells, kinds=(0, 1, 2, 3, 4, 5)):
    """Sites at the given cells with unit errors on ``kinds``; values are filled later."""
    n = len(cells)
    present = np.zeros((n, N_OBS), bool)
    present[:, list(kinds)] = True
    values = np.where(present, 0.0, np.nan)
    se = np.where(present, 1.0, np.inf)
    return SiteObservationSet([f"s{c:04d}" for c in cells], grid.lats[cells], grid.lons[cells],
                              values, se, present)


OBS_ERRORS = (0.05, 50.0, 1.0, 1.0, 1.0, 150.0)   # alpha, MAP mm/yr, degC x3, GDD5 degC day


def multisite_problem(grid: GridSpec, n_sites=12, seed=0, rad=None, consts=DEFAULT_CONSTANTS) -> Problem:
    """Sites at random distinct cells observing all six variables at the prior values."""
    prior = smooth_prior(grid)
    cells, _, _ = spread_sites(grid, n_sites, seed)
    sites = placeholder_sites(grid, cells)
    sc = consts.scaling()
    x_b, _ = prior.nondimensional(sc)
    op = SiteObservationOperator(grid, cells, prior.cloud, rad or ConstantRadiation(), consts)
    vals = sc.redim_obs(op.apply(x_b).reshape(-1, N_OBS))
    sites = SiteObservationSet(sites.site_ids, sites.lats, sites.lons, vals,
                               np.broadcast_to(OBS_ERRORS, vals.shape).copy(), sites.present)
    return build_problem(prior, sites, rad, consts)
