"""
Site observation function and its Jacobian.

A grid cell's non-dimensional state ``(P', T'_1..T'_12)`` maps to six
non-dimensional site variables

    (alpha, P', mean(T'), max(T'), min(T'), GDD(T'))

where alpha comes from the Budyko curve applied to the moisture index and
the moisture index needs dimensional P and T.  The grid-wide ``h`` stacks
one such block per site, evaluated at the cell containing the site.

Energy bookkeeping for the moisture index: P in mm/yr equals kg m-2 yr-1,
so ``P * lambda`` with lambda in J/kg is J m-2 yr-1; the radiation model
returns day-averaged W m-2, which times 86400 s and the month length in
days gives J m-2 per month.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .domain import MONTH_LENGTHS, N_OBS, N_STATE, DomainError, GridSpec, SiteObservationSet
from .radiation import MID_MONTH_DAYS, SECONDS_PER_DAY, ConstantRadiation
from .scaling import ScalingContext

MAGNUS_A = 10.5485
MAGNUS_B = 237.3
MAGNUS_C = 17.27


@dataclass(frozen=True)
class PhysicalConstants:
    gamma: float = 0.067         # kPa/K
    lam: float = 2.45e6          # J/kg
    I_sc: float = 1360.8         # W/m2
    omega: float = 3.0
    T_s: float = 5.0             # degC
    N_y: float = 365.0
    month_lengths: np.ndarray = field(default_factory=lambda: MONTH_LENGTHS.copy())

    def __post_init__(self):
        ml = np.asarray(self.month_lengths, dtype=float)
        if abs(ml.sum() - self.N_y) > 1e-12:
            raise ValueError("month lengths must sum to N_y")
        for v in (self.gamma, self.lam, self.I_sc, self.omega, self.T_s, self.N_y):
            if not v > 0:
                raise ValueError("physical constants must be positive")

    def scaling(self) -> ScalingContext:
        return ScalingContext(T_s=self.T_s, N_y=self.N_y, I_sc=self.I_sc, lam=self.lam / 1e6)


DEFAULT_CONSTANTS = PhysicalConstants()


def magnus_slope(T):
    """Slope of the saturation vapour pressure curve (kPa/K) at T degC."""
    T = np.asarray(T, dtype=float)
    if np.any(T <= -MAGNUS_B):
        raise DomainError("temperature at or below the Magnus pole (-237.3 degC)")
    d = MAGNUS_B + T
    out = MAGNUS_A / d ** 2 * np.exp(MAGNUS_C * T / d)
    return out[()] if out.ndim == 0 else out


def magnus_slope_derivative(T):
    T = np.asarray(T, dtype=float)
    d = MAGNUS_B + T
    return magnus_slope(T) * (-2.0 / d + MAGNUS_C * MAGNUS_B / d ** 2)


def budyko_mu(m, omega=3.0):
    """Budyko ratio ``1 + m - (1 + m^omega)^(1/omega)``."""
    m = np.asarray(m, dtype=float)
    if np.any(m < 0):
        raise DomainError("moisture index must be non-negative")
    # rewritten to avoid cancellation at large m: 1 + m - m (1 + m^-w)^(1/w)
    with np.errstate(divide="ignore", over="ignore"):
        big = m > 1.0
        mb = np.where(big, m, 1.0)
        tail = 1.0 - mb * np.expm1(np.log1p(mb ** -omega) / omega)
        out = np.where(big, tail, 1.0 + m - (1.0 + m ** omega) ** (1.0 / omega))
    return out[()] if out.ndim == 0 else out


def budyko_mu_derivative(m, omega=3.0):
    m = np.asarray(m, dtype=float)
    return 1.0 - m ** (omega - 1) * (1.0 + m ** omega) ** (1.0 / omega - 1.0)


def budyko_inverse(alpha, omega=3.0, tol=1e-10, m_max=1e3):
    """Moisture index from the Budyko ratio by bisection on [0, m_max]."""
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha < 0) or np.any(alpha >= 1):
        raise DomainError("alpha must lie in [0, 1)")
    lo = np.zeros_like(alpha)
    hi = np.full_like(alpha, m_max)
    if np.any(budyko_mu(hi, omega) < alpha):
        raise DomainError(f"alpha too close to 1 to invert within m <= {m_max}")
    while np.any(hi - lo > tol):
        mid = 0.5 * (lo + hi)
        below = budyko_mu(mid, omega) < alpha
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = 0.5 * (lo + hi)
    out = np.where(alpha == 0, 0.0, out)
    return out[()] if out.ndim == 0 else out


def equilibrium_energy(T, S, lat, rad, consts=DEFAULT_CONSTANTS):
    """Annual sum of l_k R_k s_k / (s_k + gamma) in J m-2 yr-1.

    ``T`` and ``S`` have shape (..., 12); ``lat`` broadcasts against (...).
    """
    T = np.asarray(T, dtype=float)
    S = np.asarray(S, dtype=float)
    lat = np.asarray(lat, dtype=float)[..., None]
    R = rad.evaluate(lat, MID_MONTH_DAYS, T, S) * SECONDS_PER_DAY
    s = magnus_slope(T)
    return np.sum(consts.month_lengths * R * s / (s + consts.gamma), axis=-1)


def moisture_index(P, T, S, lat, rad=None, consts=DEFAULT_CONSTANTS):
    """Ratio of annual precipitation energy to equilibrium evapotranspiration."""
    rad = rad or ConstantRadiation()
    P = np.asarray(P, dtype=float)
    if np.any(P < 0):
        raise DomainError("precipitation must be non-negative")
    E = equilibrium_energy(T, S, lat, rad, consts)
    if np.any(~(E > 0)):
        raise DomainError("equilibrium evapotranspiration sum is not positive")
    out = P * consts.lam / E
    return out[()] if out.ndim == 0 else out


def gdd5(T_nd, consts=DEFAULT_CONSTANTS):
    """Non-dimensional growing degree days above 5 degC."""
    T_nd = np.asarray(T_nd, dtype=float)
    thr = 5.0 / consts.T_s
    return np.sum(consts.month_lengths * np.maximum(T_nd - thr, 0.0), axis=-1) / consts.N_y


def site_observe(cell_state, lat, cloud, rad=None, consts=DEFAULT_CONSTANTS, strict=True):
    """Six non-dimensional observables for one or many cell states.

    ``cell_state`` has shape (..., 13); ``lat`` (...) and ``cloud`` (..., 12).
    With ``strict=False`` a cell whose equilibrium-evapotranspiration sum is
    not positive gets NaN in the alpha slot instead of raising.
    """
    rad = rad or ConstantRadiation()
    X = np.asarray(cell_state, dtype=float)
    sc = consts.scaling()
    Pnd, Tnd = X[..., 0], X[..., 1:]
    P = sc.dp_inverse(Pnd)
    T = Tnd * consts.T_s
    E = equilibrium_energy(T, cloud, lat, rad, consts)
    bad = ~(E > 0)
    if strict and np.any(bad):
        raise DomainError("equilibrium evapotranspiration sum is not positive")
    m = P * consts.lam / np.where(bad, 1.0, E)
    w = consts.month_lengths / consts.N_y
    out = np.empty(X.shape[:-1] + (N_OBS,))
    out[..., 0] = np.where(bad, np.nan, budyko_mu(np.where(bad, 0.0, m), consts.omega))
    out[..., 1] = Pnd
    out[..., 2] = Tnd @ w
    out[..., 3] = Tnd.max(axis=-1)
    out[..., 4] = Tnd.min(axis=-1)
    out[..., 5] = gdd5(Tnd, consts)
    return out


def site_jacobian(cell_state, lat, cloud, rad=None, consts=DEFAULT_CONSTANTS, strict=True):
    """Analytic 6 x 13 Jacobian blocks, shape (..., 6, 13).

    Radiation is held fixed with respect to temperature; max/min rows pick
    the first extremal month; the GDD row is zero at the exact threshold.
    """
    rad = rad or ConstantRadiation()
    X = np.asarray(cell_state, dtype=float)
    sc = consts.scaling()
    Pnd, Tnd = X[..., 0], X[..., 1:]
    P = sc.dp_inverse(Pnd)
    T = Tnd * consts.T_s
    lat_b = np.asarray(lat, dtype=float)[..., None]
    R = rad.evaluate(lat_b, MID_MONTH_DAYS, T, cloud) * SECONDS_PER_DAY
    s = magnus_slope(T)
    ds = magnus_slope_derivative(T)
    frac = s / (s + consts.gamma)
    l = consts.month_lengths
    E = np.sum(l * R * frac, axis=-1)
    bad = ~(E > 0)
    if strict and np.any(bad):
        raise DomainError("equilibrium evapotranspiration sum is not positive")
    E = np.where(bad, 1.0, E)
    m = P * consts.lam / E
    dmu = budyko_mu_derivative(m, consts.omega)
    dP_dPnd = sc.dp_inverse_derivative(Pnd)
    dfrac_dT = consts.gamma * ds / (s + consts.gamma) ** 2
    dm_dT = -(m / E)[..., None] * l * R * dfrac_dT * consts.T_s

    Jm = np.zeros(X.shape[:-1] + (N_OBS, N_STATE))
    Jm[..., 0, 0] = dmu * consts.lam / E * dP_dPnd
    Jm[..., 0, 1:] = dmu[..., None] * dm_dT
    Jm[..., 1, 0] = 1.0
    Jm[..., 2, 1:] = l / consts.N_y
    imax = np.argmax(Tnd, axis=-1)
    imin = np.argmin(Tnd, axis=-1)
    np.put_along_axis(Jm[..., 3, 1:], imax[..., None], 1.0, axis=-1)
    np.put_along_axis(Jm[..., 4, 1:], imin[..., None], 1.0, axis=-1)
    Jm[..., 5, 1:] = np.where(Tnd > 5.0 / consts.T_s, l / consts.N_y, 0.0)
    if np.any(bad):
        Jm[bad, 0, :] = np.nan
    return Jm


class SiteObservationOperator:
    """Grid-wide ``h`` and ``H`` for a fixed set of sites.

    Parameters
    ----------
    grid : GridSpec
    cell_index : array of int
        Containing cell of each site.
    cloud : array (M, 12)
        Monthly cloud fraction per grid cell.
    rad : radiation model
    """

    def __init__(self, grid: GridSpec, cell_index, cloud, rad=None, consts=DEFAULT_CONSTANTS):
        self.grid = grid
        self.cell_index = np.asarray(cell_index, dtype=int).reshape(-1)
        if np.any(self.cell_index < 0) or np.any(self.cell_index >= grid.M):
            raise ValueError("site cell index out of range (unmapped site)")
        self.cloud = np.clip(np.asarray(cloud, dtype=float).reshape(grid.M, 12), 0.0, 1.0)
        self.rad = rad or ConstantRadiation()
        self.consts = consts

    @classmethod
    def for_sites(cls, sites: SiteObservationSet, grid, cloud, rad=None, consts=DEFAULT_CONSTANTS):
        return cls(grid, sites.cell_indices(grid), cloud, rad, consts)

    @property
    def n_obs(self) -> int:
        return N_OBS * self.cell_index.size

    @property
    def n_state(self) -> int:
        return N_STATE * self.grid.M

    def _cells(self, x):
        X = np.asarray(x, dtype=float).reshape(self.grid.M, N_STATE)
        c = self.cell_index
        return X[c], self.grid.lats[c], self.cloud[c]

    def apply(self, x) -> np.ndarray:
        if self.cell_index.size == 0:
            return np.zeros(0)
        Xc, lat, cl = self._cells(x)
        return site_observe(Xc, lat, cl, self.rad, self.consts).reshape(-1)

    def jacobian_blocks(self, x) -> np.ndarray:
        if self.cell_index.size == 0:
            return np.zeros((0, N_OBS, N_STATE))
        Xc, lat, cl = self._cells(x)
        return site_jacobian(Xc, lat, cl, self.rad, self.consts)

    def jacobian(self, x) -> sp.csr_matrix:
        """Sparse (6N, 13M) Jacobian with one dense 6 x 13 block per site."""
        blocks = self.jacobian_blocks(x)
        n = self.cell_index.size
        rows = np.repeat(np.arange(N_OBS * n).reshape(n, N_OBS, 1), N_STATE, axis=2)
        cols = np.broadcast_to(
            (N_STATE * self.cell_index)[:, None, None] + np.arange(N_STATE)[None, None, :],
            (n, N_OBS, N_STATE))
        return sp.csr_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())),
                             shape=(self.n_obs, self.n_state))

    def observe_cells(self, x, strict=False) -> np.ndarray:
        """Apply the site function at every grid cell: (M, 6)."""
        X = np.asarray(x, dtype=float).reshape(self.grid.M, N_STATE)
        return site_observe(X, self.grid.lats, self.cloud, self.rad, self.consts, strict=strict)

    def cell_jacobians(self, x) -> np.ndarray:
        X = np.asarray(x, dtype=float).reshape(self.grid.M, N_STATE)
        return site_jacobian(X, self.grid.lats, self.cloud, self.rad, self.consts, strict=False)


class LinearObservationOperator:
    """``h(x) = A x + c`` with a fixed matrix, for linear test problems."""

    def __init__(self, A, offset=None):
        self.A = sp.csr_matrix(A) if sp.issparse(A) else np.atleast_2d(np.asarray(A, dtype=float))
        self.offset = np.zeros(self.A.shape[0]) if offset is None else np.asarray(offset, dtype=float)

    @property
    def n_obs(self):
        return self.A.shape[0]

    @property
    def n_state(self):
        return self.A.shape[1]

    def apply(self, x):
        return self.A @ np.asarray(x, dtype=float) + self.offset

    def jacobian(self, x):
        return self.A


def assemble_h(x, sites: SiteObservationSet, grid: GridSpec, cloud, rad=None, consts=DEFAULT_CONSTANTS):
    return SiteObservationOperator.for_sites(sites, grid, cloud, rad, consts).apply(x)


def assemble_H(x, sites: SiteObservationSet, grid: GridSpec, cloud, rad=None, consts=DEFAULT_CONSTANTS):
    return SiteObservationOperator.for_sites(sites, grid, cloud, rad, consts).jacobian(x)
