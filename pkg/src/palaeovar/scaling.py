"""
Non-dimensionalisation of observation and state spaces.

Precipitation goes through a log/linear map that is C1 at the crossover
``P* = I_sc / lambda`` and whose inverse is positive everywhere, so any
analysis re-dimensionalises to strictly positive precipitation.
Temperatures are divided by ``T_s``; GDD5 by ``N_y T_s``.  Standard errors
and variances are carried by the delta method.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .domain import N_STATE, DomainError

log = logging.getLogger(__name__)

P_FLOOR = 1e-3  # mm/yr


@dataclass(frozen=True)
class ScalingContext:
    T_s: float = 5.0
    N_y: float = 365.0
    I_sc: float = 1360.8
    lam: float = 2.45  # MJ/kg; only the numerical ratio I_sc/lam enters

    @property
    def P_star(self) -> float:
        return self.I_sc / self.lam

    # -- precipitation ---------------------------------------------------

    def dp_forward(self, P):
        P = np.asarray(P, dtype=float)
        if np.any(~(P > 0)):
            raise DomainError("precipitation must be positive before D_P")
        r = P * self.lam / self.I_sc
        out = np.where(r < 1, np.log(np.where(r < 1, r, 1.0)) + 1.0, r)
        return out[()] if out.ndim == 0 else out

    def dp_inverse(self, w):
        w = np.asarray(w, dtype=float)
        out = self.P_star * np.where(w < 1, np.exp(np.minimum(w, 1.0) - 1.0), w)
        return out[()] if out.ndim == 0 else out

    def dp_derivative(self, P):
        """d D_P / d P."""
        P = np.asarray(P, dtype=float)
        out = np.where(P * self.lam < self.I_sc, 1.0 / P, self.lam / self.I_sc)
        return out[()] if out.ndim == 0 else out

    def dp_inverse_derivative(self, w):
        """d P / d D_P at non-dimensional value w."""
        w = np.asarray(w, dtype=float)
        out = np.where(w < 1, self.dp_inverse(w), self.P_star)
        return out[()] if out.ndim == 0 else out

    # -- observation space ----------------------------------------------

    def _obs_scale(self):
        return np.array([1.0, np.nan, self.T_s, self.T_s, self.T_s, self.N_y * self.T_s])

    def nondim_obs(self, y, se=None):
        """Map (..., 6) dimensional observations (and standard errors)."""
        y = np.asarray(y, dtype=float)
        s = self._obs_scale()
        out = y / s
        P = y[..., 1]
        ok = np.isfinite(P) & (P > 0)
        out[..., 1] = np.where(ok, self.dp_forward(np.where(ok, P, 1.0)), np.nan)
        if se is None:
            return out
        se = np.asarray(se, dtype=float)
        se_out = se / s
        se_out[..., 1] = se[..., 1] * np.where(ok, self.dp_derivative(np.where(ok, P, 1.0)), np.nan)
        return out, se_out

    def redim_obs(self, y_nd, se_nd=None):
        y_nd = np.asarray(y_nd, dtype=float)
        s = self._obs_scale()
        out = y_nd * s
        out[..., 1] = self.dp_inverse(y_nd[..., 1])
        if se_nd is None:
            return out
        se_nd = np.asarray(se_nd, dtype=float)
        se_out = se_nd * s
        se_out[..., 1] = se_nd[..., 1] * self.dp_inverse_derivative(y_nd[..., 1])
        return out, se_out

    # -- state space ----------------------------------------------------

    def nondim_state(self, x):
        """(..., 13) or flat dimensional state to non-dimensional."""
        x = np.asarray(x, dtype=float)
        X = x.reshape(-1, N_STATE)
        out = np.empty_like(X)
        out[:, 0] = self.dp_forward(X[:, 0])
        out[:, 1:] = X[:, 1:] / self.T_s
        return out.reshape(x.shape)

    def redim_state(self, x_nd):
        x_nd = np.asarray(x_nd, dtype=float)
        X = x_nd.reshape(-1, N_STATE)
        out = np.empty_like(X)
        out[:, 0] = self.dp_inverse(X[:, 0])
        out[:, 1:] = X[:, 1:] * self.T_s
        return out.reshape(x_nd.shape)

    def state_derivative(self, x):
        """Elementwise d D_x / d x at a dimensional state."""
        x = np.asarray(x, dtype=float)
        X = x.reshape(-1, N_STATE)
        d = np.empty_like(X)
        d[:, 0] = self.dp_derivative(X[:, 0])
        d[:, 1:] = 1.0 / self.T_s
        return d.reshape(x.shape)

    def nondim_state_variance(self, x, var):
        """Transport dimensional state variances to non-dimensional ones."""
        return np.asarray(var, dtype=float) * self.state_derivative(x) ** 2

    def redim_state_variance(self, x_nd, var_nd):
        x = self.redim_state(x_nd)
        return np.asarray(var_nd, dtype=float) / self.state_derivative(x) ** 2


def floor_precipitation(P, eps=P_FLOOR):
    """Clamp precipitation to ``eps``; returns (floored, mask of floored entries)."""
    P = np.asarray(P, dtype=float)
    low = ~(P >= eps)
    if low.any():
        log.info("floored %d precipitation value(s) at %g mm/yr", int(low.sum()), eps)
    return np.where(low, eps, P), low


DEFAULT_SCALING = ScalingContext()
