"""
Background error covariance ``B = Sigma (C_s kron C_t) Sigma``.

Correlations come from the order-1 Matern function on a sphere,
``c(theta) = x K1(x)`` with ``x = (a / L) sin(theta / 2)``; the spatial
factor uses great-circle angles between cells (a = 6371 km) and the
temporal factor uses circular month separations on a 12-month circle
(a = 6 / pi).

``B`` is never formed at scale.  :class:`CovarianceFactor` keeps the
eigendecompositions of the two Kronecker blocks and applies
``G = Sigma (C_s^{1/2} kron C_t^{1/2})`` and its transpose/inverse through
``(A kron B) vec(X) = vec(A X B^T)`` on the row-major (M, 13) state view.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .bessel import x_k1
from .domain import EARTH_RADIUS_KM, N_STATE, DomainError, GridSpec, month_separation, pairwise_angles

log = logging.getLogger(__name__)

TEMPORAL_RADIUS = 6.0 / np.pi
CLIP_FLOOR = 1e-10


class FactorizationError(RuntimeError):
    pass


def matern_c(theta, L, a):
    """Order-1 Matern correlation at angular separation ``theta`` (radians)."""
    if np.any(np.asarray(L) <= 0):
        raise DomainError("length scale must be positive")
    if np.any(np.asarray(a) <= 0):
        raise DomainError("radius must be positive")
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise DomainError("theta must be non-negative")
    x = (a / L) * np.sin(theta / 2)
    return x_k1(x)


def month_angle(d):
    """Month separation converted to an angle on the 12-month circle."""
    return np.pi * np.asarray(d, dtype=float) / 6.0


def build_temporal_correlation(L_t: float) -> np.ndarray:
    """13 x 13 correlation: precipitation uncorrelated, months Matern-correlated."""
    if L_t <= 0:
        raise DomainError("L_t must be positive")
    months = np.arange(1, 13)
    d = month_separation(months[:, None], months[None, :])
    block = matern_c(month_angle(d), L_t, TEMPORAL_RADIUS)
    C = np.zeros((N_STATE, N_STATE))
    C[0, 0] = 1.0
    C[1:, 1:] = 0.5 * (block + block.T)
    return C


def build_spatial_correlation(grid: GridSpec, L_s: float) -> np.ndarray:
    """M x M spatial correlation from great-circle angles between cell centres."""
    if L_s <= 0:
        raise DomainError("L_s must be positive")
    C = matern_c(pairwise_angles(grid), L_s, EARTH_RADIUS_KM)
    C = np.atleast_2d(C)
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 1.0)
    return C


@dataclass(frozen=True)
class Spectral:
    """Symmetric eigendecomposition with eigenvalues clipped at a floor."""

    vectors: np.ndarray
    values: np.ndarray
    clipped: int

    @classmethod
    def of(cls, C: np.ndarray, name: str = "C") -> "Spectral":
        C = 0.5 * (C + C.T)
        try:
            lam, U = np.linalg.eigh(C)
        except np.linalg.LinAlgError as exc:
            raise FactorizationError(f"eigendecomposition of {name} failed") from exc
        floor = CLIP_FLOOR * lam.max()
        low = lam < floor
        if low.any():
            log.info("clipped %d eigenvalue(s) of %s to floor %.3g (min was %.3g)",
                     int(low.sum()), name, floor, lam.min())
            lam = np.where(low, floor, lam)
        return cls(U, lam, int(low.sum()))

    def power(self, p: float) -> np.ndarray:
        return (self.vectors * self.values ** p) @ self.vectors.T


class CovarianceFactor:
    """Kronecker-structured factor ``G`` with ``G G^T = B``.

    Vectors of length 13M, or arrays of shape (13M, k), are accepted by all
    ``apply_*`` methods.
    """

    def __init__(self, sigma, C_s, C_t):
        sigma = np.asarray(sigma, dtype=float).reshape(-1)
        C_s = np.atleast_2d(np.asarray(C_s, dtype=float))
        C_t = np.atleast_2d(np.asarray(C_t, dtype=float))
        M, T = C_s.shape[0], C_t.shape[0]
        if sigma.size != M * T:
            raise ValueError(f"sigma has length {sigma.size}, expected {M * T}")
        if np.any(~(sigma > 0)) or not np.all(np.isfinite(sigma)):
            raise ValueError("sigma entries must be finite and positive")
        self.sigma = sigma
        self.M, self.T = M, T
        self.spatial = Spectral.of(C_s, "C_s")
        self.temporal = Spectral.of(C_t, "C_t")
        self._rs = self.spatial.power(0.5)
        self._rt = self.temporal.power(0.5)
        self._rs_inv = self._rt_inv = None
        for a in (self.sigma, self._rs, self._rt):
            a.setflags(write=False)

    @property
    def size(self) -> int:
        return self.M * self.T

    @property
    def clipped(self) -> int:
        return self.spatial.clipped + self.temporal.clipped

    def _kron(self, A, Bm, v):
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.size:
            raise ValueError(f"vector length {v.shape[0]} != {self.size}")
        X = v.reshape(self.M, self.T, -1)
        Y = np.einsum("ij,jbk,ab->iak", A, X, Bm, optimize=True)
        return Y.reshape(v.shape)

    def _sig(self, v):
        v = np.asarray(v, dtype=float)
        return self.sigma.reshape((-1,) + (1,) * (v.ndim - 1))

    def apply_factor(self, w):
        """G w."""
        return self._sig(w) * self._kron(self._rs, self._rt, w)

    def apply_factor_transpose(self, v):
        """G^T v."""
        return self._kron(self._rs, self._rt, self._sig(v) * np.asarray(v, dtype=float))

    def apply_inverse_factor(self, v):
        """G^{-1} v; refuses when clipped eigenvalues make the inverse meaningless."""
        if self.clipped:
            raise FactorizationError(
                f"{self.clipped} eigenvalue(s) were clipped; correlation is numerically "
                "singular for these length scales")
        if self._rs_inv is None:
            self._rs_inv = self.spatial.power(-0.5)
            self._rt_inv = self.temporal.power(-0.5)
        return self._kron(self._rs_inv, self._rt_inv, np.asarray(v, dtype=float) / self._sig(v))

    def apply_B(self, v):
        return self.apply_factor(self.apply_factor_transpose(v))

    def correlation_dense(self) -> np.ndarray:
        Cs = self.spatial.power(1.0)
        Ct = self.temporal.power(1.0)
        return np.kron(Cs, Ct)

    def dense_factor(self) -> np.ndarray:
        return self.apply_factor(np.eye(self.size))

    def dense_B(self) -> np.ndarray:
        return self.apply_B(np.eye(self.size))

    def block_diagonal_B(self) -> np.ndarray:
        """Per-cell 13 x 13 diagonal blocks of B, shape (M, 13, 13)."""
        Cs_diag = np.einsum("ij,j,ij->i", self.spatial.vectors, self.spatial.values, self.spatial.vectors)
        Ct = self.temporal.power(1.0)
        s = self.sigma.reshape(self.M, self.T)
        return Cs_diag[:, None, None] * Ct[None] * s[:, :, None] * s[:, None, :]


def factorize(sigma, C_s, C_t) -> CovarianceFactor:
    return CovarianceFactor(sigma, C_s, C_t)


def dense_covariance(sigma, C_s, C_t) -> np.ndarray:
    """Reference dense ``Sigma (C_s kron C_t) Sigma`` for small problems."""
    sigma = np.asarray(sigma, dtype=float)
    return sigma[:, None] * np.kron(C_s, C_t) * sigma[None, :]
