"""
Linearised diagnostics of the analysis.

All quantities use the Jacobian at the prior except the posterior spread,
which projects the analysis covariance with the Jacobian at the analysis.
Observation slots with zero inverse variance are dropped before any
observation-space matrix is formed, so ``S`` and the solves only ever see
finite error variances.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl
import scipy.sparse as sp
from scipy.stats import spearmanr

from .domain import N_STATE, T_SLOTS

log = logging.getLogger(__name__)

DENSE_MAX_CELLS = 16


class SingularMatrixError(np.linalg.LinAlgError):
    pass


def _dense(H):
    return H.toarray() if sp.issparse(H) else np.asarray(H, dtype=float)


def _present(r_inv):
    return np.flatnonzero(np.asarray(r_inv) > 0)


def observed_HG(factor, H, rows=None):
    """Dense ``H G`` restricted to ``rows``: shape (n_rows, 13M)."""
    Hd = _dense(H)
    if rows is not None:
        Hd = Hd[rows]
    if Hd.shape[0] == 0:
        return np.zeros((0, factor.size))
    return factor.apply_factor_transpose(Hd.T).T


@dataclass
class HessianSurrogate:
    """``S = H B H^T + R`` over the present observation slots ``rows``."""

    S: np.ndarray
    rows: np.ndarray
    HG: np.ndarray = field(repr=False, default=None)


def hessian_surrogate(factor, H, r_inv) -> HessianSurrogate:
    rows = _present(r_inv)
    HG = observed_HG(factor, H, rows)
    S = HG @ HG.T + np.diag(1.0 / np.asarray(r_inv)[rows])
    return HessianSurrogate(0.5 * (S + S.T), rows, HG)


def condition_number(S) -> float:
    S = S.S if isinstance(S, HessianSurrogate) else np.asarray(S, dtype=float)
    lam = np.linalg.eigvalsh(0.5 * (S + S.T))
    if lam.size == 0:
        raise SingularMatrixError("empty matrix has no condition number")
    if lam[0] <= 1e-14 * lam[-1]:
        raise SingularMatrixError(f"matrix is singular to working precision (min eig {lam[0]:.3g})")
    return float(lam[-1] / lam[0])


def gain(factor, H, r_inv) -> np.ndarray:
    """``K = B H^T (H B H^T + R)^-1``, shape (13M, 6N); absent slots give zero columns."""
    n_obs = np.asarray(r_inv).size
    K = np.zeros((factor.size, n_obs))
    hs = hessian_surrogate(factor, H, r_inv)
    if hs.rows.size == 0:
        return K
    HB = factor.apply_factor(hs.HG.T).T            # (n_p, 13M)
    try:
        KT = sl.solve(hs.S, HB, assume_a="pos")
    except (sl.LinAlgError, ValueError) as exc:
        raise SingularMatrixError("S is not positive definite") from exc
    K[:, hs.rows] = KT.T
    return K


class AnalysisCovariance:
    """``A = (I - K H) B`` as a matrix-free action, with dense assembly for small grids."""

    def __init__(self, K, H, factor):
        self.K = np.asarray(K)
        self.H = H
        self.factor = factor

    def matvec(self, v):
        Bv = self.factor.apply_B(v)
        return Bv - self.K @ (self.H @ Bv)

    def dense(self) -> np.ndarray:
        if self.factor.M > DENSE_MAX_CELLS:
            raise ValueError(f"dense analysis covariance limited to {DENSE_MAX_CELLS} cells")
        B = self.factor.dense_B()
        return B - self.K @ (_dense(self.H) @ B)

    def cell_blocks(self) -> np.ndarray:
        """Diagonal 13 x 13 blocks of A for every cell, shape (M, 13, 13)."""
        M = self.factor.M
        Bd = self.factor.block_diagonal_B()
        Hd = _dense(self.H)
        rows = np.flatnonzero(np.any(self.K != 0, axis=0))
        if rows.size == 0:
            return Bd
        HB = self.factor.apply_factor(observed_HG(self.factor, Hd, rows).T).T      # (n_p, 13M)
        Kp = self.K[:, rows].reshape(M, N_STATE, rows.size)
        HBc = HB.reshape(rows.size, M, N_STATE).transpose(1, 0, 2)              # (M, n_p, 13)
        A = Bd - np.einsum("mij,mjk->mik", Kp, HBc)
        return 0.5 * (A + A.transpose(0, 2, 1))

    def diagonal(self) -> np.ndarray:
        return np.einsum("mii->mi", self.cell_blocks()).reshape(-1)


def analysis_covariance(K, H, factor, dense=None):
    """Analysis error covariance; dense array for small grids unless ``dense=False``."""
    A = AnalysisCovariance(K, H, factor)
    if dense is None:
        dense = factor.M <= DENSE_MAX_CELLS
    return A.dense() if dense else A


def resolution_matrix(factor, K, H, columns=None) -> np.ndarray:
    """``N = G^-1 K H G``; all columns for small grids, else the requested ones."""
    if columns is None:
        if factor.M > DENSE_MAX_CELLS:
            raise ValueError(f"dense resolution matrix limited to {DENSE_MAX_CELLS} cells; pass columns")
        E = np.eye(factor.size)
    else:
        E = np.eye(factor.size)[:, np.atleast_1d(columns)]
    HG = _dense(H) @ factor.apply_factor(E)
    return factor.apply_inverse_factor(np.asarray(K) @ HG)


def identity_closeness(N, n_cells=1) -> float:
    """Frobenius distance from the identity over temperature rows and columns."""
    idx = np.concatenate([N_STATE * c + np.arange(13)[T_SLOTS] for c in range(n_cells)])
    sub = np.asarray(N)[np.ix_(idx, idx)]
    return float(np.linalg.norm(sub - np.eye(idx.size)))


def block_spread(jacobians, cov_blocks) -> np.ndarray:
    """sqrt(diag(J C J^T)) per block; ``jacobians`` (n, 6, 13), ``cov_blocks`` (n, 13, 13)."""
    v = np.einsum("nij,njk,nik->ni", jacobians, cov_blocks, jacobians)
    return np.sqrt(np.maximum(v, 0.0))


def posterior_spread(operator, x_a, A: AnalysisCovariance) -> np.ndarray:
    """Per-site non-dimensional observation-space standard deviations, (N, 6)."""
    J = operator.jacobian_blocks(x_a)
    blocks = A.cell_blocks()[operator.cell_index]
    return block_spread(J, blocks)


def prior_spread(operator, x, factor) -> np.ndarray:
    J = operator.jacobian_blocks(x)
    return block_spread(J, factor.block_diagonal_B()[operator.cell_index])


def roughness(series) -> float:
    """Sum of squared circular second differences of a monthly series."""
    s = np.asarray(series, dtype=float)
    d2 = np.roll(s, -1) - 2 * s + np.roll(s, 1)
    return float(d2 @ d2)


# -- length-scale studies ------------------------------------------------

@dataclass
class LtStudyEntry:
    L_t: float
    prior_monthly: np.ndarray        # degC
    analysis_monthly: np.ndarray     # degC
    resolution: np.ndarray           # 13 x 13
    roughness: float
    closeness: float
    converged: bool


def lt_study(problem, lt_values, L_s=400.0, config=None) -> list:
    """Assimilate a single-cell problem at each temporal length scale.

    ``problem`` is a :class:`palaeovar.solver.Problem` on a one-cell grid.
    """
    if problem.grid.M != 1:
        raise ValueError("the L_t study runs on a single grid cell")
    if len(lt_values) == 0:
        raise ValueError("empty L_t list")
    sc = problem.scaling
    out = []
    for L_t in lt_values:
        f = problem.factor(L_s, L_t)
        res = problem.solve(f, config)
        H = problem.operator.jacobian(problem.x_b)
        K = gain(f, H, problem.r_inv)
        N = resolution_matrix(f, K, H)
        xa = sc.redim_state(res.x_a) if sc else res.x_a
        xb = sc.redim_state(problem.x_b) if sc else problem.x_b
        out.append(LtStudyEntry(
            float(L_t), xb[1:13].copy(), xa[1:13].copy(), N,
            roughness(xa[1:13]), identity_closeness(N), res.converged))
    return out


@dataclass
class LsStudy:
    L_s: np.ndarray
    kappa: np.ndarray
    trend: float           # Spearman rank correlation of kappa against L_s
    increasing: bool       # kappa at the largest L_s >= kappa at the smallest


def ls_study(problem, ls_values, L_t=1.0) -> LsStudy:
    """Condition number of S at the prior for each spatial length scale."""
    ls_values = np.asarray(list(ls_values), dtype=float)
    if ls_values.size == 0:
        raise ValueError("empty L_s list")
    H = problem.operator.jacobian(problem.x_b)
    kappa = np.empty(ls_values.size)
    for i, L_s in enumerate(ls_values):
        f = problem.factor(L_s, L_t)
        kappa[i] = condition_number(hessian_surrogate(f, H, problem.r_inv))
    trend = float(spearmanr(ls_values, kappa)[0]) if ls_values.size > 1 else float("nan")
    order = np.argsort(ls_values)
    return LsStudy(ls_values, kappa, trend, bool(kappa[order[-1]] >= kappa[order[0]]))
