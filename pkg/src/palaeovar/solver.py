"""
Preconditioned variational cost and its L-BFGS minimisation.

The control variable is ``w`` with ``x = x_b + G w`` so that

    J(w) = 1/2 w.w + 1/2 (y - h(x))^T R^-1 (y - h(x))
    grad J(w) = w - G^T H_x^T R^-1 (y - h(x))

Absent observations carry zero inverse variance and a zeroed residual.
"""
from __future__ import annotations

import logging
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import line_search

from .domain import DomainError

log = logging.getLogger(__name__)


class NonFiniteCostError(FloatingPointError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    memory: int = 10
    max_iterations: int = 500
    gradient_norm_tolerance: float = 1e-6
    gradient_norm_floor: float = 1e-12
    c1: float = 1e-4
    c2: float = 0.9
    max_line_search: int = 40

    def __post_init__(self):
        if self.memory < 1 or self.max_iterations < 0 or self.max_line_search < 1:
            raise ValueError("memory, max_iterations and max_line_search must be positive")
        if not (0 < self.c1 < self.c2 < 1):
            raise ValueError("line search constants need 0 < c1 < c2 < 1")
        if not (self.gradient_norm_tolerance > 0 and self.gradient_norm_floor >= 0):
            raise ValueError("tolerances must be positive")


@dataclass
class CostEvaluation:
    J: float
    gradient: np.ndarray
    background_term: float
    observation_term: float
    x: Optional[np.ndarray] = None

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.J) and np.all(np.isfinite(self.gradient)))


@dataclass
class AnalysisResult:
    x_a: np.ndarray
    w_a: np.ndarray
    iterations: int
    gradient_norm: float
    converged: bool
    status: str
    cost_trace: list = field(default_factory=list)
    evaluations: int = 0
    x_a_dimensional: Optional[np.ndarray] = None

    @property
    def cost(self) -> float:
        return self.cost_trace[-1]


def _residual(y, hx, r_inv):
    return np.where(r_inv > 0, np.nan_to_num(y - hx, nan=0.0), 0.0)


def evaluate_cost(w, x_b, y, r_inv, factor, operator, gradient=True) -> CostEvaluation:
    """Cost, gradient and both cost terms at control vector ``w``."""
    w = np.asarray(w, dtype=float)
    x = x_b + factor.apply_factor(w)
    d = _residual(y, operator.apply(x), r_inv)
    jb = 0.5 * float(w @ w)
    jo = 0.5 * float(d @ (r_inv * d))
    if gradient:
        H = operator.jacobian(x)
        g = w - factor.apply_factor_transpose(H.T @ (r_inv * d))
    else:
        g = np.full_like(w, np.nan)
    return CostEvaluation(jb + jo, np.asarray(g), jb, jo, x)


class _CachedCost:
    """Memoised f/grad pair for the line search; failures map to +inf."""

    def __init__(self, fun):
        self.fun = fun
        self.store = {}
        self.calls = 0

    def __call__(self, w) -> CostEvaluation:
        key = w.tobytes()
        ev = self.store.get(key)
        if ev is None:
            self.calls += 1
            try:
                with np.errstate(all="ignore"):
                    ev = self.fun(w)
            except (DomainError, FloatingPointError, ValueError) as exc:
                log.debug("trial step rejected: %s", exc)
                ev = None
            if ev is None or not ev.finite:
                ev = CostEvaluation(np.inf, np.full(w.shape, np.nan), np.inf, np.inf)
            if len(self.store) > 8:
                self.store.clear()
            self.store[key] = ev
        return ev

    def f(self, w):
        return self(w).J

    def g(self, w):
        return self(w).gradient


def _two_loop(g, S, Y):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    if S:
        q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def minimize(x_b, y, r_inv, factor, operator, config: SolverConfig = None, scaling=None) -> AnalysisResult:
    """Minimise J(w) from ``w = 0`` with L-BFGS and strong-Wolfe line search.

    Returns the best iterate even when the iteration limit is hit or the
    line search fails; ``status`` tells which.
    """
    config = config or SolverConfig()
    x_b = np.asarray(x_b, dtype=float)
    y = np.asarray(y, dtype=float)
    r_inv = np.asarray(r_inv, dtype=float)
    cost = _CachedCost(lambda w: evaluate_cost(w, x_b, y, r_inv, factor, operator))

    w = np.zeros(factor.size)
    ev = cost(w)
    if not np.isfinite(ev.J):
        raise NonFiniteCostError("cost is not finite at the prior")
    g = ev.gradient
    trace = [ev.J]
    tol = max(config.gradient_norm_tolerance * np.linalg.norm(g), config.gradient_norm_floor)
    S, Y = deque(maxlen=config.memory), deque(maxlen=config.memory)
    status, it = "max_iterations", 0

    for it in range(config.max_iterations + 1):
        if np.linalg.norm(g) <= tol:
            status = "converged"
            break
        if it == config.max_iterations:
            break
        d = -_two_loop(g, S, Y)
        if not g @ d < 0:
            S.clear()
            Y.clear()
            d = -g
        alpha = None
        for attempt in range(2):
            # Without curvature pairs the unit step along -g has no natural
            # scale; seed the first trial step from |g| as scipy's BFGS does.
            prev = None if S else trace[-1] + 0.5 * np.linalg.norm(g)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                alpha = line_search(cost.f, cost.g, w, d, gfk=g, old_fval=trace[-1], old_old_fval=prev,
                                    c1=config.c1, c2=config.c2, maxiter=config.max_line_search)[0]
            if alpha is not None and np.isfinite(cost.f(w + alpha * d)):
                break
            alpha = None
            if not S:
                break
            S.clear()
            Y.clear()
            d = -g
        if alpha is None:
            status = "line_search_failed"
            log.warning("line search failed at iteration %d", it)
            break
        w_new = w + alpha * d
        ev_new = cost(w_new)
        s_vec, y_vec = w_new - w, ev_new.gradient - g
        if s_vec @ y_vec > 1e-12 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            S.append(s_vec)
            Y.append(y_vec)
        w, g = w_new, ev_new.gradient
        trace.append(ev_new.J)

    x_a = x_b + factor.apply_factor(w) if np.any(w) else x_b.copy()
    gnorm = float(np.linalg.norm(g))
    log.info("L-BFGS %s after %d iterations: J=%.6g |g|=%.3g", status, it, trace[-1], gnorm)
    return AnalysisResult(
        x_a=x_a, w_a=w, iterations=it, gradient_norm=gnorm, converged=status == "converged",
        status=status, cost_trace=trace, evaluations=cost.calls,
        x_a_dimensional=None if scaling is None else scaling.redim_state(x_a),
    )


@dataclass
class Problem:
    """Everything needed to assimilate, in non-dimensional space.

    ``sigma`` holds prior standard deviations (length 13M); ``y`` and
    ``r_inv`` are flat (6N,) observation values and inverse variances.
    """

    grid: object
    x_b: np.ndarray
    sigma: np.ndarray
    y: np.ndarray
    r_inv: np.ndarray
    operator: object
    scaling: object = None

    def factor(self, L_s: float, L_t: float):
        from .covariance import build_spatial_correlation, build_temporal_correlation, factorize
        return factorize(self.sigma, build_spatial_correlation(self.grid, L_s),
                         build_temporal_correlation(L_t))

    def solve(self, factor, config: SolverConfig = None) -> AnalysisResult:
        return minimize(self.x_b, self.y, self.r_inv, factor, self.operator, config, self.scaling)
