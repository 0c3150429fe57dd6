"""
Graphical lasso by block coordinate descent.

Estimates a sparse precision matrix Theta minimising

    tr(Sigma_bar Theta) - log det(Theta) + lambda * sum_{j != k} |Theta_jk|

by sweeping over columns of the working covariance W and solving one
l1-penalised quadratic (a lasso in covariance form) per column with cyclic
coordinate descent. The diagonal of W is pinned to Sigma_bar_ii + lambda, the
usual solver convention, which keeps W positive definite even when
Sigma_bar is singular (m < p).
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Tuple

import numpy as np
import scipy.linalg

import config
from errors import InvalidConfig, NonPositiveDiagonal, NotConverged, NotPositiveDefinite
from matrix_core import SymMatrix, as_symmetric, cholesky, log_det_spd

logger = logging.getLogger(__name__)


# ---------- Data structures ----------

@dataclass(frozen=True)
class GlassoConfig:
    lam: float = 0.0
    max_outer_iters: int = config.GLASSO_MAX_ITERS
    tol: float = config.GLASSO_TOL
    inner_max_iters: int = config.GLASSO_INNER_MAX_ITERS
    inner_tol: float = config.GLASSO_INNER_TOL

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise InvalidConfig(f"lambda must be a finite non-negative number, got {self.lam}")
        if self.tol <= 0 or self.inner_tol <= 0:
            raise InvalidConfig("tolerances must be positive")
        if self.max_outer_iters < 1 or self.inner_max_iters < 1:
            raise InvalidConfig("iteration limits must be at least 1")

    def with_lambda(self, lam: float) -> 'GlassoConfig':
        return replace(self, lam=float(lam))


@dataclass(frozen=True)
class GlassoResult:
    theta: SymMatrix
    w: SymMatrix
    iters: int
    converged: bool
    objective: float
    objective_history: Tuple[float, ...] = ()
    dual_history: Tuple[float, ...] = ()

    def raise_if_not_converged(self) -> None:
        if not self.converged:
            raise NotConverged(f"graphical lasso stopped after {self.iters} sweeps without converging")

    def summary(self) -> dict:
        return {'iters': self.iters, 'converged': self.converged, 'objective': self.objective}


# ---------- Objective ----------

def soft_threshold(z: float, lam: float) -> float:
    """sign(z) * max(|z| - lam, 0); exactly zero when |z| <= lam."""
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


def glasso_objective(
    theta: SymMatrix,
    sigma_bar: SymMatrix,
    lam: float,
    penalize_diagonal: bool = False,
) -> float:
    """
    tr(Sigma_bar Theta) - log det(Theta) + lambda * sum_{j != k} |Theta_jk|.

    With penalize_diagonal the penalty runs over every entry, which is the
    objective graphical_lasso() actually minimises.

    Raises:
        NotPositiveDefinite: if theta is not positive definite
    """
    theta = np.asarray(theta, dtype=np.float64)
    sigma_bar = np.asarray(sigma_bar, dtype=np.float64)
    abs_theta = np.abs(theta)
    penalty = float(np.sum(abs_theta))
    if not penalize_diagonal:
        penalty -= float(np.sum(np.diag(abs_theta)))
    trace = float(np.sum(sigma_bar * theta))
    return trace - log_det_spd(theta) + lam * penalty


def count_offdiag_nonzeros(theta: SymMatrix, zero_tol: float = 1e-8) -> int:
    theta = np.asarray(theta)
    mask = np.abs(theta) > zero_tol
    return int(np.count_nonzero(mask) - np.count_nonzero(np.diag(mask)))


def optimality_violation(w: SymMatrix, sigma_bar: SymMatrix, lam: float) -> float:
    """
    Largest breach of the stationarity conditions |w_ij - s_ij| <= lambda
    (i != j) and w_ii = s_ii + lambda. Zero at an exact solution.
    """
    w = np.asarray(w)
    gap = np.abs(w - np.asarray(sigma_bar))
    diag_breach = float(np.max(np.abs(np.diag(gap) - lam)))
    np.fill_diagonal(gap, 0.0)
    off_breach = float(np.max(np.maximum(gap - lam, 0.0)))
    return max(diag_breach, off_breach)


# ---------- Solver ----------

def _lasso_cd(
    v: np.ndarray,
    s: np.ndarray,
    lam: float,
    beta: np.ndarray,
    max_iters: int,
    tol: float,
) -> Tuple[np.ndarray, int]:
    """
    Minimise 1/2 b'Vb - b's + lam*|b|_1 by cyclic coordinate descent.

    grad holds s - V b and is updated in place whenever a coordinate moves.
    After each full sweep only the active coordinates are cycled until they
    settle, then a full sweep confirms the active set.
    """
    n = s.shape[0]
    diag = np.diag(v).copy()
    grad = s - v @ beta
    full = list(range(n))
    coords = full
    sweeps = 0

    while sweeps < max_iters:
        sweeps += 1
        max_step = 0.0
        for k in coords:
            old = beta[k]
            new = soft_threshold(grad[k] + diag[k] * old, lam) / diag[k]
            if new != old:
                step = new - old
                grad -= step * v[k]
                beta[k] = new
                if abs(step) > max_step:
                    max_step = abs(step)

        if coords is full:
            if max_step <= tol:
                break
            coords = np.flatnonzero(beta).tolist()
        elif max_step <= tol:
            coords = full

    return beta, sweeps


def _recover_theta(w: np.ndarray, betas: np.ndarray, others: List[np.ndarray]) -> np.ndarray:
    p = w.shape[0]
    theta = np.zeros((p, p))
    for j in range(p):
        idx = others[j]
        beta = betas[j]
        t22 = 1.0 / (w[j, j] - w[idx, j] @ beta)
        theta[j, j] = t22
        theta[idx, j] = -beta * t22
    return theta


def _dual_objective(w: np.ndarray) -> float:
    """p + log det W: a lower bound on the objective, tight at the optimum."""
    sign, logdet = np.linalg.slogdet(w)
    if sign <= 0:
        return -float('inf')
    return w.shape[0] + float(logdet)


def _primal_objective(theta: np.ndarray, s: np.ndarray, lam: float) -> float:
    try:
        return glasso_objective(theta, s, lam, penalize_diagonal=True)
    except NotPositiveDefinite:
        return float('inf')


def graphical_lasso(sigma_bar: SymMatrix, glasso_config: GlassoConfig) -> GlassoResult:
    """
    Sparse precision estimate for a sample covariance.

    Args:
        sigma_bar: sample covariance (may be singular when lambda > 0)
        glasso_config: penalty and tolerances

    Returns:
        GlassoResult; converged is False when max_outer_iters ran out

    Raises:
        NonPositiveDiagonal: a variance is negative, or zero with lambda = 0
        NotPositiveDefinite: lambda = 0 with a singular sigma_bar, or a
            converged estimate that fails the Cholesky check
    """
    s = np.array(as_symmetric(sigma_bar))
    lam = glasso_config.lam
    p = s.shape[0]
    diag = np.diag(s)
    if np.any(diag < 0) or np.any(diag + lam <= 0):
        raise NonPositiveDiagonal("sample covariance needs positive diagonal (or lambda > 0)")
    if lam == 0.0:
        cholesky(s)

    w = s.copy()
    w[np.diag_indices(p)] += lam

    if p == 1:
        theta = as_symmetric([[1.0 / w[0, 0]]])
        objective = glasso_objective(theta, s, lam, penalize_diagonal=True)
        return GlassoResult(theta, as_symmetric(w), 0, True, objective, (objective,),
                            (_dual_objective(w),))

    others = [np.delete(np.arange(p), j) for j in range(p)]
    betas = np.zeros((p, p - 1))
    off_mask = ~np.eye(p, dtype=bool)
    threshold = glasso_config.tol * float(np.mean(np.abs(s[off_mask])))

    history: List[float] = []
    dual_history = [_dual_objective(w)]
    converged = False
    iters = 0
    for iters in range(1, glasso_config.max_outer_iters + 1):
        w_before = w.copy()
        for j in range(p):
            idx = others[j]
            w11 = w[np.ix_(idx, idx)]
            s12 = s[idx, j]
            if lam == 0.0:
                # unpenalised column problem: plain linear solve
                beta = scipy.linalg.cho_solve(scipy.linalg.cho_factor(w11, lower=True), s12)
            else:
                beta, _ = _lasso_cd(
                    w11, s12, lam, betas[j].copy(),
                    glasso_config.inner_max_iters, glasso_config.inner_tol,
                )
            betas[j] = beta
            w12 = w11 @ beta
            w[idx, j] = w12
            w[j, idx] = w12

        change = float(np.mean(np.abs(w - w_before)[off_mask]))
        theta = as_symmetric(_recover_theta(w, betas, others))
        history.append(_primal_objective(theta, s, lam))
        dual_history.append(_dual_objective(w))
        logger.debug("[glasso] sweep %d mean |dW| %.3e objective %.10g dual %.10g",
                     iters, change, history[-1], dual_history[-1])
        if len(history) > 1 and history[-1] > history[-2] + 1e-10:
            logger.warning("[glasso] objective rose at sweep %d: %.12g -> %.12g",
                           iters, history[-2], history[-1])
        if change <= threshold:
            converged = True
            break

    objective = history[-1]
    if converged and not np.isfinite(objective):
        raise NotPositiveDefinite("converged graphical lasso estimate is not positive definite")

    if not converged:
        logger.warning("[glasso] no convergence after %d sweeps (lambda=%g, p=%d)", iters, lam, p)
    else:
        logger.info("[glasso] converged in %d sweeps (lambda=%g, p=%d, objective=%.6g, gap=%.2e)",
                    iters, lam, p, objective, objective - dual_history[-1])

    return GlassoResult(theta, as_symmetric(w), iters, converged, objective,
                        tuple(history), tuple(dual_history))
