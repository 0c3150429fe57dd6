"""
Expected misclassification rates of plug-in LDA under known Gaussians,
and the norm-based upper bounds on them.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy.stats import norm

import config
from errors import DegenerateDirection, DimensionMismatch, ValidationError
from matrix_core import SymMatrix, as_symmetric, cholesky, invert_spd, norms

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GaussianPair:
    """Ground truth: N(mu_plus, sigma) and N(mu_minus, sigma) with P(+) = prior_plus."""

    mu_plus: np.ndarray
    mu_minus: np.ndarray
    sigma: SymMatrix
    prior_plus: float = 0.5

    def __post_init__(self):
        mu_plus = np.array(self.mu_plus, dtype=np.float64).reshape(-1)
        mu_minus = np.array(self.mu_minus, dtype=np.float64).reshape(-1)
        sigma = as_symmetric(self.sigma)
        if mu_plus.size != sigma.shape[0] or mu_minus.size != sigma.shape[0]:
            raise DimensionMismatch("means and covariance disagree in dimension")
        if not 0.0 < self.prior_plus < 1.0:
            raise ValidationError(f"prior_plus must lie in (0, 1), got {self.prior_plus}")
        cholesky(sigma)
        mu_plus.flags.writeable = False
        mu_minus.flags.writeable = False
        object.__setattr__(self, 'mu_plus', mu_plus)
        object.__setattr__(self, 'mu_minus', mu_minus)
        object.__setattr__(self, 'sigma', sigma)

    @property
    def p(self) -> int:
        return self.sigma.shape[0]

    @property
    def delta(self) -> np.ndarray:
        return self.mu_plus - self.mu_minus

    @property
    def precision(self) -> SymMatrix:
        return invert_spd(self.sigma)

    @property
    def mahalanobis(self) -> float:
        d = self.delta
        return math.sqrt(float(d @ self.precision @ d))

    def bayes_error(self) -> float:
        """Phi(-Delta/2), the error of the equal-prior rule with exact parameters."""
        return std_normal_cdf(-self.mahalanobis / 2.0)


def std_normal_cdf(z: float) -> float:
    return float(norm.cdf(z))


def _direction_scale(d: np.ndarray, precision_hat: np.ndarray, sigma: np.ndarray) -> float:
    pd = precision_hat @ d
    quad = float(pd @ sigma @ pd)
    if not quad > 0.0:
        raise DegenerateDirection(
            f"d' P Sigma P d = {quad:.3e} is not positive; the plug-in rule has no valid direction"
        )
    return math.sqrt(quad)


def expected_error_general(
    truth: GaussianPair,
    mu_hat_plus: npt.ArrayLike,
    mu_hat_minus: npt.ArrayLike,
    precision_hat: SymMatrix,
) -> float:
    """
    Misclassification probability of the rule sign((x - mid)' P d) when the
    data really follow `truth`, with d = mu_hat_plus - mu_hat_minus and mid
    their midpoint. The threshold carries no log-prior offset.
    """
    mu_hat_plus = np.asarray(mu_hat_plus, dtype=np.float64)
    mu_hat_minus = np.asarray(mu_hat_minus, dtype=np.float64)
    precision_hat = np.asarray(precision_hat, dtype=np.float64)
    if mu_hat_plus.shape != truth.mu_plus.shape or precision_hat.shape != truth.sigma.shape:
        raise DimensionMismatch("estimate and truth disagree in dimension")

    d = mu_hat_plus - mu_hat_minus
    mid = (mu_hat_plus + mu_hat_minus) / 2.0
    scale = _direction_scale(d, precision_hat, truth.sigma)
    pd = precision_hat @ d
    arg_plus = -float((truth.mu_plus - mid) @ pd) / scale
    arg_minus = float((truth.mu_minus - mid) @ pd) / scale
    return (truth.prior_plus * std_normal_cdf(arg_plus)
            + (1.0 - truth.prior_plus) * std_normal_cdf(arg_minus))


def expected_error_reduced(
    mu_hat_plus: npt.ArrayLike,
    mu_hat_minus: npt.ArrayLike,
    sigma: SymMatrix,
    precision_hat: SymMatrix,
) -> float:
    """Phi(-(d'Pd) / (2 sqrt(d'P Sigma P d))) with d the estimated mean gap."""
    d = np.asarray(mu_hat_plus, dtype=np.float64) - np.asarray(mu_hat_minus, dtype=np.float64)
    precision_hat = np.asarray(precision_hat, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if d.size != sigma.shape[0] or precision_hat.shape != sigma.shape:
        raise DimensionMismatch("means, sigma and precision disagree in dimension")
    scale = _direction_scale(d, precision_hat, sigma)
    return std_normal_cdf(-float(d @ precision_hat @ d) / (2.0 * scale))


def bound_result1(
    mu_hat_plus: npt.ArrayLike,
    mu_hat_minus: npt.ArrayLike,
    precision_hat: SymMatrix,
    sigma: SymMatrix,
) -> float:
    """Phi(-(|d|_2 / 2) * sqrt(|P|_F + |Sigma^-1 - P|_F))."""
    d = np.asarray(mu_hat_plus, dtype=np.float64) - np.asarray(mu_hat_minus, dtype=np.float64)
    precision_hat = np.asarray(precision_hat, dtype=np.float64)
    gap = invert_spd(sigma) - precision_hat
    radicand = norms(precision_hat).frobenius + norms(gap).frobenius
    return std_normal_cdf(-(float(np.linalg.norm(d)) / 2.0) * math.sqrt(radicand))


def bound_result3(
    mu_hat_plus: npt.ArrayLike,
    mu_hat_minus: npt.ArrayLike,
    t_hat: SymMatrix,
    m: int,
    c_rate: float = config.BOUND_C_RATE,
) -> float:
    """
    Phi(-(|d|_2 / 2) * sqrt(|T|_F + c_rate * p * sqrt(ln p / m))).

    c_rate stands in for the unknown constant of the stochastic rate.
    """
    if m < 2:
        raise ValidationError(f"m must be at least 2, got {m}")
    if c_rate < 0:
        raise ValidationError(f"c_rate must be non-negative, got {c_rate}")
    d = np.asarray(mu_hat_plus, dtype=np.float64) - np.asarray(mu_hat_minus, dtype=np.float64)
    t_hat = np.asarray(t_hat, dtype=np.float64)
    p = t_hat.shape[0]
    radicand = norms(t_hat).frobenius + c_rate * p * math.sqrt(math.log(p) / m)
    return std_normal_cdf(-(float(np.linalg.norm(d)) / 2.0) * math.sqrt(radicand))


def max_vector_support(theta: SymMatrix, zero_tol: float = 1e-10) -> int:
    """Largest per-row count of entries with |theta_ij| > zero_tol (diagonal included)."""
    if zero_tol < 0:
        raise ValidationError("zero_tol must be non-negative")
    theta = np.asarray(theta)
    return int(np.max(np.count_nonzero(np.abs(theta) > zero_tol, axis=1)))
