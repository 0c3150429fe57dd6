"""
Seeded synthetic data.

Every sampler owns a numpy PCG64 generator built from an explicit seed
(np.random.default_rng(seed)); there is no global random state, so equal
seeds give bit-identical draws and distinct seeds are independent.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import numpy.typing as npt

from errors import InvalidSpec, ValidationError
from error_theory import GaussianPair
from estimators import LabeledDataset
from matrix_core import SymMatrix, as_symmetric, cholesky, invert_spd

logger = logging.getLogger(__name__)

MIN_EIGENVALUE = 0.05
STRUCTURES = ('banded', 'random')


@dataclass(frozen=True)
class SparsePrecisionSpec:
    """
    Ground-truth precision layout.

    banded: entries with 0 < |i - j| <= bandwidth get offdiag_strength.
    random: each row gets at most `support` off-diagonal partners (chosen
    symmetrically) with random sign.
    """

    p: int
    structure: str = 'banded'
    bandwidth: int = 1
    support: int = 0
    offdiag_strength: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.p < 1:
            raise InvalidSpec(f"p must be at least 1, got {self.p}")
        if self.structure not in STRUCTURES:
            raise InvalidSpec(f"structure must be one of {STRUCTURES}, got '{self.structure}'")
        if self.bandwidth < 0 or self.support < 0:
            raise InvalidSpec("bandwidth and support must be non-negative")
        if self.structure == 'random' and self.support >= self.p:
            raise InvalidSpec(f"support {self.support} needs p > support, got p={self.p}")
        if not math.isfinite(self.offdiag_strength):
            raise InvalidSpec("offdiag_strength must be finite")


def _load_diagonal(theta: np.ndarray) -> np.ndarray:
    smallest = float(np.linalg.eigvalsh(theta)[0])
    if smallest < MIN_EIGENVALUE:
        theta[np.diag_indices_from(theta)] += MIN_EIGENVALUE - smallest
    return theta


def make_precision_truth(spec: SparsePrecisionSpec) -> SymMatrix:
    """Positive definite precision with the declared sparsity pattern."""
    p = spec.p
    theta = np.eye(p)

    if spec.structure == 'banded':
        for offset in range(1, min(spec.bandwidth, p - 1) + 1):
            idx = np.arange(p - offset)
            theta[idx, idx + offset] = spec.offdiag_strength
            theta[idx + offset, idx] = spec.offdiag_strength
    else:
        rng = np.random.default_rng(spec.seed)
        degree = np.zeros(p, dtype=np.int64)
        for i in rng.permutation(p):
            need = spec.support - degree[i]
            if need <= 0:
                continue
            candidates = [j for j in range(p)
                          if j != i and degree[j] < spec.support and theta[i, j] == 0.0]
            if not candidates:
                continue
            chosen = rng.choice(candidates, size=min(need, len(candidates)), replace=False)
            for j in chosen:
                value = spec.offdiag_strength * rng.choice((-1.0, 1.0))
                theta[i, j] = theta[j, i] = value
                degree[i] += 1
                degree[j] += 1

    theta = _load_diagonal(theta)
    logger.debug("[synth] %s precision p=%d", spec.structure, p)
    return as_symmetric(theta)


def _draw(mu: np.ndarray, factor: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, factor.shape[0]))
    return mu + z @ factor.T


def sample_mvn(mu: npt.ArrayLike, sigma: SymMatrix, n: int, seed: int) -> np.ndarray:
    """
    n draws x = mu + L z with L the Cholesky factor of sigma and z standard
    normal from np.random.default_rng(seed).

    Returns:
        (n, p) array
    """
    if n < 1:
        raise ValidationError(f"n must be at least 1, got {n}")
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    factor = cholesky(sigma)
    if mu.size != factor.shape[0]:
        raise ValidationError("mean and covariance disagree in dimension")
    return _draw(mu, factor, n, np.random.default_rng(seed))


def regime_ratio(d: int, m: float, p: float) -> float:
    """d * ln(p) / sqrt(m); values much smaller than 1 are in the sparse regime."""
    if m <= 0 or p <= 1:
        raise ValidationError(f"need m > 0 and p > 1, got m={m}, p={p}")
    return d * math.log(p) / math.sqrt(m)


def make_gaussian_pair(
    precision: SymMatrix,
    separation: float,
    n_signal: Optional[int] = None,
    prior_plus: float = 0.5,
) -> GaussianPair:
    """
    Two Gaussians sharing covariance inv(precision), means +/- delta/2 where
    delta carries `separation` on its first n_signal coordinates.
    """
    sigma = invert_spd(precision)
    p = sigma.shape[0]
    n_signal = p if n_signal is None else n_signal
    if not 0 < n_signal <= p:
        raise InvalidSpec(f"n_signal must lie in [1, {p}], got {n_signal}")
    delta = np.zeros(p)
    delta[:n_signal] = separation
    return GaussianPair(delta / 2.0, -delta / 2.0, sigma, prior_plus)


def draw_labeled(truth: GaussianPair, n_plus: int, n_minus: int, seed: int) -> LabeledDataset:
    """Positives first, then negatives, from one generator seeded with `seed`."""
    if n_plus < 1 or n_minus < 1:
        raise ValidationError("both classes need at least one sample")
    rng = np.random.default_rng(seed)
    factor = cholesky(truth.sigma)
    positives = _draw(truth.mu_plus, factor, n_plus, rng)
    negatives = _draw(truth.mu_minus, factor, n_minus, rng)
    labels = np.concatenate([np.ones(n_plus, dtype=np.int64), -np.ones(n_minus, dtype=np.int64)])
    return LabeledDataset(np.vstack([positives, negatives]), labels)
