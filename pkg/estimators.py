"""
Covariance and precision estimators.

Sample (MLE) covariance, the shrinkage/diagonal baselines, the
de-sparsified graphical lasso precision, and the dispatcher that turns a
labelled dataset into the plug-in precision matrix of an LDA rule.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
import pandas as pd

from errors import (
    BetaOutOfRange,
    DimensionMismatch,
    EmptyInput,
    InvalidSpec,
    NotPositiveDefinite,
    ValidationError,
)
from glasso import GlassoConfig, graphical_lasso
from matrix_core import SymMatrix, as_symmetric, invert_spd, pseudo_inverse, require_same_dim

logger = logging.getLogger(__name__)

LABELS = (-1, 1)


# ---------- Data structures ----------

@dataclass(frozen=True)
class LabeledDataset:
    """m feature vectors of dimension p with labels in {-1, +1}."""

    features: np.ndarray   # (m, p) float64
    labels: np.ndarray     # (m,) int64

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64, copy=True)
        y = np.array(self.labels, dtype=np.int64, copy=True).reshape(-1)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise EmptyInput(f"dataset needs at least one sample and one feature, got {x.shape}")
        if x.shape[0] != y.size:
            raise DimensionMismatch(f"{x.shape[0]} samples but {y.size} labels")
        if not np.all(np.isin(y, LABELS)):
            raise ValidationError("labels must be -1 or +1")
        if not np.all(np.isfinite(x)):
            raise ValidationError("features must be finite")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, 'features', x)
        object.__setattr__(self, 'labels', y)

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def samples_of(self, label: int) -> np.ndarray:
        return self.features[self.labels == label]

    def subset(self, indices: Sequence[int]) -> 'LabeledDataset':
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx])


class Centering(str, Enum):
    GLOBAL = 'global'
    POOLED_CLASS = 'pooled'


KIND_TAGS = ('mle', 'lda', 'diag', 'shrinkage', 'crda', 'e2d2')
_PARAM_TAGS = ('shrinkage', 'crda', 'e2d2')
_DISPLAY = {
    'mle': 'MLE',
    'lda': 'LDA',
    'diag': 'DIAG',
    'shrinkage': 'Shrinkage',
    'crda': 'CRDA',
    'e2d2': 'E2D2',
}


@dataclass(frozen=True)
class EstimatorKind:
    """
    Which plug-in precision an LDA rule uses.

    tag is one of mle, lda (pseudo-inverse), diag, shrinkage (param = beta),
    crda (param = lambda, glasso precision) and e2d2 (param = lambda,
    de-sparsified glasso precision).
    """

    tag: str
    param: Optional[float] = None

    def __post_init__(self):
        if self.tag not in KIND_TAGS:
            raise InvalidSpec(f"unknown estimator '{self.tag}', expected one of {', '.join(KIND_TAGS)}")
        if self.tag in _PARAM_TAGS:
            if self.param is None:
                raise InvalidSpec(f"estimator '{self.tag}' needs a parameter")
            if self.tag == 'shrinkage' and not 0.0 <= self.param <= 1.0:
                raise BetaOutOfRange(f"beta must lie in [0, 1], got {self.param}")
            if self.tag in ('crda', 'e2d2') and self.param < 0:
                raise InvalidSpec(f"lambda must be non-negative, got {self.param}")
        elif self.param is not None:
            raise InvalidSpec(f"estimator '{self.tag}' takes no parameter")

    @classmethod
    def parse(cls, text: str) -> 'EstimatorKind':
        """Parse 'lda', 'diag', 'shrinkage:0.5', 'crda:10', 'e2d2:10'."""
        tag, _, value = text.strip().lower().partition(':')
        if not value:
            return cls(tag)
        try:
            param = float(value)
        except ValueError:
            raise InvalidSpec(f"bad estimator parameter in '{text}'")
        return cls(tag, param)

    @property
    def label(self) -> str:
        name = _DISPLAY[self.tag]
        if self.param is None:
            return name
        symbol = 'beta' if self.tag == 'shrinkage' else 'lambda'
        return f"{name}({symbol}={self.param:g})"

    def __str__(self) -> str:
        return self.tag if self.param is None else f"{self.tag}:{self.param:g}"


# ---------- Estimators ----------

def mean_vector(samples: npt.ArrayLike) -> np.ndarray:
    """Coordinate-wise arithmetic mean of a list of equal-length vectors."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("mean of an empty sample list")
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionMismatch(f"samples must be a list of vectors, got shape {arr.shape}")
    return arr.mean(axis=0)


def covariance_of(samples: npt.ArrayLike) -> SymMatrix:
    """MLE covariance (divisor m) of unlabelled samples around their grand mean."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise EmptyInput(f"covariance needs at least 2 samples, got shape {x.shape}")
    centered = x - x.mean(axis=0)
    return as_symmetric(centered.T @ centered / x.shape[0])


def sample_covariance_mle(data: LabeledDataset, centering: Centering = Centering.GLOBAL) -> SymMatrix:
    """
    Maximum likelihood covariance (divisor m).

    GLOBAL centres every sample at the grand mean; POOLED_CLASS centres
    each sample at the mean of its own class.
    """
    if data.m < 2:
        raise EmptyInput(f"covariance needs at least 2 samples, got {data.m}")
    centering = Centering(centering)
    if centering is Centering.GLOBAL:
        return covariance_of(data.features)

    centered = np.empty_like(data.features)
    for label in LABELS:
        mask = data.labels == label
        if mask.any():
            centered[mask] = data.features[mask] - mean_vector(data.features[mask])
    return as_symmetric(centered.T @ centered / data.m)


def shrinkage_covariance(sigma_bar: SymMatrix, beta: float) -> SymMatrix:
    """beta * sigma_bar + (1 - beta) * diag(sigma_bar)."""
    if not 0.0 <= beta <= 1.0:
        raise BetaOutOfRange(f"beta must lie in [0, 1], got {beta}")
    sigma_bar = np.asarray(sigma_bar, dtype=np.float64)
    shrunk = beta * sigma_bar
    np.fill_diagonal(shrunk, np.diag(sigma_bar))
    return as_symmetric(shrunk)


def desparsify(theta_hat: SymMatrix, sigma_bar: SymMatrix) -> SymMatrix:
    """
    De-sparsified precision 2*Theta - Theta @ Sigma @ Theta.

    The result is symmetric but not necessarily positive definite.
    """
    theta_hat = np.asarray(theta_hat, dtype=np.float64)
    sigma_bar = np.asarray(sigma_bar, dtype=np.float64)
    require_same_dim(theta_hat, sigma_bar)
    return as_symmetric(2.0 * theta_hat - theta_hat @ sigma_bar @ theta_hat)


def class_priors(labels: npt.ArrayLike) -> Tuple[float, float]:
    """Empirical class frequencies (pi_plus, pi_minus)."""
    y = np.asarray(labels)
    if y.size == 0:
        raise EmptyInput("no labels")
    pi_plus = float(np.count_nonzero(y == 1)) / y.size
    return pi_plus, 1.0 - pi_plus


def make_precision(
    data: LabeledDataset,
    kind: EstimatorKind,
    centering: Centering = Centering.GLOBAL,
    glasso_config=None,
    glasso_cache: Optional[Dict[float, SymMatrix]] = None,
) -> SymMatrix:
    """
    Plug-in precision matrix for the requested estimator.

    Args:
        data: training samples
        kind: estimator to use
        centering: how the sample covariance is centred
        glasso_config: optional GlassoConfig whose tolerances are reused for
            the crda/e2d2 kinds (its lambda is replaced by kind.param)
        glasso_cache: optional lambda -> glasso precision map for this dataset
            and centering; filled on a miss and reused on a hit

    Returns:
        Symmetric p x p precision estimate

    Raises:
        NotConverged: if the graphical lasso ran out of sweeps
    """
    sigma_bar = sample_covariance_mle(data, centering)
    tag = kind.tag

    if tag == 'mle':
        return invert_spd(sigma_bar)
    if tag == 'lda':
        return pseudo_inverse(sigma_bar)
    if tag == 'diag':
        return _invert_diagonal(sigma_bar)
    if tag == 'shrinkage':
        if kind.param == 0.0:
            return _invert_diagonal(sigma_bar)
        return invert_spd(shrinkage_covariance(sigma_bar, kind.param))

    theta = glasso_cache.get(kind.param) if glasso_cache is not None else None
    if theta is None:
        base = glasso_config if glasso_config is not None else GlassoConfig()
        result = graphical_lasso(sigma_bar, base.with_lambda(kind.param))
        result.raise_if_not_converged()
        theta = result.theta
        if glasso_cache is not None:
            glasso_cache[kind.param] = theta
    if tag == 'crda':
        return theta
    return desparsify(theta, sigma_bar)


def _invert_diagonal(sigma_bar: SymMatrix) -> SymMatrix:
    diag = np.diag(sigma_bar)
    if np.any(diag <= 0):
        raise NotPositiveDefinite("diagonal covariance has a non-positive variance")
    return as_symmetric(np.diag(1.0 / diag))


# ---------- CSV ----------

PathLike = Union[str, Path]


def read_dataset_csv(path: PathLike) -> LabeledDataset:
    """
    Read a dataset CSV with header label,f1,...,fp.

    Labels may be -1/1 or 0/1 (0 is mapped to -1).
    """
    frame = pd.read_csv(path)
    if 'label' not in frame.columns:
        raise ValidationError(f"{path}: missing 'label' column")
    labels = frame['label'].to_numpy(dtype=np.int64)
    labels = np.where(labels == 0, -1, labels)
    features = frame.drop(columns=['label']).to_numpy(dtype=np.float64)
    return LabeledDataset(features, labels)


def write_dataset_csv(path: PathLike, data: LabeledDataset, integer_features: bool = False) -> None:
    columns = [f"f{j + 1}" for j in range(data.p)]
    values = data.features.astype(np.int64) if integer_features else data.features
    frame = pd.DataFrame(values, columns=columns)
    frame.insert(0, 'label', data.labels)
    frame.to_csv(path, index=False, lineterminator='\n')
