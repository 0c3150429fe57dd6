"""
Two-class linear discriminant with a pluggable precision matrix.

score(x) = delta_plus(x) - delta_minus(x) where

    delta_c(x) = x' P mu_c - 1/2 mu_c' P mu_c + log pi_c

and P is whichever precision estimate the model was fitted with.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import numpy.typing as npt

from errors import DimensionMismatch, SingleClassData, ValidationError
from estimators import (
    Centering,
    EstimatorKind,
    LabeledDataset,
    class_priors,
    make_precision,
    mean_vector,
)
from matrix_core import SymMatrix, as_symmetric

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LdaModel:
    mu_plus: np.ndarray
    mu_minus: np.ndarray
    precision: SymMatrix
    log_prior_plus: float
    log_prior_minus: float
    kind: Optional[str] = None
    n_train: Optional[int] = None

    def __post_init__(self):
        mu_plus = np.array(self.mu_plus, dtype=np.float64).reshape(-1)
        mu_minus = np.array(self.mu_minus, dtype=np.float64).reshape(-1)
        precision = as_symmetric(self.precision)
        p = precision.shape[0]
        if mu_plus.size != p or mu_minus.size != p:
            raise DimensionMismatch(
                f"means of length {mu_plus.size}/{mu_minus.size} do not match precision of size {p}"
            )
        total = math.exp(self.log_prior_plus) + math.exp(self.log_prior_minus)
        if not math.isclose(total, 1.0, rel_tol=1e-9):
            raise ValidationError(f"priors must sum to 1, got {total}")
        mu_plus.flags.writeable = False
        mu_minus.flags.writeable = False
        object.__setattr__(self, 'mu_plus', mu_plus)
        object.__setattr__(self, 'mu_minus', mu_minus)
        object.__setattr__(self, 'precision', precision)

    @property
    def p(self) -> int:
        return self.precision.shape[0]


def fit(
    data: LabeledDataset,
    kind: EstimatorKind,
    centering: Centering = Centering.GLOBAL,
    glasso_config=None,
    glasso_cache: Optional[Dict[float, SymMatrix]] = None,
) -> LdaModel:
    """
    Fit class means, plug-in precision and empirical log-priors.

    Raises:
        SingleClassData: if one of the two classes has no samples
        NotConverged: if a glasso-based estimator ran out of sweeps
    """
    positives = data.samples_of(1)
    negatives = data.samples_of(-1)
    if len(positives) == 0 or len(negatives) == 0:
        raise SingleClassData(
            f"need both classes, got {len(positives)} positive and {len(negatives)} negative samples"
        )

    precision = make_precision(data, kind, centering=centering, glasso_config=glasso_config,
                               glasso_cache=glasso_cache)
    pi_plus, pi_minus = class_priors(data.labels)
    logger.debug("[fit] %s on m=%d p=%d (pi+=%.3f)", kind.label, data.m, data.p, pi_plus)
    return LdaModel(
        mu_plus=mean_vector(positives),
        mu_minus=mean_vector(negatives),
        precision=precision,
        log_prior_plus=math.log(pi_plus),
        log_prior_minus=math.log(pi_minus),
        kind=str(kind),
        n_train=data.m,
    )


def _check_input(model: LdaModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.p:
        raise DimensionMismatch(f"input has dimension {x.shape[-1]}, model expects {model.p}")
    return x


def score(model: LdaModel, x: npt.ArrayLike) -> Union[float, np.ndarray]:
    """
    delta_plus(x) - delta_minus(x); positive means the positive class.

    x may be one vector or an (n, p) batch, in which case an array of n
    scores is returned.
    """
    x = _check_input(model, x)
    p_mu_plus = model.precision @ model.mu_plus
    p_mu_minus = model.precision @ model.mu_minus
    delta_plus = x @ p_mu_plus - 0.5 * model.mu_plus @ p_mu_plus + model.log_prior_plus
    delta_minus = x @ p_mu_minus - 0.5 * model.mu_minus @ p_mu_minus + model.log_prior_minus
    diff = delta_plus - delta_minus
    return float(diff) if np.ndim(diff) == 0 else diff


def predict(model: LdaModel, x: npt.ArrayLike) -> Union[int, np.ndarray]:
    """+1 when score >= 0 (ties go to the positive class), else -1."""
    s = score(model, x)
    if isinstance(s, float):
        return 1 if s >= 0 else -1
    return np.where(s >= 0, 1, -1)


# ---------- Persistence ----------

def model_to_dict(model: LdaModel) -> dict:
    return {
        'p': model.p,
        'kind': model.kind,
        'n_train': model.n_train,
        'mu_plus': model.mu_plus.tolist(),
        'mu_minus': model.mu_minus.tolist(),
        'precision': model.precision.reshape(-1).tolist(),
        'log_priors': [model.log_prior_plus, model.log_prior_minus],
    }


def model_from_dict(doc: dict) -> LdaModel:
    try:
        p = int(doc['p'])
        precision = np.asarray(doc['precision'], dtype=np.float64).reshape(p, p)
        log_plus, log_minus = doc['log_priors']
        return LdaModel(
            mu_plus=doc['mu_plus'],
            mu_minus=doc['mu_minus'],
            precision=precision,
            log_prior_plus=float(log_plus),
            log_prior_minus=float(log_minus),
            kind=doc.get('kind'),
            n_train=doc.get('n_train'),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"malformed model document: {e}") from e


def save_model(path: Union[str, Path], model: LdaModel) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + '\n')


def load_model(path: Union[str, Path]) -> LdaModel:
    return model_from_dict(json.loads(Path(path).read_text()))
