"""
Repeated-trial experiments.

- run_classification_trials: paired train/test splits, every estimator
  fitted on the same split, metrics aggregated as mean +/- std.
- estimator_error_study: l1 distance of small-sample precision estimates
  (pseudo-inverse, glasso, de-sparsified glasso) to a large-sample
  reference inverse.
- rate_study / bound_monitor: max-norm error of the de-sparsified estimate
  versus m, and how often the norm bound sits above the exact error rate.

Trial t always uses seed base_seed + t, so a run is reproducible from its
config alone and trials can run in worker processes in any order.
"""

import hashlib
import logging
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from rich.table import Table

from discriminant import fit, predict
from error_theory import GaussianPair, bound_result1, expected_error_reduced
from errors import DegenerateDirection, EmptyConfusion, InsufficientData, InvalidConfig
from estimators import (
    Centering,
    EstimatorKind,
    LabeledDataset,
    covariance_of,
    desparsify,
    mean_vector,
)
from glasso import GlassoConfig, graphical_lasso
from matrix_core import as_symmetric, cholesky, invert_spd, is_positive_definite, norms, pseudo_inverse
from synth import draw_labeled, sample_mvn

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


# ---------- Metrics ----------

@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @classmethod
    def from_predictions(cls, y_true: Sequence[int], y_pred: Sequence[int]) -> 'Confusion':
        y_true = np.asarray(y_true)
        y_pred = np.asarray(y_pred)
        return cls(
            tp=int(np.count_nonzero((y_true == 1) & (y_pred == 1))),
            tn=int(np.count_nonzero((y_true == -1) & (y_pred == -1))),
            fp=int(np.count_nonzero((y_true == -1) & (y_pred == 1))),
            fn=int(np.count_nonzero((y_true == 1) & (y_pred == -1))),
        )


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    f1: Optional[float]
    sensitivity: Optional[float]
    specificity: Optional[float]

    def as_dict(self) -> Dict[str, Optional[float]]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


METRIC_NAMES = ('accuracy', 'f1', 'sensitivity', 'specificity')


def _ratio(num: int, den: int) -> Optional[float]:
    # exact rational first, one rounding at the end
    return float(Fraction(num, den)) if den > 0 else None


def metrics(c: Confusion) -> Metrics:
    """Accuracy, F1, sensitivity and specificity; None where a denominator is 0."""
    if c.total <= 0:
        raise EmptyConfusion("confusion matrix is empty")
    return Metrics(
        accuracy=_ratio(c.tp + c.tn, c.total),
        f1=_ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn),
        sensitivity=_ratio(c.tp, c.tp + c.fn),
        specificity=_ratio(c.tn, c.tn + c.fp),
    )


# ---------- Classification trials ----------

@dataclass(frozen=True)
class ClassificationConfig:
    """
    Either `truth` (fresh Gaussian draws per trial) or `dataset` (disjoint
    balanced draws from a fixed pool) must be set.
    """

    algorithms: Tuple[EstimatorKind, ...]
    train_sizes: Tuple[int, ...]
    test_size: int
    repeats: int = 30
    base_seed: int = 0
    truth: Optional[GaussianPair] = None
    dataset: Optional[LabeledDataset] = None
    centering: Centering = Centering.GLOBAL
    glasso: GlassoConfig = field(default_factory=GlassoConfig)
    workers: int = 1

    def __post_init__(self):
        if (self.truth is None) == (self.dataset is None):
            raise InvalidConfig("set exactly one of truth or dataset")
        if not self.algorithms:
            raise InvalidConfig("no algorithms to evaluate")
        if not self.train_sizes or min(self.train_sizes) < 1 or self.test_size < 1:
            raise InvalidConfig("train and test sizes must be positive")
        if self.repeats < 1 or self.workers < 1:
            raise InvalidConfig("repeats and workers must be at least 1")


@dataclass(frozen=True)
class CellStats:
    mean: Dict[str, Optional[float]]
    std: Dict[str, Optional[float]]


@dataclass
class TrialReport:
    repeats: int
    seeds: List[int]
    train_sizes: Tuple[int, ...]
    algorithms: List[str]
    trials: Dict[Tuple[str, int], List[Metrics]]
    split_hashes: Dict[Tuple[str, int], List[str]]
    cells: Dict[Tuple[str, int], CellStats] = field(default_factory=dict)


def _split_hash(train: LabeledDataset, test: LabeledDataset) -> str:
    digest = hashlib.sha256()
    for arr in (train.features, train.labels, test.features, test.labels):
        digest.update(np.ascontiguousarray(arr).tobytes())
    return digest.hexdigest()[:16]


def _child_seeds(seed: int, n: int) -> List[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def draw_split(config: ClassificationConfig, n_train: int, seed: int) -> Tuple[LabeledDataset, LabeledDataset]:
    if config.truth is not None:
        train_seed, test_seed = _child_seeds(seed, 2)
        train = draw_labeled(config.truth, n_train, n_train, train_seed)
        test = draw_labeled(config.truth, config.test_size, config.test_size, test_seed)
        return train, test

    data = config.dataset
    rng = np.random.default_rng(seed)
    pos = rng.permutation(np.flatnonzero(data.labels == 1))
    neg = rng.permutation(np.flatnonzero(data.labels == -1))
    need = n_train + config.test_size
    if len(pos) < need or len(neg) < need:
        raise InsufficientData(
            f"need {need} samples per class, have {len(pos)} positive / {len(neg)} negative"
        )
    train_idx = np.concatenate([pos[:n_train], neg[:n_train]])
    test_idx = np.concatenate([pos[n_train:need], neg[n_train:need]])
    return data.subset(train_idx), data.subset(test_idx)


def _classification_trial(args) -> Dict[str, Tuple[Metrics, str]]:
    config, n_train, seed = args
    train, test = draw_split(config, n_train, seed)
    # crda and e2d2 at the same lambda reuse one glasso solve per split
    solved: Dict[float, np.ndarray] = {}
    outcome = {}
    for kind in config.algorithms:
        model = fit(train, kind, centering=config.centering, glasso_config=config.glasso,
                    glasso_cache=solved)
        confusion = Confusion.from_predictions(test.labels, predict(model, test.features))
        outcome[kind.label] = (metrics(confusion), _split_hash(train, test))
    return outcome


def _run_indexed(fn: Callable, jobs: List, workers: int) -> List:
    """Run fn over jobs, returning results in job order."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _mean_std(values: Iterable[Optional[float]]) -> Tuple[Optional[float], Optional[float]]:
    defined = np.array([v for v in values if v is not None], dtype=np.float64)
    if defined.size == 0:
        return None, None
    return float(defined.mean()), float(defined.std())


def run_classification_trials(config: ClassificationConfig) -> TrialReport:
    """
    Repeat fit/predict/metrics over R paired splits per training size.

    Returns:
        TrialReport with per-trial metrics and mean/std per (algorithm, size)
    """
    seeds = [config.base_seed + t for t in range(config.repeats)]
    labels = [kind.label for kind in config.algorithms]
    jobs = [(config, n, seed) for n in config.train_sizes for seed in seeds]
    logger.info("[bench] %d classification trials (%d algorithms)", len(jobs), len(labels))
    results = _run_indexed(_classification_trial, jobs, config.workers)

    trials: Dict[Tuple[str, int], List[Metrics]] = defaultdict(list)
    hashes: Dict[Tuple[str, int], List[str]] = defaultdict(list)
    for (_, n, _), outcome in zip(jobs, results):
        for label in labels:
            m, h = outcome[label]
            trials[(label, n)].append(m)
            hashes[(label, n)].append(h)

    report = TrialReport(config.repeats, seeds, tuple(config.train_sizes), labels, dict(trials), dict(hashes))
    for key, per_trial in report.trials.items():
        mean, std = {}, {}
        for name in METRIC_NAMES:
            mean[name], std[name] = _mean_std(getattr(m, name) for m in per_trial)
        report.cells[key] = CellStats(mean, std)
    return report


# ---------- Estimator error study ----------

@dataclass(frozen=True)
class EstimatorStudyConfig:
    precision: np.ndarray
    n_large: int
    sizes: Tuple[int, ...]
    lambdas: Tuple[float, ...]
    repeats: int = 30
    base_seed: int = 0
    glasso: GlassoConfig = field(default_factory=GlassoConfig)
    workers: int = 1
    # multiplies the true covariance; lambda is on the same absolute scale
    scale: float = 1.0

    def __post_init__(self):
        if not self.sizes or not self.lambdas:
            raise InvalidConfig("sizes and lambdas must be non-empty")
        if not np.isfinite(self.scale) or self.scale <= 0:
            raise InvalidConfig(f"scale must be positive, got {self.scale}")
        if min(self.sizes) < 1 or self.repeats < 1:
            raise InvalidConfig("sizes and repeats must be positive")
        if self.n_large <= 2 * max(self.sizes):
            raise InvalidConfig("n_large must be much larger than every small sample size")


@dataclass(frozen=True)
class StudyRow:
    trial: int
    size: int
    lam: float
    lda_l1: float
    theta_l1: float
    t_l1: float
    theta_induced: float
    t_induced: float

    @property
    def gap(self) -> float:
        return self.theta_l1 - self.t_l1


@dataclass
class StudyReport:
    rows: List[StudyRow]

    def frame(self) -> pd.DataFrame:
        records = [dict(vars(r), gap=r.gap) for r in self.rows]
        return pd.DataFrame.from_records(records)

    def gap_table(self) -> pd.DataFrame:
        """Mean gap, rows = sample size, columns = lambda."""
        return self.frame().pivot_table(index='size', columns='lam', values='gap', aggfunc='mean')

    def median_gap(self) -> Dict[float, float]:
        return self.frame().groupby('lam')['gap'].median().to_dict()

    def positive_fraction(self) -> Dict[float, float]:
        return self.frame().groupby('lam')['gap'].apply(lambda g: float((g > 0).mean())).to_dict()


def _reference_inverse(sigma_l: np.ndarray, n_large: int) -> np.ndarray:
    if n_large >= sigma_l.shape[0] and is_positive_definite(sigma_l):
        return invert_spd(sigma_l)
    return pseudo_inverse(sigma_l)


def _study_trial(args) -> List[StudyRow]:
    config, trial, seed = args
    sigma = config.scale * invert_spd(config.precision)
    p = sigma.shape[0]
    zero = np.zeros(p)
    seeds = _child_seeds(seed, 1 + len(config.sizes))

    sigma_l = covariance_of(sample_mvn(zero, sigma, config.n_large, seeds[0]))
    reference = _reference_inverse(sigma_l, config.n_large)

    rows = []
    for size, size_seed in zip(config.sizes, seeds[1:]):
        sigma_s = covariance_of(sample_mvn(zero, sigma, 2 * size, size_seed))
        lda_l1 = norms(reference - pseudo_inverse(sigma_s)).entrywise_l1
        for lam in config.lambdas:
            solved = graphical_lasso(sigma_s, config.glasso.with_lambda(lam))
            solved.raise_if_not_converged()
            theta = solved.theta
            t_hat = desparsify(theta, sigma_s)
            theta_err = norms(reference - theta)
            t_err = norms(reference - t_hat)
            rows.append(StudyRow(
                trial=trial, size=size, lam=lam, lda_l1=lda_l1,
                theta_l1=theta_err.entrywise_l1, t_l1=t_err.entrywise_l1,
                # symmetric, so the induced 1-norm equals the induced inf-norm
                theta_induced=theta_err.induced_inf, t_induced=t_err.induced_inf,
            ))
    return rows


def estimator_error_study(config: EstimatorStudyConfig) -> StudyReport:
    """
    Compare small-sample precision estimates against a large-sample reference.

    Each size n draws 2n samples (two classes sharing the covariance).
    """
    jobs = [(config, t, config.base_seed + t) for t in range(config.repeats)]
    logger.info("[bench] estimator study: %d trials, sizes %s, lambdas %s",
                len(jobs), list(config.sizes), list(config.lambdas))
    rows = [row for trial_rows in _run_indexed(_study_trial, jobs, config.workers) for row in trial_rows]
    return StudyReport(rows)


# ---------- Rate study ----------

@dataclass(frozen=True)
class RateRow:
    trial: int
    m: int
    lam: float
    max_error: float


def rate_lambda(lam_scale: float, p: int, m: int) -> float:
    return lam_scale * math.sqrt(math.log(p) / m)


def _rate_trial(args) -> List[RateRow]:
    precision, ms, lam_scale, glasso_config, trial, seed = args
    sigma = invert_spd(precision)
    p = sigma.shape[0]
    rows = []
    for m, m_seed in zip(ms, _child_seeds(seed, len(ms))):
        sigma_bar = covariance_of(sample_mvn(np.zeros(p), sigma, m, m_seed))
        lam = rate_lambda(lam_scale, p, m)
        solved = graphical_lasso(sigma_bar, glasso_config.with_lambda(lam))
        solved.raise_if_not_converged()
        t_hat = desparsify(solved.theta, sigma_bar)
        rows.append(RateRow(trial, m, lam, norms(t_hat - precision).entrywise_max))
    return rows


def rate_study(
    precision: np.ndarray,
    ms: Sequence[int],
    repeats: int = 20,
    lam_scale: float = 1.0,
    base_seed: int = 0,
    glasso_config: Optional[GlassoConfig] = None,
    workers: int = 1,
) -> List[RateRow]:
    """
    Max-norm error of the de-sparsified estimate against the true precision
    for each m, with lambda = lam_scale * sqrt(ln p / m).
    """
    if not ms or min(ms) < 2 or repeats < 1:
        raise InvalidConfig("need sample sizes >= 2 and at least one repeat")
    glasso_config = glasso_config or GlassoConfig()
    precision = as_symmetric(precision)
    jobs = [(precision, tuple(ms), lam_scale, glasso_config, t, base_seed + t) for t in range(repeats)]
    return [row for rows in _run_indexed(_rate_trial, jobs, workers) for row in rows]


def median_rate_error(rows: Iterable[RateRow]) -> Dict[int, float]:
    frame = pd.DataFrame.from_records([vars(r) for r in rows])
    return frame.groupby('m')['max_error'].median().to_dict()


# ---------- Bound monitoring ----------

@dataclass(frozen=True)
class BoundReport:
    instances: int
    evaluated: int
    bound_holds: int

    @property
    def fraction(self) -> Optional[float]:
        return self.bound_holds / self.evaluated if self.evaluated else None

    def as_dict(self) -> dict:
        return {
            'instances': self.instances,
            'evaluated': self.evaluated,
            'bound_holds': self.bound_holds,
            'fraction': self.fraction,
        }


def random_truth(p: int, rng: np.random.Generator, separation: float = 1.0) -> GaussianPair:
    a = rng.standard_normal((p, p))
    sigma = a @ a.T / p + 0.5 * np.eye(p)
    delta = rng.standard_normal(p)
    delta *= separation / np.linalg.norm(delta)
    return GaussianPair(delta / 2.0, -delta / 2.0, sigma)


def bound_monitor(n_instances: int = 200, p: int = 5, m: int = 50, seed: int = 0) -> BoundReport:
    """
    Fraction of random (truth, estimate) instances where the Frobenius
    bound is at least the exact expected error. Reported, not asserted.
    """
    if n_instances < 1 or m < 2:
        raise InvalidConfig("need at least one instance and m >= 2")
    rng = np.random.default_rng(seed)
    evaluated = holds = 0
    for _ in range(n_instances):
        truth = random_truth(p, rng, separation=float(rng.uniform(0.5, 3.0)))
        train = draw_labeled(truth, m // 2, m - m // 2, int(rng.integers(2**31)))
        mu_plus = mean_vector(train.samples_of(1))
        mu_minus = mean_vector(train.samples_of(-1))
        precision_hat = pseudo_inverse(covariance_of(train.features))
        try:
            error = expected_error_reduced(mu_plus, mu_minus, truth.sigma, precision_hat)
        except DegenerateDirection:
            continue
        evaluated += 1
        if bound_result1(mu_plus, mu_minus, precision_hat, truth.sigma) >= error:
            holds += 1
    report = BoundReport(n_instances, evaluated, holds)
    logger.info("[bench] bound >= error in %d of %d instances", holds, evaluated)
    return report


def monte_carlo_error(
    truth: GaussianPair,
    mu_hat_plus: np.ndarray,
    mu_hat_minus: np.ndarray,
    precision_hat: np.ndarray,
    n: int,
    seed: int,
) -> float:
    """
    Empirical error of the equal-prior rule sign((x - mid)' P d) on n points
    drawn from `truth` (labels drawn with probability prior_plus).
    """
    rng = np.random.default_rng(seed)
    is_plus = rng.random(n) < truth.prior_plus
    factor = cholesky(truth.sigma)
    x = rng.standard_normal((n, truth.p)) @ factor.T
    x += np.where(is_plus[:, None], truth.mu_plus, truth.mu_minus)
    d = np.asarray(mu_hat_plus) - np.asarray(mu_hat_minus)
    mid = (np.asarray(mu_hat_plus) + np.asarray(mu_hat_minus)) / 2.0
    predicted_plus = (x - mid) @ (np.asarray(precision_hat) @ d) >= 0
    return float(np.mean(predicted_plus != is_plus))


# ---------- Writers ----------

FLOAT_FORMAT = '%.10g'


def write_table1_csv(path: PathLike, report: TrialReport) -> None:
    """Rows = algorithm, columns = <metric>_<mean|std>@<train size>."""
    records = []
    for label in report.algorithms:
        record = {'algorithm': label}
        for n in report.train_sizes:
            cell = report.cells[(label, n)]
            for name in METRIC_NAMES:
                record[f"{name}_mean@{n}"] = cell.mean[name]
                record[f"{name}_std@{n}"] = cell.std[name]
        records.append(record)
    pd.DataFrame.from_records(records).to_csv(path, index=False, float_format=FLOAT_FORMAT,
                                              lineterminator='\n')


def write_table2_csv(path: PathLike, report: StudyReport) -> None:
    """Rows = sample size, columns = lambda, values = mean l1 gap."""
    table = report.gap_table()
    table.columns = [f"lambda={lam:g}" for lam in table.columns]
    table.to_csv(path, float_format=FLOAT_FORMAT, lineterminator='\n')


def write_study_trials_csv(path: PathLike, report: StudyReport) -> None:
    report.frame().to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


def write_curve_dat(path: PathLike, report: StudyReport) -> None:
    """gnuplot data: size, mean LDA l1 error, then glasso / de-sparsified l1 error per lambda."""
    frame = report.frame()
    lambdas = sorted(frame['lam'].unique())
    header = ['size', 'lda_l1'] + [f"{kind}_l1(lambda={lam:g})" for lam in lambdas for kind in ('theta', 't')]
    lines = ['# ' + ' '.join(header)]
    for size, group in frame.groupby('size'):
        values = [float(size), float(group['lda_l1'].mean())]
        for lam in lambdas:
            sub = group[group['lam'] == lam]
            values += [float(sub['theta_l1'].mean()), float(sub['t_l1'].mean())]
        lines.append(' '.join(FLOAT_FORMAT % v for v in values))
    Path(path).write_text('\n'.join(lines) + '\n')


def write_rate_csv(path: PathLike, rows: Iterable[RateRow]) -> None:
    pd.DataFrame.from_records([vars(r) for r in rows]).to_csv(
        path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


def trial_report_table(report: TrialReport) -> Table:
    """rich table of accuracy / F1 means per algorithm and training size."""
    table = Table(title=f"Classification ({report.repeats} trials)")
    table.add_column("Algorithm", style="cyan")
    for n in report.train_sizes:
        table.add_column(f"ACC@{n}", justify="right")
        table.add_column(f"F1@{n}", justify="right")
    for label in report.algorithms:
        row = [label]
        for n in report.train_sizes:
            cell = report.cells[(label, n)]
            for name in ('accuracy', 'f1'):
                mean, std = cell.mean[name], cell.std[name]
                row.append('-' if mean is None else f"{mean:.3f}±{std:.3f}")
        table.add_row(*row)
    return table


def study_report_table(report: StudyReport) -> Table:
    table = Table(title="Mean l1 gap |ref - Theta|_1 - |ref - T|_1")
    gap = report.gap_table()
    table.add_column("Samples (x2)", style="cyan")
    for lam in gap.columns:
        table.add_column(f"lambda={lam:g}", justify="right")
    for size, row in gap.iterrows():
        table.add_row(str(size), *[f"{v:.3f}" for v in row])
    return table
