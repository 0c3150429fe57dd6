#!/usr/bin/env python3
"""
dslda command line.

Subcommands: glasso, fit, predict, error-rate, simulate, ingest,
bench-estimators, bench-classify, bench-rate, bench-bounds.

Artefacts go to --output-dir: matrices as plain text, models and summaries
as JSON, tables as CSV. Exit codes: 0 ok, 1 validation error, 2 numerical
failure, 64 unknown subcommand; failures print one JSON line on stderr.
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from rich.console import Console
from rich.logging import RichHandler

import config
from discriminant import fit, load_model, predict, save_model, score
from ehr_ingest import (
    UnmappedPolicy,
    build_frequency_vectors,
    parse_target_clusters,
    read_code_map_csv,
    read_visits_csv,
    write_audit_jsonl,
    write_ingest_csv,
)
from error_theory import (
    GaussianPair,
    bound_result1,
    bound_result3,
    expected_error_general,
    expected_error_reduced,
)
from errors import DsldaError, InvalidConfig, InvalidSpec, NumericalError, ValidationError
from estimators import Centering, EstimatorKind, read_dataset_csv, write_dataset_csv
from eval_harness import (
    ClassificationConfig,
    Confusion,
    EstimatorStudyConfig,
    bound_monitor,
    estimator_error_study,
    median_rate_error,
    metrics,
    rate_study,
    run_classification_trials,
    study_report_table,
    trial_report_table,
    write_curve_dat,
    write_rate_csv,
    write_study_trials_csv,
    write_table1_csv,
    write_table2_csv,
)
from glasso import GlassoConfig, graphical_lasso
from matrix_core import read_matrix_text, write_matrix_text
from synth import SparsePrecisionSpec, draw_labeled, make_gaussian_pair, make_precision_truth

logger = logging.getLogger('dslda')

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_USAGE = 64

BENCH_N_SIGNAL = 32

SUBCOMMANDS = (
    'glasso', 'fit', 'predict', 'error-rate', 'simulate', 'ingest',
    'bench-estimators', 'bench-classify', 'bench-rate', 'bench-bounds',
)
STOCHASTIC = ('simulate', 'bench-estimators', 'bench-classify', 'bench-rate', 'bench-bounds')

# flags that must be >= 1 / >= 0 wherever a subcommand defines them
POSITIVE_INT_FLAGS = ('p', 'n', 'repeats', 'workers', 'test_size', 'n_large', 'instances', 'm', 'max_iters')
NON_NEGATIVE_FLAGS = ('lam', 'seed', 'bandwidth', 'support', 'c_rate', 'lam_scale')

console = Console(stderr=True)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------- Run configuration ----------

@dataclass
class RunConfig:
    subcommand: str
    output_dir: Path
    log_level: str
    seed: Optional[int] = None
    options: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> 'RunConfig':
        options = {k: v for k, v in vars(args).items()
                   if k not in ('subcommand', 'output_dir', 'log_level', 'seed')}
        return cls(args.subcommand, Path(args.output_dir), args.log_level.upper(),
                   getattr(args, 'seed', None), options)

    def validate(self) -> None:
        if self.subcommand in STOCHASTIC and self.seed is None:
            raise InvalidConfig(f"{self.subcommand} requires --seed")
        if self.log_level not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            raise InvalidConfig(f"unknown log level '{self.log_level}'")
        values = dict(self.options, seed=self.seed)
        for name in POSITIVE_INT_FLAGS:
            if values.get(name) is not None and values[name] < 1:
                raise InvalidConfig(f"--{name.replace('_', '-')} must be at least 1")
        for name in NON_NEGATIVE_FLAGS:
            if values.get(name) is not None and values[name] < 0:
                raise InvalidConfig(f"--{name.replace('_', '-')} must be non-negative")
        for name in ('train_sizes', 'sizes', 'ms', 'horizon'):
            if values.get(name) and min(values[name]) < 1:
                raise InvalidConfig(f"--{name.replace('_', '-')} values must be positive")
        if values.get('lambdas') and min(values['lambdas']) < 0:
            raise InvalidConfig("--lambdas values must be non-negative")

    def path(self, name: str) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output_dir / name


def setup_logging(level: str) -> None:
    logging.basicConfig(
        level=level,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


def _emit(doc: dict) -> None:
    print(json.dumps(doc))


def _glasso_config(run: RunConfig, lam: float = 0.0) -> GlassoConfig:
    o = run.options
    return GlassoConfig(
        lam=lam,
        max_outer_iters=o.get('max_iters') or config.GLASSO_MAX_ITERS,
        tol=o.get('tol') or config.GLASSO_TOL,
    )


def _truth_spec(run: RunConfig) -> SparsePrecisionSpec:
    o = run.options
    return SparsePrecisionSpec(
        p=o['p'],
        structure=o.get('structure', 'banded'),
        bandwidth=o.get('bandwidth', 1),
        support=o.get('support') or 0,
        offdiag_strength=o.get('strength', 0.3),
        seed=run.seed or 0,
    )


# ---------- Subcommands ----------

def cmd_glasso(run: RunConfig) -> int:
    o = run.options
    sigma_bar = read_matrix_text(o['input'])
    result = graphical_lasso(sigma_bar, _glasso_config(run, o['lam']))
    out = Path(o['output']) if o.get('output') else run.path('theta.txt')
    out.parent.mkdir(parents=True, exist_ok=True)
    write_matrix_text(out, result.theta)
    _emit(result.summary())
    result.raise_if_not_converged()
    return EXIT_OK


def cmd_simulate(run: RunConfig) -> int:
    o = run.options
    spec = _truth_spec(run)
    precision = make_precision_truth(spec)
    truth = make_gaussian_pair(precision, o['separation'], o.get('n_signal'))
    data = draw_labeled(truth, o['n'], o['n'], run.seed)

    write_dataset_csv(run.path('dataset.csv'), data)
    write_matrix_text(run.path('sigma.txt'), truth.sigma)
    write_matrix_text(run.path('precision.txt'), precision)
    run.path('truth.json').write_text(json.dumps({
        'p': truth.p,
        'mu_plus': truth.mu_plus.tolist(),
        'mu_minus': truth.mu_minus.tolist(),
        'prior_plus': truth.prior_plus,
        'spec': asdict(spec),
    }, indent=2) + '\n')
    logger.info("[simulate] wrote %d samples (p=%d) to %s", data.m, data.p, run.output_dir)
    _emit({'samples': data.m, 'p': data.p, 'bayes_error': truth.bayes_error()})
    return EXIT_OK


def cmd_fit(run: RunConfig) -> int:
    o = run.options
    data = read_dataset_csv(o['data'])
    kind = EstimatorKind.parse(o['estimator'])
    model = fit(data, kind, centering=Centering(o['centering']), glasso_config=_glasso_config(run))
    out = Path(o['model']) if o.get('model') else run.path('model.json')
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(out, model)
    _emit({'model': str(out), 'estimator': kind.label, 'p': model.p, 'n_train': model.n_train})
    return EXIT_OK


def cmd_predict(run: RunConfig) -> int:
    o = run.options
    model = load_model(o['model'])
    data = read_dataset_csv(o['data'])
    scores = np.atleast_1d(score(model, data.features))
    labels = np.atleast_1d(predict(model, data.features))
    out = Path(o['output']) if o.get('output') else run.path('predictions.csv')
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = ['score,predicted'] + [f"{s!r},{int(l)}" for s, l in zip(scores.tolist(), labels.tolist())]
    out.write_text('\n'.join(lines) + '\n')
    summary = metrics(Confusion.from_predictions(data.labels, labels)).as_dict()
    _emit(dict(summary, predictions=str(out)))
    return EXIT_OK


def cmd_error_rate(run: RunConfig) -> int:
    o = run.options
    truth_dir = Path(o['truth_dir'])
    doc = json.loads((truth_dir / 'truth.json').read_text())
    missing = [key for key in ('mu_plus', 'mu_minus') if key not in doc]
    if missing:
        raise InvalidSpec(f"{truth_dir / 'truth.json'}: missing {', '.join(missing)}")
    sigma = read_matrix_text(truth_dir / 'sigma.txt')
    truth = GaussianPair(doc['mu_plus'], doc['mu_minus'], sigma, doc.get('prior_plus', 0.5))
    model = load_model(o['model'])
    m = o.get('m') or model.n_train
    if m is None:
        raise InvalidConfig("model has no n_train; pass --m")

    result = {
        'expected_error': expected_error_general(truth, model.mu_plus, model.mu_minus, model.precision),
        'expected_error_reduced': expected_error_reduced(model.mu_plus, model.mu_minus, sigma, model.precision),
        'bound_result1': bound_result1(model.mu_plus, model.mu_minus, model.precision, sigma),
        'bound_result3': bound_result3(model.mu_plus, model.mu_minus, model.precision, m, o['c_rate']),
        'bayes_error': truth.bayes_error(),
    }
    _emit(result)
    return EXIT_OK


def cmd_ingest(run: RunConfig) -> int:
    o = run.options
    visits = read_visits_csv(o['visits'])
    code_map = read_code_map_csv(o['code_map'], parse_target_clusters(o['target_clusters']))
    summary = {}
    for horizon in o['horizon']:
        result = build_frequency_vectors(visits, code_map, horizon, UnmappedPolicy(o['unmapped']))
        write_ingest_csv(run.path(f"dataset_h{horizon}.csv"), result)
        write_audit_jsonl(run.path(f"audit_h{horizon}.jsonl"), result.audit)
        summary[str(horizon)] = {
            'patients': len(result.patient_ids),
            'positives': int(np.count_nonzero(result.labels == 1)),
            'exclusions': len(result.audit),
        }
    _emit(summary)
    return EXIT_OK


def _algorithms(texts: List[str]):
    return tuple(EstimatorKind.parse(t) for t in texts)


def cmd_bench_classify(run: RunConfig) -> int:
    o = run.options
    truth = dataset = None
    if o['data']:
        dataset = read_dataset_csv(o['data'])
    else:
        precision = make_precision_truth(_truth_spec(run))
        n_signal = o.get('n_signal')
        if n_signal is None:
            n_signal = min(BENCH_N_SIGNAL, precision.shape[0])
        truth = make_gaussian_pair(precision, o['separation'], n_signal)
    bench = ClassificationConfig(
        algorithms=_algorithms(o['algorithms']),
        train_sizes=tuple(o['train_sizes']),
        test_size=o['test_size'],
        repeats=o['repeats'],
        base_seed=run.seed,
        truth=truth,
        dataset=dataset,
        centering=Centering(o['centering']),
        glasso=_glasso_config(run),
        workers=o['workers'],
    )
    report = run_classification_trials(bench)
    write_table1_csv(run.path('table1.csv'), report)
    console.print(trial_report_table(report))
    _emit({'table': str(run.path('table1.csv')), 'repeats': report.repeats})
    return EXIT_OK


def cmd_bench_estimators(run: RunConfig) -> int:
    o = run.options
    bench = EstimatorStudyConfig(
        precision=make_precision_truth(_truth_spec(run)),
        n_large=o['n_large'],
        sizes=tuple(o['sizes']),
        lambdas=tuple(o['lambdas']),
        repeats=o['repeats'],
        base_seed=run.seed,
        glasso=_glasso_config(run),
        workers=o['workers'],
        scale=o['scale'],
    )
    report = estimator_error_study(bench)
    write_table2_csv(run.path('table2.csv'), report)
    write_study_trials_csv(run.path('estimator_trials.csv'), report)
    write_curve_dat(run.path('estimator_curves.dat'), report)
    console.print(study_report_table(report))
    _emit({
        'median_gap': {f"{k:g}": v for k, v in report.median_gap().items()},
        'positive_fraction': {f"{k:g}": v for k, v in report.positive_fraction().items()},
    })
    return EXIT_OK


def cmd_bench_rate(run: RunConfig) -> int:
    o = run.options
    rows = rate_study(
        make_precision_truth(_truth_spec(run)),
        o['ms'],
        repeats=o['repeats'],
        lam_scale=o['lam_scale'],
        base_seed=run.seed,
        glasso_config=_glasso_config(run),
        workers=o['workers'],
    )
    write_rate_csv(run.path('rate.csv'), rows)
    _emit({'median_max_error': {str(m): v for m, v in median_rate_error(rows).items()}})
    return EXIT_OK


def cmd_bench_bounds(run: RunConfig) -> int:
    o = run.options
    report = bound_monitor(o['instances'], o['p'], o['m'], run.seed)
    run.path('bounds.json').write_text(json.dumps(report.as_dict(), indent=2) + '\n')
    _emit(report.as_dict())
    return EXIT_OK


HANDLERS = {
    'glasso': cmd_glasso,
    'fit': cmd_fit,
    'predict': cmd_predict,
    'error-rate': cmd_error_rate,
    'simulate': cmd_simulate,
    'ingest': cmd_ingest,
    'bench-estimators': cmd_bench_estimators,
    'bench-classify': cmd_bench_classify,
    'bench-rate': cmd_bench_rate,
    'bench-bounds': cmd_bench_bounds,
}


# ---------- Argument parsing ----------

def _add_truth_flags(
    parser: argparse.ArgumentParser,
    p_default: Optional[int] = None,
    strength_default: float = 0.3,
) -> None:
    parser.add_argument("--p", type=int, default=p_default, required=p_default is None, help="Dimension")
    parser.add_argument("--structure", choices=('banded', 'random'), default='banded')
    parser.add_argument("--bandwidth", type=int, default=1, help="Band half-width of the true precision")
    parser.add_argument("--support", type=int, default=0, help="Off-diagonals per row (random structure)")
    parser.add_argument("--strength", type=float, default=strength_default, help="Off-diagonal value of the true precision")


def _add_glasso_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tol", type=float, help="Glasso convergence tolerance")
    parser.add_argument("--max-iters", type=int, help="Glasso outer sweep limit")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--output-dir", default=config.OUTPUT_DIR, help="Directory for output files")
    common.add_argument("--log-level", default=config.LOG_LEVEL, help="Logging level")

    parser = _Parser(prog="dslda", description="De-sparsified precision LDA toolkit")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("glasso", parents=[common], help="Graphical lasso on a covariance matrix file")
    p.add_argument("--input", required=True, help="Covariance matrix in text format")
    p.add_argument("--lambda", dest="lam", type=float, required=True, help="Penalty")
    p.add_argument("--output", help="Where to write Theta (default <output-dir>/theta.txt)")
    _add_glasso_flags(p)

    p = sub.add_parser("fit", parents=[common], help="Fit an LDA model")
    p.add_argument("--data", required=True, help="Dataset CSV (label,f1,...,fp)")
    p.add_argument("--estimator", default="e2d2:10", help="mle | lda | diag | shrinkage:B | crda:L | e2d2:L")
    p.add_argument("--centering", choices=[c.value for c in Centering], default=Centering.GLOBAL.value)
    p.add_argument("--model", help="Model JSON output (default <output-dir>/model.json)")
    _add_glasso_flags(p)

    p = sub.add_parser("predict", parents=[common], help="Score a dataset with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--output", help="Predictions CSV (default <output-dir>/predictions.csv)")

    p = sub.add_parser("error-rate", parents=[common], help="Expected error and bounds of a saved model")
    p.add_argument("--truth-dir", required=True, help="Directory written by 'simulate'")
    p.add_argument("--model", required=True)
    p.add_argument("--m", type=int, help="Training sample size (default: from the model)")
    p.add_argument("--c-rate", type=float, default=config.BOUND_C_RATE)

    p = sub.add_parser("simulate", parents=[common], help="Draw a synthetic two-class dataset")
    _add_truth_flags(p)
    p.add_argument("--n", type=int, required=True, help="Samples per class")
    p.add_argument("--separation", type=float, default=0.5, help="Per-coordinate mean gap")
    p.add_argument("--n-signal", type=int, help="Coordinates carrying the mean gap (default all)")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("ingest", parents=[common], help="Visit log -> frequency vectors")
    p.add_argument("--visits", required=True, help="CSV patient_id,visit_date,code")
    p.add_argument("--code-map", required=True, help="CSV code,cluster")
    p.add_argument("--target-clusters", required=True, help="Comma separated cluster ids")
    p.add_argument("--horizon", type=int, nargs='+', default=[30, 60, 90], help="Days in advance")
    p.add_argument("--unmapped", choices=[u.value for u in UnmappedPolicy], default=UnmappedPolicy.SKIP.value)

    p = sub.add_parser("bench-classify", parents=[common], help="Repeated classification trials")
    _add_truth_flags(p, p_default=200, strength_default=0.1)
    p.add_argument("--data", help="Dataset CSV pool (default: synthetic truth)")
    p.add_argument("--separation", type=float, default=0.5)
    p.add_argument("--n-signal", type=int, help="Coordinates carrying the mean gap (default min(32, p))")
    p.add_argument("--train-sizes", type=int, nargs='+', default=[50])
    p.add_argument("--test-size", type=int, default=500)
    p.add_argument("--algorithms", nargs='+', default=['lda', 'diag', 'shrinkage:0.5', 'crda:10', 'e2d2:10'])
    p.add_argument("--centering", choices=[c.value for c in Centering], default=Centering.GLOBAL.value)
    p.add_argument("--repeats", type=int, default=30)
    p.add_argument("--workers", type=int, default=config.WORKERS)
    p.add_argument("--seed", type=int)
    _add_glasso_flags(p)

    p = sub.add_parser("bench-estimators", parents=[common], help="l1 error of precision estimators")
    _add_truth_flags(p, p_default=100)
    p.add_argument("--n-large", type=int, default=10000)
    p.add_argument("--sizes", type=int, nargs='+', default=[50, 100, 150, 200])
    p.add_argument("--lambdas", type=float, nargs='+', default=[0.1, 1.0, 10.0])
    p.add_argument("--scale", type=float, default=0.01, help="Multiplier on the true covariance")
    p.add_argument("--repeats", type=int, default=30)
    p.add_argument("--workers", type=int, default=config.WORKERS)
    p.add_argument("--seed", type=int)
    _add_glasso_flags(p)

    p = sub.add_parser("bench-rate", parents=[common], help="Max-norm error of the de-sparsified estimate vs m")
    _add_truth_flags(p, p_default=50)
    p.add_argument("--ms", type=int, nargs='+', default=[100, 400, 1600])
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--lam-scale", type=float, default=1.0)
    p.add_argument("--workers", type=int, default=config.WORKERS)
    p.add_argument("--seed", type=int)
    _add_glasso_flags(p)

    p = sub.add_parser("bench-bounds", parents=[common], help="How often the norm bound exceeds the error")
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--p", type=int, default=5)
    p.add_argument("--m", type=int, default=50)
    p.add_argument("--seed", type=int)

    return parser


def _fail(code: int, error_name: str, message: str) -> int:
    sys.stderr.write(json.dumps({'error': error_name, 'message': message}) + '\n')
    return code


def dispatch(argv: List[str]) -> int:
    """Parse argv, run the subcommand and return the process exit code."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        if not any(token in SUBCOMMANDS for token in argv):
            return _fail(EXIT_USAGE, 'UnknownSubcommand', str(e))
        return _fail(EXIT_VALIDATION, 'InvalidConfig', str(e))

    run = RunConfig.from_args(args)
    try:
        run.validate()
        setup_logging(run.log_level)
        return HANDLERS[run.subcommand](run)
    except NumericalError as e:
        logger.error("[%s] %s", run.subcommand, e)
        return _fail(EXIT_NUMERICAL, e.code, str(e))
    except ValidationError as e:
        logger.error("[%s] %s", run.subcommand, e)
        return _fail(EXIT_VALIDATION, e.code, str(e))
    except DsldaError as e:
        return _fail(EXIT_VALIDATION, e.code, str(e))
    except (OSError, ValueError, KeyError) as e:
        return _fail(EXIT_VALIDATION, type(e).__name__, str(e))


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == '__main__':
    main()
