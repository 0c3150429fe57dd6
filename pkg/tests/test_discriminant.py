import math

import numpy as np
import pytest

from conftest import random_spd
from discriminant import LdaModel, fit, load_model, predict, save_model, score
from errors import DimensionMismatch, SingleClassData, ValidationError
from estimators import EstimatorKind, LabeledDataset, desparsify, sample_covariance_mle
from glasso import GlassoConfig, graphical_lasso
from matrix_core import invert_spd
from synth import SparsePrecisionSpec, draw_labeled, make_gaussian_pair, make_precision_truth

HALF = math.log(0.5)


def _model(mu_plus, mu_minus, precision, pi_plus=0.5):
    return LdaModel(mu_plus, mu_minus, precision, math.log(pi_plus), math.log(1.0 - pi_plus))


# ---------- Fitting ----------

def test_balanced_data_gives_equal_priors(rng):
    x = rng.standard_normal((20, 3))
    model = fit(LabeledDataset(x, [1] * 10 + [-1] * 10), EstimatorKind('diag'))
    assert model.log_prior_plus == model.log_prior_minus == pytest.approx(HALF)


def test_unbalanced_priors(rng):
    x = rng.standard_normal((20, 3))
    model = fit(LabeledDataset(x, [1] * 15 + [-1] * 5), EstimatorKind('diag'))
    assert model.log_prior_plus == pytest.approx(math.log(0.75))
    assert model.log_prior_minus == pytest.approx(math.log(0.25))


def test_fit_means(rng):
    x = rng.standard_normal((8, 2))
    labels = np.array([1, -1] * 4)
    model = fit(LabeledDataset(x, labels), EstimatorKind('lda'))
    assert np.allclose(model.mu_plus, x[labels == 1].mean(axis=0))
    assert np.allclose(model.mu_minus, x[labels == -1].mean(axis=0))
    assert model.n_train == 8
    assert model.kind == 'lda'


def test_e2d2_fit_uses_desparsified_glasso(rng):
    x = rng.standard_normal((30, 6))
    data = LabeledDataset(x, [1] * 15 + [-1] * 15)
    model = fit(data, EstimatorKind('e2d2', 0.3))
    sigma_bar = sample_covariance_mle(data)
    theta = graphical_lasso(sigma_bar, GlassoConfig(lam=0.3)).theta
    assert np.array_equal(model.precision, desparsify(theta, sigma_bar))


def test_fit_needs_both_classes(rng):
    data = LabeledDataset(rng.standard_normal((5, 2)), [1] * 5)
    with pytest.raises(SingleClassData):
        fit(data, EstimatorKind('diag'))


def test_priors_must_sum_to_one():
    with pytest.raises(ValidationError):
        LdaModel([0.0], [1.0], [[1.0]], math.log(0.5), math.log(0.6))


# ---------- Scoring ----------

def test_score_example():
    model = _model([1.0, 0.0], [-1.0, 0.0], np.eye(2))
    assert score(model, [2.0, 0.0]) == pytest.approx(4.0)
    assert score(model, [0.0, 5.0]) == 0.0


def test_midpoint_scores_zero_with_equal_priors(rng):
    for _ in range(20):
        a = rng.standard_normal((4, 4))
        model = _model(rng.standard_normal(4), rng.standard_normal(4), a + a.T)
        mid = (model.mu_plus + model.mu_minus) / 2.0
        assert abs(score(model, mid)) <= 1e-12 * (1.0 + np.abs(a).sum() * 10)


def test_score_matches_term_by_term(rng):
    for _ in range(20):
        p = int(rng.integers(1, 6))
        mu_plus, mu_minus, x = rng.standard_normal(p), rng.standard_normal(p), rng.standard_normal(p)
        precision = random_spd(p, rng)
        pi_plus = float(rng.uniform(0.1, 0.9))
        model = _model(mu_plus, mu_minus, precision, pi_plus)

        def delta(mu, prior):
            return sum(x[i] * precision[i, j] * mu[j] for i in range(p) for j in range(p)) \
                - 0.5 * sum(mu[i] * precision[i, j] * mu[j] for i in range(p) for j in range(p)) \
                + math.log(prior)

        expected = delta(mu_plus, pi_plus) - delta(mu_minus, 1.0 - pi_plus)
        assert score(model, x) == pytest.approx(expected, rel=1e-10, abs=1e-12)


def test_batch_scores_match_single(rng):
    model = _model(rng.standard_normal(3), rng.standard_normal(3), random_spd(3, rng), 0.3)
    x = rng.standard_normal((7, 3))
    batch = score(model, x)
    assert batch.shape == (7,)
    assert np.allclose(batch, [score(model, row) for row in x])


def test_score_dimension_check():
    model = _model([1.0, 0.0], [-1.0, 0.0], np.eye(2))
    with pytest.raises(DimensionMismatch):
        score(model, [1.0, 2.0, 3.0])


# ---------- Prediction ----------

def test_predict_means_and_tie():
    model = _model([1.0, 0.0], [-1.0, 0.0], np.eye(2))
    assert predict(model, [1.0, 0.0]) == 1
    assert predict(model, [-1.0, 0.0]) == -1
    assert predict(model, [0.0, 0.0]) == 1
    assert predict(model, np.array([[3.0, 1.0], [-3.0, 1.0]])).tolist() == [1, -1]


def test_predict_invariant_to_precision_scaling(rng):
    model = _model(rng.standard_normal(4), rng.standard_normal(4), random_spd(4, rng))
    x = rng.standard_normal((50, 4))
    base = predict(model, x)
    for c in (0.1, 10.0):
        scaled = _model(model.mu_plus, model.mu_minus, c * model.precision)
        assert np.array_equal(predict(scaled, x), base)


def test_swapping_labels_negates_score(rng):
    mu_plus, mu_minus = rng.standard_normal(3), rng.standard_normal(3)
    precision = random_spd(3, rng)
    model = _model(mu_plus, mu_minus, precision, 0.3)
    swapped = LdaModel(mu_minus, mu_plus, precision, model.log_prior_minus, model.log_prior_plus)
    x = rng.standard_normal((10, 3))
    assert np.array_equal(score(swapped, x), -score(model, x))


def test_true_parameters_reach_bayes_error():
    precision = make_precision_truth(SparsePrecisionSpec(p=4, bandwidth=1))
    truth = make_gaussian_pair(precision, separation=0.8)
    model = _model(truth.mu_plus, truth.mu_minus, truth.precision)
    n = 50_000
    test = draw_labeled(truth, n, n, seed=5)
    error = float(np.mean(predict(model, test.features) != test.labels))
    bayes = truth.bayes_error()
    assert bayes == pytest.approx(0.5 * math.erfc(truth.mahalanobis / (2.0 * math.sqrt(2.0))))
    assert abs(error - bayes) <= 3.0 * math.sqrt(bayes * (1.0 - bayes) / (2 * n))


# ---------- Persistence ----------

def test_model_round_trip(tmp_path, rng):
    data = LabeledDataset(rng.standard_normal((24, 5)), [1, -1] * 12)
    model = fit(data, EstimatorKind('shrinkage', 0.5))
    path = tmp_path / "model.json"
    save_model(path, model)
    loaded = load_model(path)
    x = rng.standard_normal((30, 5))
    assert np.array_equal(score(loaded, x), score(model, x))
    assert loaded.kind == 'shrinkage:0.5'
    assert loaded.n_train == 24


def test_load_rejects_malformed(tmp_path):
    path = tmp_path / "model.json"
    path.write_text('{"p": 2, "precision": [1, 0, 0]}')
    with pytest.raises(ValidationError):
        load_model(path)
