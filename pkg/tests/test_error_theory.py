import math

import numpy as np
import pytest

from conftest import random_spd
from error_theory import (
    GaussianPair,
    bound_result1,
    bound_result3,
    expected_error_general,
    expected_error_reduced,
    max_vector_support,
    std_normal_cdf,
)
from errors import DegenerateDirection, DimensionMismatch, ValidationError
from estimators import covariance_of, mean_vector
from eval_harness import monte_carlo_error, random_truth
from matrix_core import invert_spd, pseudo_inverse
from synth import SparsePrecisionSpec, draw_labeled, make_precision_truth

PHI_MINUS_ONE = 0.15865525393145707


# ---------- Normal CDF ----------

def test_std_normal_cdf_values():
    assert std_normal_cdf(0.0) == 0.5
    assert std_normal_cdf(-1.0) == pytest.approx(PHI_MINUS_ONE, abs=1e-10)


def test_std_normal_cdf_symmetry(rng):
    for z in rng.normal(0.0, 3.0, 200):
        assert std_normal_cdf(z) + std_normal_cdf(-z) == pytest.approx(1.0, abs=1e-15)


# ---------- Expected error ----------

def test_general_error_example():
    truth = GaussianPair([1.0, 0.0], [-1.0, 0.0], np.eye(2))
    assert expected_error_general(truth, [1.0, 0.0], [-1.0, 0.0], np.eye(2)) == pytest.approx(PHI_MINUS_ONE, abs=1e-12)


def test_general_error_near_coincident_means():
    truth = GaussianPair([1.0, 0.0], [-1.0, 0.0], np.eye(2))
    error = expected_error_general(truth, [0.0, 1e-9], [0.0, -1e-9], np.eye(2))
    assert error == pytest.approx(0.5, abs=1e-12)


def test_exact_parameters_give_bayes_error(rng):
    for _ in range(20):
        p = int(rng.integers(1, 8))
        sigma = random_spd(p, rng)
        mu_plus, mu_minus = rng.standard_normal(p), rng.standard_normal(p)
        truth = GaussianPair(mu_plus, mu_minus, sigma)
        delta = mu_plus - mu_minus
        expected = std_normal_cdf(-math.sqrt(delta @ invert_spd(sigma) @ delta) / 2.0)
        general = expected_error_general(truth, mu_plus, mu_minus, invert_spd(sigma))
        reduced = expected_error_reduced(mu_plus, mu_minus, sigma, invert_spd(sigma))
        assert general == pytest.approx(expected, abs=1e-12)
        assert reduced == pytest.approx(expected, abs=1e-12)
        assert truth.bayes_error() == pytest.approx(expected, abs=1e-12)


def test_reduced_form_is_general_form_at_true_means(rng):
    for _ in range(20):
        p = int(rng.integers(2, 7))
        sigma = random_spd(p, rng)
        mu_plus, mu_minus = rng.standard_normal(p), rng.standard_normal(p)
        a = rng.standard_normal((p, p))
        precision_hat = random_spd(p, rng) + 0.1 * (a + a.T)
        truth = GaussianPair(mu_plus, mu_minus, sigma)
        general = expected_error_general(truth, mu_plus, mu_minus, precision_hat)
        reduced = expected_error_reduced(mu_plus, mu_minus, sigma, precision_hat)
        assert general == pytest.approx(reduced, abs=1e-12)


def test_reduced_form_is_scale_invariant(rng):
    sigma = random_spd(4, rng)
    mu_plus, mu_minus = rng.standard_normal(4), rng.standard_normal(4)
    precision_hat = random_spd(4, rng)
    base = expected_error_reduced(mu_plus, mu_minus, sigma, precision_hat)
    for c in (1e-3, 7.0, 1e4):
        assert expected_error_reduced(mu_plus, mu_minus, sigma, c * precision_hat) == pytest.approx(base, rel=1e-12)


def test_degenerate_direction_raises():
    truth = GaussianPair([1.0, 0.0], [-1.0, 0.0], np.eye(2))
    with pytest.raises(DegenerateDirection):
        expected_error_general(truth, [1.0, 0.0], [-1.0, 0.0], np.zeros((2, 2)))
    with pytest.raises(DegenerateDirection):
        expected_error_reduced([1.0, 0.0], [1.0, 0.0], np.eye(2), np.eye(2))


def test_dimension_check():
    truth = GaussianPair([1.0, 0.0], [-1.0, 0.0], np.eye(2))
    with pytest.raises(DimensionMismatch):
        expected_error_general(truth, [1.0], [-1.0], np.eye(1))


def test_general_form_against_monte_carlo():
    precision = make_precision_truth(SparsePrecisionSpec(p=5, bandwidth=1, offdiag_strength=0.4))
    rng = np.random.default_rng(99)
    truths = [GaussianPair([0.5] * 5, [-0.5] * 5, invert_spd(precision))]
    truths += [random_truth(5, rng, separation=1.0 + 0.5 * k) for k in range(4)]
    n = 200_000
    for config, truth in enumerate(truths):
        train = draw_labeled(truth, 10, 10, seed=100 + config)
        mu_plus = mean_vector(train.samples_of(1))
        mu_minus = mean_vector(train.samples_of(-1))
        precision_hat = pseudo_inverse(covariance_of(train.features))
        exact = expected_error_general(truth, mu_plus, mu_minus, precision_hat)
        empirical = monte_carlo_error(truth, mu_plus, mu_minus, precision_hat, n, seed=200 + config)
        assert abs(empirical - exact) <= 3.0 * math.sqrt(exact * (1.0 - exact) / n)


# ---------- Bounds ----------

def test_result1_examples():
    assert bound_result1([1.0], [-1.0], [[1.0]], [[1.0]]) == pytest.approx(PHI_MINUS_ONE, abs=1e-12)
    two_d = bound_result1([1.0, 0.0], [-1.0, 0.0], np.eye(2), np.eye(2))
    assert two_d == pytest.approx(std_normal_cdf(-2.0 ** 0.25), abs=1e-12)
    assert bound_result1([0.3, 0.3], [0.3, 0.3], np.eye(2), np.eye(2)) == 0.5


def test_bounds_decrease_with_separation(rng):
    sigma = random_spd(3, rng)
    precision_hat = random_spd(3, rng)
    direction = rng.standard_normal(3)
    values1 = [bound_result1(s * direction, np.zeros(3), precision_hat, sigma) for s in (0.1, 0.5, 1.0, 2.0)]
    values3 = [bound_result3(s * direction, np.zeros(3), precision_hat, 100) for s in (0.1, 0.5, 1.0, 2.0)]
    assert values1 == sorted(values1, reverse=True)
    assert values3 == sorted(values3, reverse=True)


def test_result3_with_zero_rate_constant(rng):
    sigma = random_spd(4, rng)
    mu_plus, mu_minus = rng.standard_normal(4), rng.standard_normal(4)
    exact_precision = invert_spd(sigma)
    b1 = bound_result1(mu_plus, mu_minus, exact_precision, sigma)
    b3 = bound_result3(mu_plus, mu_minus, exact_precision, 50, c_rate=0.0)
    assert b3 == pytest.approx(b1, abs=1e-12)


def test_result3_monotone_in_rate_constant_and_m(rng):
    t_hat = random_spd(10, rng)
    mu_plus, mu_minus = rng.standard_normal(10) * 0.2, np.zeros(10)
    by_c = [bound_result3(mu_plus, mu_minus, t_hat, 100, c_rate=c) for c in (0.0, 0.5, 1.0, 2.0)]
    assert by_c == sorted(by_c, reverse=True)
    by_m = [bound_result3(mu_plus, mu_minus, t_hat, m, c_rate=1.0) for m in (50, 100, 200)]
    assert by_m == sorted(by_m)
    assert by_m[-1] < bound_result3(mu_plus, mu_minus, t_hat, 200, c_rate=0.0)


def test_result3_validates():
    with pytest.raises(ValidationError):
        bound_result3([1.0, 0.0], [0.0, 0.0], np.eye(2), 1)
    with pytest.raises(ValidationError):
        bound_result3([1.0, 0.0], [0.0, 0.0], np.eye(2), 10, c_rate=-1.0)


# ---------- Support ----------

def test_max_vector_support_examples():
    assert max_vector_support(np.eye(4)) == 1
    tri = np.eye(5) + np.diag([0.3] * 4, 1) + np.diag([0.3] * 4, -1)
    assert max_vector_support(tri) == 3
    assert max_vector_support(np.ones((6, 6))) == 6


def test_max_vector_support_of_banded_truth():
    for bandwidth in (0, 1, 2, 3):
        theta = make_precision_truth(SparsePrecisionSpec(p=12, bandwidth=bandwidth))
        assert max_vector_support(theta) == 2 * bandwidth + 1
