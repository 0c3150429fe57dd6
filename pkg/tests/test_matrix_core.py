import math

import numpy as np
import pytest

from conftest import random_spd
from errors import DimensionMismatch, NotPositiveDefinite, ValidationError
from matrix_core import (
    as_symmetric,
    cholesky,
    identity,
    invert_spd,
    is_positive_definite,
    log_det_spd,
    norms,
    pseudo_inverse,
    read_matrix_text,
    write_matrix_text,
)


# ---------- Construction ----------

def test_as_symmetric_averages_and_freezes():
    sym = as_symmetric([[1.0, 2.0], [4.0, 1.0]])
    assert np.array_equal(sym, [[1.0, 3.0], [3.0, 1.0]])
    assert not sym.flags.writeable


def test_as_symmetric_rejects_bad_input():
    with pytest.raises(DimensionMismatch):
        as_symmetric(np.zeros((2, 3)))
    with pytest.raises(ValidationError):
        as_symmetric([[1.0, np.nan], [np.nan, 1.0]])


# ---------- Cholesky ----------

def test_cholesky_of_identity():
    assert np.array_equal(cholesky(identity(4)), np.eye(4))


def test_cholesky_small_example():
    factor = cholesky(as_symmetric([[4.0, 2.0], [2.0, 3.0]]))
    assert np.allclose(factor, [[2.0, 0.0], [1.0, math.sqrt(2.0)]], atol=1e-14)


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        cholesky(as_symmetric([[1.0, 2.0], [2.0, 1.0]]))


def test_cholesky_rejects_singular():
    assert not is_positive_definite(as_symmetric(np.ones((3, 3))))


def test_cholesky_reconstructs_moderately_conditioned(rng):
    for _ in range(10):
        q, _ = np.linalg.qr(rng.standard_normal((12, 12)))
        a = as_symmetric((q * np.logspace(0, -5, 12)) @ q.T)
        factor = cholesky(a)
        assert np.allclose(np.triu(factor, 1), 0.0)
        residual = np.linalg.norm(factor @ factor.T - a) / np.linalg.norm(a)
        assert residual <= 1e-10


# ---------- Inversion ----------

def test_invert_spd_examples():
    assert np.array_equal(invert_spd(identity(3)), np.eye(3))
    assert np.allclose(invert_spd(as_symmetric(np.diag([2.0, 4.0]))), np.diag([0.5, 0.25]), atol=1e-15)


def test_invert_spd_residual(rng):
    for p in (2, 8, 20):
        a = as_symmetric(random_spd(p, rng))
        residual = np.linalg.norm(a @ invert_spd(a) - np.eye(p))
        assert residual <= 1e-8


def test_log_det_matches_numpy(rng):
    a = as_symmetric(random_spd(6, rng))
    assert log_det_spd(a) == pytest.approx(np.linalg.slogdet(a)[1], rel=1e-12)


def test_pseudo_inverse_equals_inverse_when_full_rank(rng):
    a = as_symmetric(random_spd(7, rng))
    assert np.allclose(pseudo_inverse(a), invert_spd(a), atol=1e-7)


def test_pseudo_inverse_of_rank_one_projector():
    u = np.array([1.0, 1.0]) / math.sqrt(2.0)
    proj = as_symmetric(np.outer(u, u))
    assert np.allclose(pseudo_inverse(proj), proj, atol=1e-12)


def test_pseudo_inverse_of_singular_sample_covariance(rng):
    x = rng.standard_normal((5, 10))
    x -= x.mean(axis=0)
    a = as_symmetric(x.T @ x / 5)
    pinv = pseudo_inverse(a)
    assert np.allclose(a @ pinv @ a, a, atol=1e-7)
    assert np.allclose(pinv @ a @ pinv, pinv, atol=1e-7)
    assert np.allclose(pinv, pinv.T)


def test_pseudo_inverse_of_zero_matrix():
    assert np.array_equal(pseudo_inverse(np.zeros((3, 3))), np.zeros((3, 3)))


# ---------- Norms ----------

def test_norms_of_identity():
    n = norms(identity(3))
    assert n.frobenius == pytest.approx(math.sqrt(3.0))
    assert (n.entrywise_l1, n.entrywise_max, n.induced_inf) == (3.0, 1.0, 1.0)


def test_norms_small_example():
    n = norms([[1.0, -2.0], [-2.0, 1.0]])
    assert n.frobenius == pytest.approx(math.sqrt(10.0))
    assert (n.entrywise_l1, n.entrywise_max, n.induced_inf) == (6.0, 2.0, 3.0)


def test_norm_chain_holds_on_random_matrices(rng):
    for _ in range(1000):
        p = int(rng.integers(1, 21))
        a = rng.standard_normal((p, p)) * rng.uniform(0.01, 100.0)
        n = norms(a)
        slack = 1e-12 * n.entrywise_l1
        assert n.entrywise_max <= n.frobenius + slack
        assert n.frobenius <= n.entrywise_l1 + slack
        assert n.entrywise_max <= n.induced_inf + slack
        assert n.induced_inf <= n.entrywise_l1 + slack
        assert n.frobenius <= p * n.induced_inf + slack


# ---------- Text format ----------

def test_matrix_text_round_trip_is_exact(tmp_path, rng):
    a = as_symmetric(random_spd(9, rng) * 1e-3)
    path = tmp_path / "a.txt"
    write_matrix_text(path, a)
    assert path.read_text().splitlines()[0] == "9"
    assert np.array_equal(read_matrix_text(path), a)


def test_read_matrix_text_checks_shape(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("3\n1 0 0\n0 1 0\n")
    with pytest.raises(DimensionMismatch):
        read_matrix_text(path)
