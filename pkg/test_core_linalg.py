#!/usr/bin/env python3
"""
Tests for the dense linear-algebra kernels
"""
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose

from utils.core_linalg import (
    as_sym_matrix,
    cholesky_with_jitter,
    ledoit_wolf,
    solve_spd,
    sym_eig_extremes,
)
from utils.errors import ConvergenceFailure, DimensionMismatch, InsufficientSamples, NotPositiveDefinite


def test_cholesky_identity_needs_no_jitter():
    factor = cholesky_with_jitter(np.eye(3), 1e-10)
    assert factor.jitter_used == 0.0
    assert_allclose(factor.lower, np.eye(3))


def test_cholesky_two_by_two_by_hand():
    factor = cholesky_with_jitter(np.array([[4.0, 2.0], [2.0, 3.0]]))
    assert factor.jitter_used == 0.0
    assert_allclose(factor.lower, [[2.0, 0.0], [1.0, np.sqrt(2.0)]], atol=1e-14)


def test_cholesky_rank_one_escalates():
    m = np.ones((2, 2))
    factor = cholesky_with_jitter(m, 1e-8)
    assert factor.jitter_used > 0
    recon = factor.lower @ factor.lower.T
    assert np.max(np.abs(recon - (m + factor.jitter_used * np.eye(2)))) <= 1e-10


def test_cholesky_negative_definite_raises():
    with pytest.raises(NotPositiveDefinite):
        cholesky_with_jitter(-np.eye(3), 1e-10)


def test_asymmetric_input_rejected():
    with pytest.raises(DimensionMismatch):
        as_sym_matrix(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(DimensionMismatch):
        cholesky_with_jitter(np.ones((2, 3)))


def test_eig_extremes():
    lo, hi = sym_eig_extremes(np.array([[1.0, 0.6], [0.6, 1.0]]))
    assert lo == pytest.approx(0.4, abs=1e-12)
    assert hi == pytest.approx(1.6, abs=1e-12)


def test_solve_spd_cases():
    rng = np.random.default_rng(0)
    b = rng.standard_normal((4, 2))
    assert_allclose(solve_spd(np.eye(4), b), b)
    assert_allclose(solve_spd(np.diag([2.0, 4.0]), np.array([[2.0], [8.0]])), [[1.0], [2.0]])

    a = rng.standard_normal((5, 5))
    m = a @ a.T + 5 * np.eye(5)
    v = rng.standard_normal(5)
    assert_allclose(solve_spd(m, m @ v), v, atol=1e-8)


def test_solve_spd_rhs_mismatch():
    with pytest.raises(DimensionMismatch):
        solve_spd(np.eye(3), np.ones(4))


def test_ledoit_wolf_full_shrinkage_is_scaled_identity():
    rng = np.random.default_rng(1)
    z = rng.standard_normal((200, 4)) * np.array([1.0, 2.0, 3.0, 4.0])
    z -= z.mean(axis=0)
    sigma, alpha = ledoit_wolf(z, extra_shrink=1.0)
    mu = np.trace(z.T @ z / (z.shape[0] - 1)) / 4
    assert alpha == 1.0
    assert_allclose(sigma, mu * np.eye(4), rtol=1e-12)


def test_ledoit_wolf_identity_data():
    rng = np.random.default_rng(2)
    z = rng.standard_normal((10000, 5))
    z -= z.mean(axis=0)
    sigma, _ = ledoit_wolf(z, extra_shrink=0.0)
    assert np.max(np.abs(sigma - np.eye(5))) <= 0.1


def test_ledoit_wolf_scalar_case():
    rng = np.random.default_rng(3)
    z = rng.standard_normal((50, 1)) * 3.0
    z -= z.mean(axis=0)
    sigma, _ = ledoit_wolf(z, extra_shrink=0.3)
    assert sigma[0, 0] == pytest.approx(float(z[:, 0] @ z[:, 0]) / 49, rel=1e-12)


def test_ledoit_wolf_needs_two_rows():
    with pytest.raises(InsufficientSamples):
        ledoit_wolf(np.zeros((1, 3)))

def _char_poly_extremes(m):
    """Extreme real roots of det(m - t I), from the characteristic polynomial"""
    if m.shape[0] == 2:
        tr, det = np.trace(m), np.linalg.det(m)
        disc = np.sqrt(max(tr * tr - 4 * det, 0.0))
        return (tr - disc) / 2, (tr + disc) / 2
    c2 = m[0, 0] * m[1, 1] + m[0, 0] * m[2, 2] + m[1, 1] * m[2, 2] - m[0, 1] ** 2 - m[0, 2] ** 2 - m[1, 2] ** 2
    roots = np.roots([1.0, -np.trace(m), c2, -np.linalg.det(m)]).real
    return roots.min(), roots.max()


@pytest.mark.parametrize("dim", [2, 3])
def test_eig_extremes_match_characteristic_polynomial(dim):
    rng = np.random.default_rng(10 + dim)
    for _ in range(20):
        a = rng.standard_normal((dim, dim))
        m = (a + a.T) / 2
        lo, hi = sym_eig_extremes(m)
        want_lo, want_hi = _char_poly_extremes(m)
        assert lo == pytest.approx(want_lo, abs=1e-6)
        assert hi == pytest.approx(want_hi, abs=1e-6)


def test_eig_extremes_diagonal():
    assert sym_eig_extremes(np.diag([0.1, 2.0, 5.0])) == pytest.approx((0.1, 5.0), abs=1e-14)


def test_eig_extremes_residual_tolerance():
    rng = np.random.default_rng(7)
    a = rng.standard_normal((40, 40))
    m = (a + a.T) / 2
    sym_eig_extremes(m, tol=1e-9)
    with pytest.raises(ConvergenceFailure):
        sym_eig_extremes(m, tol=1e-300)


@pytest.mark.parametrize("dim", [1, 10, 50, 200])
def test_cholesky_reconstructs(dim):
    rng = np.random.default_rng(dim)
    a = rng.standard_normal((dim, dim))
    m = a @ a.T / dim + np.eye(dim)
    factor = cholesky_with_jitter(m)
    assert factor.jitter_used == 0.0
    assert np.max(np.abs(factor.lower @ factor.lower.T - m)) <= 1e-10 * np.max(np.abs(m))
    assert np.allclose(factor.lower, np.tril(factor.lower))


def test_solve_spd_residual_at_high_condition():
    rng = np.random.default_rng(8)
    q, _ = np.linalg.qr(rng.standard_normal((50, 50)))
    m = (q * np.logspace(0, -6, 50)) @ q.T
    m = (m + m.T) / 2
    b = rng.standard_normal(50)
    x = solve_spd(m, b)
    residual = np.linalg.norm(m @ x - b)
    assert residual <= 1e-10 * np.linalg.norm(m, 2) * np.linalg.norm(x)


@pytest.mark.parametrize("n, p", [(200, 10), (20, 50)])
def test_ledoit_wolf_is_positive_semidefinite(n, p):
    rng = np.random.default_rng(n + p)
    z = rng.standard_normal((n, p)) @ rng.standard_normal((p, p))
    z -= z.mean(axis=0)
    sigma, _ = ledoit_wolf(z, extra_shrink=0.0)
    assert_allclose(sigma, sigma.T)
    assert np.linalg.eigvalsh(sigma).min() >= -1e-10



if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
