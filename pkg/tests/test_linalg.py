import numpy as np
import pytest

from nmc import linalg
from nmc.errors import NotPositiveDefinite, SingularMatrix


def test_eig_diagonal():
    lam, V = linalg.eig_sym(np.diag([2.0, 5.0]))
    np.testing.assert_allclose(lam, [2.0, 5.0])
    np.testing.assert_allclose(np.abs(V), np.eye(2))


def test_eig_exchange():
    lam, _ = linalg.eig_sym(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(lam, [-1.0, 1.0])


def test_eig_reconstructs(rng):
    A = rng.normal(size=(5, 5))
    M = A + A.T
    lam, V = linalg.eig_sym(M)
    assert np.max(np.abs(V @ np.diag(lam) @ V.T - M)) <= 1e-8 * np.max(np.abs(M))
    assert np.max(np.abs(V.T @ V - np.eye(5))) <= 1e-8
    assert np.all(np.diff(lam) >= 0)


def test_as_symmetric_rejects_asymmetric():
    with pytest.raises(ValueError):
        linalg.as_symmetric(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_repair_diagonal():
    out = linalg.repair_psd(np.diag([1.0, -2.0]), 1e-6)
    np.testing.assert_allclose(out, np.diag([1.0, 1e-6]), atol=1e-15)


def test_repair_identity_on_psd():
    M = np.array([[2.0, 1.0], [1.0, 2.0]])
    assert np.array_equal(linalg.repair_psd(M, 1e-6), M)


def test_repair_random_indefinite(rng):
    A = rng.normal(size=(4, 4))
    M = A + A.T - 2 * np.eye(4)
    out = linalg.repair_psd(M, 1e-6)
    assert np.linalg.eigvalsh(out).min() >= 1e-6 * (1 - 1e-6)
    assert np.array_equal(linalg.repair_psd(out, 1e-6), out)


def test_default_floor():
    assert linalg.default_floor(np.diag([0.5, -0.1])) == 1e-8
    assert linalg.default_floor(np.diag([1e4, 1.0])) == pytest.approx(1e-4)


def test_solve_scalar_matrix():
    np.testing.assert_allclose(linalg.solve(2 * np.eye(3), [2.0, 4.0, 6.0]), [1.0, 2.0, 3.0])


def test_solve_residual():
    M, b = np.array([[4.0, 1.0], [1.0, 3.0]]), np.array([1.0, 2.0])
    x = linalg.solve(M, b)
    assert np.linalg.norm(M @ x - b) <= 1e-8 * np.linalg.norm(b)


def test_solve_singular():
    with pytest.raises(SingularMatrix):
        linalg.solve(np.ones((2, 2)), [1.0, 1.0])


def test_cholesky():
    np.testing.assert_array_equal(linalg.cholesky(np.eye(3)), np.eye(3))
    M = np.array([[4.0, 2.0], [2.0, 5.0]])
    L = linalg.cholesky(M)
    np.testing.assert_allclose(L @ L.T, M, rtol=1e-8)
    assert L[0, 1] == 0.0
    with pytest.raises(NotPositiveDefinite):
        linalg.cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_cho_solve_matches_solve(rng):
    A = rng.normal(size=(4, 4))
    M = A @ A.T + np.eye(4)
    b = rng.normal(size=4)
    np.testing.assert_allclose(linalg.cho_solve(linalg.cholesky(M), b), linalg.solve(M, b), rtol=1e-8)
