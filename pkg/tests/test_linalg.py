import numpy as np
import pytest

from convgp.errors import NotPositiveDefinite
from convgp.linalg import (
    JITTER_MAX,
    JITTER_START,
    chol_inverse,
    chol_logdet,
    chol_solve,
    jitter_cholesky,
    jitter_vjp,
    tri_solve,
)


def spd(rng, n):
    A = rng.normal(size=(n, n))
    return A @ A.T + n * np.eye(n)


def test_always_adds_the_starting_jitter(rng):
    K = spd(rng, 5)
    L, c = jitter_cholesky(K)
    assert c == JITTER_START
    np.testing.assert_allclose(L @ L.T, K + c * np.mean(np.diag(K)) * np.eye(5), rtol=1e-13)


def test_noise_matrices_try_plain_factor_first(rng):
    K = spd(rng, 4)
    L, c = jitter_cholesky(K, always=False)
    assert c == 0.0
    np.testing.assert_allclose(L @ L.T, K, rtol=1e-13)


def test_escalates_on_rank_deficiency():
    v = np.array([1.0, 2.0, 3.0])
    K = np.outer(v, v)
    L, c = jitter_cholesky(K)
    assert JITTER_START <= c <= JITTER_MAX
    assert np.all(np.isfinite(L))


def test_gives_up_on_indefinite_matrix():
    with pytest.raises(NotPositiveDefinite):
        jitter_cholesky(np.diag([1.0, -1.0]))


def test_zero_matrix_uses_absolute_jitter():
    L, c = jitter_cholesky(np.zeros((2, 2)))
    assert c == 0.0
    np.testing.assert_allclose(L @ L.T, JITTER_START * np.eye(2))


def test_solves_and_inverse(rng):
    K = spd(rng, 6)
    L = np.linalg.cholesky(K)
    B = rng.normal(size=(6, 2))
    np.testing.assert_allclose(chol_solve(L, B), np.linalg.solve(K, B), rtol=1e-10)
    np.testing.assert_allclose(chol_inverse(L), np.linalg.inv(K), rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(tri_solve(L, B), np.linalg.solve(L, B), rtol=1e-10)
    np.testing.assert_allclose(tri_solve(L, B, trans=True), np.linalg.solve(L.T, B), rtol=1e-10)
    np.testing.assert_allclose(chol_logdet(L), np.linalg.slogdet(K)[1], rtol=1e-12)
    assert chol_inverse(np.zeros((0, 0))).shape == (0, 0)


def test_jitter_vjp_matches_finite_differences(rng):
    K = spd(rng, 4)
    G = rng.normal(size=(4, 4))
    G = G + G.T
    c = 1e-3

    def f(K):
        Kj = K + c * np.mean(np.diag(K)) * np.eye(4)
        return np.sum(G * Kj)

    H = jitter_vjp(G, c)
    E = np.zeros((4, 4))
    E[1, 1] = 1.0
    h = 1e-6
    np.testing.assert_allclose((f(K + h * E) - f(K - h * E)) / (2 * h), H[1, 1], rtol=1e-7)
    np.testing.assert_array_equal(jitter_vjp(G, 0.0), G)
