#! /usr/bin/env python3
# -*- coding: utf-8 -*-
"""
test_linalg.py: Test dense linear algebra helpers.
"""

import numpy as np
import pytest

from online_predictor.exceptions import RankDeficient, SingularMatrix
from online_predictor.linalg import (
    as_matrix,
    gaussian_sample,
    is_psd,
    make_rngs,
    min_eigenvalue,
    minimal_polynomial,
    numerical_rank,
    pseudo_inverse_tall,
    psd_cholesky,
    scaled_matrix_power,
    solve_linear,
    spd_inverse,
    spectral_norm,
    spectral_radius_gelfand,
)

JORDAN = np.array([[1.0, 1.0], [0.0, 1.0]])


def rotation(theta):
    return np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])


def annihilates(polynomial, A, tol=1e-8):
    bound = tol * max(1.0, np.linalg.norm(A) ** polynomial.degree)
    return np.linalg.norm(polynomial.evaluate(A)) <= bound


def test_solve_linear():
    print("==== testing linear solves ====")
    A = np.array([[2.0, 1.0], [1.0, 3.0]])
    B = np.array([[1.0, 0.0], [2.0, 1.0]])
    for assume_spd in [False, True]:
        X = solve_linear(A, B, assume_spd=assume_spd)
        np.testing.assert_allclose(A @ X, B, atol=1e-12)

    with pytest.raises(SingularMatrix):
        solve_linear([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0])
    with pytest.raises(SingularMatrix):
        solve_linear([[1.0, 2.0], [2.0, 1.0]], [1.0, 1.0], assume_spd=True)
    with pytest.raises(SingularMatrix):
        solve_linear(np.zeros((2, 2)), [1.0, 1.0])


def test_solve_linear_random():
    print("==== testing random linear solves ====")
    rng = np.random.default_rng(0)
    for trial in range(100):
        n = int(rng.integers(1, 9))
        A = rng.standard_normal((n, n)) + 2 * n * np.eye(n)
        B = rng.standard_normal((n, int(rng.integers(1, 4))))
        assume_spd = bool(trial % 2)
        if assume_spd:
            A = A @ A.T
        X = solve_linear(A, B, assume_spd=assume_spd)
        bound = 1e-10 * (np.linalg.norm(A) * np.linalg.norm(X) + np.linalg.norm(B))
        assert np.linalg.norm(A @ X - B) <= bound

    A = rng.standard_normal((8, 8)) + 8 * np.eye(8)
    X_0 = rng.standard_normal((8, 3))
    np.testing.assert_allclose(solve_linear(A, A @ X_0), X_0, atol=1e-9)

    x = solve_linear(np.diag([2.0, 4.0]), [1.0, 1.0])
    np.testing.assert_allclose(np.ravel(x), [0.5, 0.25])


def test_spd_inverse():
    print("==== testing inverse and log-determinant ====")
    M = np.array([[4.0, 2.0], [2.0, 3.0]])
    inverse, logdet = spd_inverse(M)
    np.testing.assert_allclose(inverse @ M, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(inverse, inverse.T)
    assert logdet == pytest.approx(np.log(8.0))
    with pytest.raises(SingularMatrix):
        spd_inverse([[1.0, 0.0], [0.0, -1.0]])


def test_norms_and_rank():
    print("==== testing norms and rank ====")
    assert spectral_norm(np.diag([3.0, -4.0])) == pytest.approx(4.0)
    assert spectral_norm(np.eye(4)) == pytest.approx(1.0)
    assert spectral_norm([[0.0, 1.0], [0.0, 0.0]]) == pytest.approx(1.0)
    rng = np.random.default_rng(1)
    for shape in [(3, 3), (2, 5), (6, 4)]:
        M = rng.standard_normal(shape)
        assert abs(spectral_norm(M) - spectral_norm(M.T)) <= 1e-9
    assert numerical_rank([[1.0, 2.0], [2.0, 4.0]]) == 1
    assert numerical_rank(np.eye(3)) == 3
    assert numerical_rank(np.zeros((2, 2))) == 0
    assert min_eigenvalue([[2.0, 1.0], [1.0, 2.0]]) == pytest.approx(1.0)
    assert as_matrix(2.0).shape == (1, 1)
    assert as_matrix([1.0, 2.0]).shape == (2, 1)


def test_scaled_matrix_power():
    print("==== testing scaled matrix powers ====")
    B, log_scale = scaled_matrix_power(2 * np.eye(2), 10)
    np.testing.assert_allclose(np.exp(log_scale) * B, 1024 * np.eye(2))

    # 1e640 overflows a float, the scaled representation does not
    B, log_scale = scaled_matrix_power(1e10 * np.eye(2), 64)
    assert np.all(np.isfinite(B))
    assert log_scale + np.log(B[0, 0]) == pytest.approx(640 * np.log(10))


def test_spectral_radius():
    print("==== testing Gelfand spectral radius ====")
    assert spectral_radius_gelfand([[0.5]]) == pytest.approx(0.5, rel=1e-10)
    assert spectral_radius_gelfand(0.9 * rotation(0.3)) == pytest.approx(0.9, rel=1e-10)
    assert spectral_radius_gelfand(rotation(0.7)) == pytest.approx(1.0, abs=1e-9)
    assert spectral_radius_gelfand(np.zeros((2, 2))) == 0.0

    # upper-biased for Jordan blocks: (1 + 512)^(1/512)
    estimate = spectral_radius_gelfand(JORDAN)
    assert 1.0 < estimate < 1.05


def test_minimal_polynomial():
    print("==== testing minimal polynomials ====")
    scaled_identity = minimal_polynomial(2 * np.eye(3))
    assert scaled_identity.degree == 1
    np.testing.assert_allclose(scaled_identity.coefficients, [2.0])

    # A^2 = -2 I + 3 A
    diagonal = minimal_polynomial(np.diag([1.0, 2.0]))
    assert diagonal.degree == 2
    np.testing.assert_allclose(diagonal.coefficients, [-2.0, 3.0], atol=1e-10)

    jordan = minimal_polynomial(JORDAN)
    assert jordan.degree == 2
    np.testing.assert_allclose(jordan.coefficients, [-1.0, 2.0], atol=1e-10)
    assert jordan.l1_norm == pytest.approx(4.0)
    assert jordan.l2_norm == pytest.approx(np.sqrt(6.0))

    A = np.array([[0.6, 0.3, 0.0], [0.0, -0.5, 1.0], [0.2, 0.0, 0.1]])
    polynomial = minimal_polynomial(A)
    assert polynomial.degree == 3
    np.testing.assert_allclose(polynomial.evaluate(A), 0, atol=1e-10)
    assert annihilates(polynomial, A)

    repeated = minimal_polynomial(np.diag([0.5, 0.5, 0.9]))
    assert repeated.degree == 2
    np.testing.assert_allclose(repeated.coefficients, [-0.45, 1.4], atol=1e-10)

    nilpotent = minimal_polynomial([[0.0, 1.0], [0.0, 0.0]])
    assert nilpotent.degree == 2
    np.testing.assert_allclose(nilpotent.coefficients, [0.0, 0.0], atol=1e-12)

    identity = minimal_polynomial(np.eye(2))
    assert identity.degree == 1
    np.testing.assert_allclose(identity.coefficients, [1.0])


def test_minimal_polynomial_degree():
    print("==== testing minimal polynomial degrees ====")
    rng = np.random.default_rng(2)
    for n in range(1, 7):
        S, __ = np.linalg.qr(rng.standard_normal((n, n)))
        for distinct in range(1, n + 1):
            values = np.linspace(-0.8, 0.9, distinct)
            A = S @ np.diag(values[np.arange(n) % distinct]) @ S.T
            polynomial = minimal_polynomial(A)
            assert polynomial.degree == distinct
            assert annihilates(polynomial, A)

        shift = np.eye(n, k=1)
        polynomial = minimal_polynomial(shift)
        assert polynomial.degree == n
        np.testing.assert_allclose(polynomial.coefficients, np.zeros(n), atol=1e-12)

        A = rng.standard_normal((n, n))
        polynomial = minimal_polynomial(A)
        assert polynomial.degree == n
        assert annihilates(polynomial, A)


def test_rngs():
    print("==== testing seeded generators ====")
    first = [rng.standard_normal(3) for rng in make_rngs(7, 3)]
    second = [rng.standard_normal(3) for rng in make_rngs(7, 3)]
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a, b)
    assert not np.allclose(first[0], first[1])

    L = np.array([[1.0, 0.0], [0.5, 2.0]])
    mean = np.array([1.0, -1.0])
    batch = gaussian_sample(mean, L, make_rngs(3, 1)[0], size=5)
    rng = make_rngs(3, 1)[0]
    singles = np.array([gaussian_sample(mean, L, rng) for __ in range(5)])
    np.testing.assert_allclose(batch, singles)


def test_gaussian_sample_moments():
    print("==== testing gaussian sample moments ====")
    n = 100000
    mean = np.array([1.0, -2.0, 0.5])
    samples = gaussian_sample(mean, np.eye(3), make_rngs(11, 1)[0], size=n)
    assert samples.shape == (n, 3)
    assert np.all(np.abs(samples.mean(axis=0) - mean) <= 4 / np.sqrt(n))
    covariance = np.cov(samples, rowvar=False)
    assert np.all(np.abs(covariance - np.eye(3)) <= 0.05)

    rng = make_rngs(11, 1)[0]
    np.testing.assert_array_equal(gaussian_sample(mean, np.zeros((3, 3)), rng), mean)


def test_pseudo_inverse_and_psd():
    print("==== testing pseudo-inverse and PSD helpers ====")
    M = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    np.testing.assert_allclose(pseudo_inverse_tall(M) @ M, np.eye(2), atol=1e-12)
    with pytest.raises(RankDeficient):
        pseudo_inverse_tall([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])

    singular = np.ones((2, 2))
    assert is_psd(singular)
    assert not is_psd(singular, strict=True)
    assert not is_psd([[1.0, 2.0], [0.0, 1.0]])
    L = psd_cholesky(singular)
    np.testing.assert_allclose(L @ L.T, singular, atol=1e-6)


if __name__ == "__main__":
    test_solve_linear()
    test_solve_linear_random()
    test_spd_inverse()
    test_norms_and_rank()
    test_scaled_matrix_power()
    test_spectral_radius()
    test_minimal_polynomial()
    test_minimal_polynomial_degree()
    test_rngs()
    test_gaussian_sample_moments()
    test_pseudo_inverse_and_psd()
    print("done")
