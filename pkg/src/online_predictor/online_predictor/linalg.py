#! /usr/bin/env python3
# -*- coding: utf-8 -*-

"""
linalg.py: Dense linear algebra helpers: solves, norms, spectral radius estimates,
minimal polynomials and seeded Gaussian sampling.
"""

from dataclasses import dataclass
import warnings

import numpy as np
import scipy.linalg

from .exceptions import (
    AssumptionViolated,
    DimensionMismatch,
    NoConvergence,
    RankDeficient,
    SingularMatrix,
)
from .parameters import (
    GELFAND_K,
    MINPOLY_TOL,
    OVERFLOW_LIMIT,
    PINV_TOL,
    PIVOT_TOL,
    PSD_JITTER,
    PSD_TOL,
    RANK_TOL,
)


@dataclass(frozen=True, eq=False)
class MinimalPolynomial:
    """
    Monic polynomial a(s) = s^d - a_{d-1} s^{d-1} - ... - a_0.

    coefficients holds a_0, ..., a_{d-1}, so that A^d = sum_i a_i A^i.
    """

    degree: int
    coefficients: np.ndarray
    residual: float  # relative residual of the projection at the returned degree

    @property
    def l1_norm(self):
        return 1.0 + float(np.sum(np.abs(self.coefficients)))

    @property
    def l2_norm(self):
        return float(np.sqrt(1.0 + np.sum(np.square(self.coefficients))))

    def evaluate(self, A):
        """ Return the matrix a(A). """
        A = np.asarray(A, dtype=float)
        power = np.eye(A.shape[0])
        value = np.zeros_like(power)
        for coefficient in self.coefficients:
            value -= coefficient * power
            power = power @ A
        return value + power


def as_matrix(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    elif M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2:
        raise DimensionMismatch(f"{name} must be two-dimensional, got shape {M.shape}")
    return M


def solve_linear(A, B, assume_spd=False, pivot_tol=PIVOT_TOL):
    """
    Solve AX = B.

    :param assume_spd: use the Cholesky fast path, for Gram matrices.
    :param pivot_tol: pivots smaller than pivot_tol * ||A||_F are treated as singular.
    """
    A = as_matrix(A, "A")
    B = np.asarray(B, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    if B.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"B has {B.shape[0]} rows, A has {A.shape[0]}")

    scale = np.linalg.norm(A, "fro")
    if scale == 0 or not np.isfinite(scale):
        raise SingularMatrix("matrix is zero or not finite")

    if assume_spd:
        try:
            factor = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
        except np.linalg.LinAlgError as e:
            raise SingularMatrix("Cholesky factorization failed") from e
        if np.min(np.diag(factor[0])) ** 2 < pivot_tol * scale:
            raise SingularMatrix("Cholesky pivot below tolerance")
        X = scipy.linalg.cho_solve(factor, B, check_finite=False)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
        smallest = np.min(np.abs(np.diag(lu)))
        if smallest < pivot_tol * scale:
            raise SingularMatrix(f"pivot {smallest:.2e} below {pivot_tol * scale:.2e}")
        X = scipy.linalg.lu_solve((lu, piv), B, check_finite=False)

    if not np.all(np.isfinite(X)):
        raise SingularMatrix("solution is not finite")
    return X


def _cholesky(M):
    M = as_matrix(M)
    try:
        return scipy.linalg.cho_factor(M, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise SingularMatrix("Cholesky factorization failed") from e


def logdet_spd(M):
    """ ln det(M) of a symmetric positive definite matrix, from its Cholesky factor. """
    factor, __ = _cholesky(M)
    return float(2 * np.sum(np.log(np.diag(factor))))


def spd_inverse(M):
    """
    Inverse and log-determinant of a symmetric positive definite matrix.

    :return: (M^-1, ln det M)
    """
    factor = _cholesky(M)
    inverse = scipy.linalg.cho_solve(factor, np.eye(factor[0].shape[0]))
    logdet = 2 * np.sum(np.log(np.diag(factor[0])))
    return (inverse + inverse.T) / 2, float(logdet)


def spectral_norm(M):
    """ Largest singular value. """
    M = as_matrix(M)
    if M.size == 0:
        raise DimensionMismatch("spectral norm of an empty matrix")
    try:
        return float(np.linalg.norm(M, 2))
    except np.linalg.LinAlgError as e:
        # Frobenius norm is the best available upper bound
        raise NoConvergence(
            "SVD did not converge", estimate=float(np.linalg.norm(M, "fro"))
        ) from e


def numerical_rank(M, tol=RANK_TOL):
    """ Number of singular values above tol times the largest one. """
    M = as_matrix(M)
    if M.size == 0:
        return 0
    try:
        singular_values = np.linalg.svd(M, compute_uv=False)
    except np.linalg.LinAlgError as e:
        raise NoConvergence("SVD did not converge") from e
    if singular_values[0] == 0:
        return 0
    return int(np.sum(singular_values > tol * singular_values[0]))


def min_eigenvalue(M):
    """ Smallest eigenvalue of a symmetric matrix (only the lower triangle is read). """
    M = as_matrix(M)
    try:
        return float(scipy.linalg.eigh(M, eigvals_only=True, subset_by_index=[0, 0])[0])
    except np.linalg.LinAlgError as e:
        raise NoConvergence("symmetric eigenvalue solver did not converge") from e


def _rescale(B, log_scale, limit):
    peak = np.max(np.abs(B))
    if peak > limit or 0 < peak < 1.0 / limit:
        return B / peak, log_scale + np.log(peak)
    return B, log_scale


def scaled_matrix_power(M, k, overflow_limit=OVERFLOW_LIMIT):
    """
    Compute M^k by repeated squaring without overflow.

    :return: (B, log_scale) such that M^k = exp(log_scale) * B.
    """
    M = as_matrix(M)
    result = np.eye(M.shape[0])
    result_log = 0.0
    base = M.copy()
    base_log = 0.0
    while k > 0:
        if k & 1:
            result = result @ base
            result, result_log = _rescale(result, result_log + base_log, overflow_limit)
        k >>= 1
        if k:
            base, base_log = _rescale(base @ base, 2 * base_log, overflow_limit)
    return result, result_log


def spectral_radius_gelfand(M, k=GELFAND_K, overflow_limit=OVERFLOW_LIMIT):
    """
    Upper-biased estimate ||M^k||_2^(1/k) of the spectral radius of M.
    """
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"spectral radius of non-square matrix {M.shape}")
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    power, log_scale = scaled_matrix_power(M, k, overflow_limit=overflow_limit)
    norm = spectral_norm(power)
    if norm == 0:
        return 0.0
    return float(np.exp((np.log(norm) + log_scale) / k))


def minimal_polynomial(A, tol=MINPOLY_TOL):
    """
    Smallest-degree monic polynomial annihilating A, up to a relative residual tol.

    The degree d is the first one for which vec(A^d) lies within relative
    distance tol of span{vec(I), ..., vec(A^(d-1))}. The coefficients are the
    least-squares projection. Degree n is always accepted (Cayley-Hamilton).
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    if n != A.shape[1]:
        raise DimensionMismatch(f"minimal polynomial of non-square matrix {A.shape}")

    basis = [np.eye(n).ravel()]
    power = np.eye(n)
    for degree in range(1, n + 1):
        power = power @ A
        target = power.ravel()
        krylov = np.column_stack(basis)
        coefficients, *__ = np.linalg.lstsq(krylov, target, rcond=None)
        residual = np.linalg.norm(krylov @ coefficients - target)
        norm = np.linalg.norm(target)
        relative = residual / norm if norm > 0 else 0.0
        if residual <= tol * norm or degree == n:
            return MinimalPolynomial(
                degree=degree, coefficients=coefficients, residual=float(relative)
            )
        basis.append(target)


def make_rngs(seed, count):
    """ count independent generators spawned from one seed. """
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.PCG64(child)) for child in children]


def gaussian_sample(mean, cov_cholesky, rng, size=None):
    """
    Draw mean + L z, with z standard normal from rng (numpy PCG64 generator).

    :param size: number of samples; None returns a single vector, otherwise
    an array of shape (size, dim), drawn in the same order as repeated single calls.
    """
    mean = np.asarray(mean, dtype=float).ravel()
    L = as_matrix(cov_cholesky)
    if L.shape != (mean.size, mean.size):
        raise DimensionMismatch(
            f"Cholesky factor {L.shape} for mean of length {mean.size}"
        )
    if size is None:
        return mean + L @ rng.standard_normal(mean.size)
    z = rng.standard_normal((size, mean.size))
    return mean[None, :] + z @ L.T


def pseudo_inverse_tall(M, tol=PINV_TOL):
    """ (M^T M)^-1 M^T for M with full column rank. """
    M = as_matrix(M)
    rows, cols = M.shape
    if rows < cols:
        raise DimensionMismatch(f"expected rows >= cols, got {M.shape}")
    gram = M.T @ M
    norm2 = spectral_norm(M) ** 2
    if norm2 == 0 or min_eigenvalue(gram) <= tol * norm2:
        raise RankDeficient(f"matrix of shape {M.shape} does not have full column rank")
    return solve_linear(gram, M.T, assume_spd=True)


def is_symmetric(M, tol=PSD_TOL):
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        return False
    scale = max(np.max(np.abs(M)), 1.0)
    return bool(np.max(np.abs(M - M.T)) <= tol * scale)


def is_psd(M, tol=PSD_TOL, strict=False):
    """ Symmetric positive semi-definite (or definite with strict=True) test. """
    M = as_matrix(M)
    if not is_symmetric(M):
        return False
    smallest = min_eigenvalue(M)
    if strict:
        return smallest > 0
    return smallest >= -tol * max(spectral_norm(M), 1e-300)


def psd_cholesky(M, jitter=PSD_JITTER):
    """ Lower Cholesky factor; singular PSD matrices get a diagonal jitter. """
    M = as_matrix(M)
    if not np.any(M):
        return np.zeros_like(M)
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        pass
    shift = jitter * max(1.0, spectral_norm(M))
    try:
        return np.linalg.cholesky(M + shift * np.eye(M.shape[0]))
    except np.linalg.LinAlgError as e:
        raise AssumptionViolated("matrix is not positive semi-definite") from e


def psd_sqrt(M):
    """ Symmetric square root of a PSD matrix, negative eigenvalues clipped. """
    M = as_matrix(M)
    eigenvalues, vectors = np.linalg.eigh((M + M.T) / 2)
    return (vectors * np.sqrt(np.clip(eigenvalues, 0, None))) @ vectors.T
