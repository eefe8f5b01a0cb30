#! /usr/bin/env python3
# -*- coding: utf-8 -*-

"""
kalman.py: Steady-state Kalman filter of a StateSpaceModel: Riccati solution,
filter runs over trajectories, covariance recursions and innovation whiteness.
"""

from dataclasses import dataclass, field
import logging
from typing import Optional

import numpy as np

from .exceptions import (
    AssumptionViolated,
    IndexOutOfRange,
    LengthMismatch,
    NoConvergence,
)
from .linalg import as_matrix, is_psd, solve_linear, spectral_radius_gelfand
from .parameters import (
    LYAPUNOV_MAX_ITER,
    LYAPUNOV_TOL,
    NON_EXPLOSIVE_SLACK,
    RICCATI_MAX_ITER,
    RICCATI_RESIDUAL_TOL,
    RICCATI_TOL,
    WHITENESS_FACTOR,
)
from .sysmodel import observability_matrix, toeplitz_response, with_stationary_prior

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class KalmanSolution:
    P: np.ndarray
    K: np.ndarray
    R_bar: np.ndarray  # innovation covariance C P C^T + R
    closed_loop: np.ndarray  # A - K C
    rho_closed_loop: float
    iterations: int
    residual: float

    def to_dict(self):
        return dict(
            P=self.P.tolist(),
            K=self.K.tolist(),
            R_bar=self.R_bar.tolist(),
            rho_closed_loop=self.rho_closed_loop,
            iterations=self.iterations,
            residual=self.residual,
        )


@dataclass(frozen=True, eq=False)
class FilterRun:
    x_hat: np.ndarray = field(repr=False)  # shape (N+1, n)
    y_hat: np.ndarray = field(repr=False)  # shape (N+1, m)
    innovations: np.ndarray = field(repr=False)  # shape (N+1, m)

    @property
    def N(self):
        return self.y_hat.shape[0] - 1


@dataclass(frozen=True, eq=False)
class CovarianceDiagnostics:
    """
    Covariances of the Kalman state prediction, Gamma_k = E x_hat_k x_hat_k^T,
    and of the past-observation windows built from them.
    """

    Gamma: np.ndarray = field(repr=False)  # shape (k_max+1, n, n)
    Gamma_inf: Optional[np.ndarray]  # None unless A is strictly stable
    A: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)
    K: np.ndarray = field(repr=False)
    R_bar: np.ndarray = field(repr=False)

    @property
    def k_max(self):
        return self.Gamma.shape[0] - 1

    def sigma_e(self, p):
        """ Covariance T_p diag(R_bar, ..., R_bar) T_p^T of a window's innovations. """
        T = toeplitz_response(self.A, self.C, self.K, p)
        return T @ np.kron(np.eye(p), self.R_bar) @ T.T

    def gamma_z(self, k, p):
        """
        Covariance E Z_k Z_k^T = O_p Gamma_{k-p} O_p^T + Sigma_E of the window Z_{k,p}.

        :param k: time index, or None for the stationary covariance (needs Gamma_inf).
        """
        if k is None:
            if self.Gamma_inf is None:
                raise NoConvergence("stationary covariance undefined for non-stable A")
            gamma = self.Gamma_inf
        else:
            if not p <= k <= self.k_max + p:
                raise IndexOutOfRange(
                    f"window covariance needs p <= k <= k_max + p, got k={k}, p={p}"
                )
            gamma = self.Gamma[k - p]
        O = observability_matrix(self.A, self.C, p)
        return O @ gamma @ O.T + self.sigma_e(p)

    def is_monotone(self, tol=1e-10):
        """ Gamma_{k+1} - Gamma_k is PSD for every k. """
        return all(
            is_psd(self.Gamma[k + 1] - self.Gamma[k], tol=tol)
            for k in range(self.k_max)
        )


@dataclass(frozen=True, eq=False)
class WhitenessReport:
    N: int
    max_lag: int
    threshold: float
    correlations: np.ndarray = field(repr=False)  # (max_lag, m, m), lags 1..max_lag
    lag0: np.ndarray = field(repr=False)  # empirical covariance at lag 0
    passed: bool

    def to_dict(self):
        return dict(
            N=self.N,
            max_lag=self.max_lag,
            threshold=self.threshold,
            max_correlation=float(np.max(np.abs(self.correlations))),
            lag0=self.lag0.tolist(),
            passed=self.passed,
        )


def riccati_step(P, A, C, Q, R):
    """ One step of P+ = A P A^T - A P C^T (C P C^T + R)^-1 C P A^T + Q. """
    S = C @ P @ C.T + R
    APC = A @ P @ C.T
    P_next = A @ P @ A.T - APC @ solve_linear(S, APC.T, assume_spd=True) + Q
    return (P_next + P_next.T) / 2


def riccati_residual(P, K, model):
    closed_loop = model.A - K @ model.C
    difference = P - closed_loop @ P @ closed_loop.T - model.Q - K @ model.R @ K.T
    scale = np.linalg.norm(P, "fro")
    residual = np.linalg.norm(difference, "fro")
    return float(residual / scale) if scale > 0 else float(residual)


def solve_riccati(
    model,
    tol=RICCATI_TOL,
    max_iter=RICCATI_MAX_ITER,
    residual_tol=RICCATI_RESIDUAL_TOL,
):
    """
    Steady-state Riccati solution by fixed-point iteration started at P = Q.

    Stops when the relative Frobenius change of P drops below tol.
    """
    A, C, Q, R = model.A, model.C, model.Q, model.R
    if not is_psd(R, strict=True):
        raise AssumptionViolated("R must be symmetric positive definite")

    P = Q.copy()
    for iteration in range(1, max_iter + 1):
        P_next = riccati_step(P, A, C, Q, R)
        scale = np.linalg.norm(P_next, "fro")
        change = np.linalg.norm(P_next - P, "fro")
        P = P_next
        if change <= tol * scale:
            break
    else:
        raise NoConvergence(
            f"Riccati iteration did not converge in {max_iter} steps",
            estimate=P,
            iterations=max_iter,
        )

    R_bar = C @ P @ C.T + R
    K = solve_linear(R_bar, C @ P @ A.T, assume_spd=True).T
    residual = riccati_residual(P, K, model)
    if residual > residual_tol:
        raise NoConvergence(
            f"Riccati residual {residual:.2e} above {residual_tol:.0e}",
            estimate=P,
            iterations=iteration,
        )

    closed_loop = A - K @ C
    rho_closed_loop = spectral_radius_gelfand(closed_loop)
    if rho_closed_loop >= 1:
        raise AssumptionViolated(
            f"closed loop A-KC is not stable (rho estimate {rho_closed_loop:.6f}); "
            "check observability and controllability of the model"
        )
    logger.debug(
        "Riccati for %s: %d iterations, residual %.2e, rho(A-KC) %.4f",
        model.name,
        iteration,
        residual,
        rho_closed_loop,
    )
    return KalmanSolution(
        P=P,
        K=K,
        R_bar=R_bar,
        closed_loop=closed_loop,
        rho_closed_loop=float(rho_closed_loop),
        iterations=iteration,
        residual=residual,
    )


def stationary_model(model, **kwargs):
    """ Solve the Riccati equation and return (model with Sigma0 := P, solution). """
    solution = solve_riccati(model, **kwargs)
    return with_stationary_prior(model, solution), solution


def run_filter(solution, model, traj):
    """
    Steady-state filter x_hat_{k+1} = A x_hat_k + K e_k from x_hat_0 = 0.

    :param traj: Trajectory, or array of observations of shape (N+1, m).
    """
    observations = as_matrix(getattr(traj, "observations", traj), "observations")
    A, C, K = model.A, model.C, solution.K
    if observations.shape[1] != model.m:
        raise LengthMismatch(
            f"observations have dimension {observations.shape[1]}, model has m={model.m}"
        )

    n_steps = observations.shape[0]
    x_hat = np.empty((n_steps, model.n))
    y_hat = np.empty((n_steps, model.m))
    innovations = np.empty((n_steps, model.m))
    x = np.zeros(model.n)
    for k in range(n_steps):
        x_hat[k] = x
        y_hat[k] = C @ x
        innovations[k] = observations[k] - y_hat[k]
        x = A @ x + K @ innovations[k]
    return FilterRun(x_hat=x_hat, y_hat=y_hat, innovations=innovations)


def lyapunov_fixed_point(A, W, tol=LYAPUNOV_TOL, max_iter=LYAPUNOV_MAX_ITER):
    """ Solution of X = A X A^T + W by iteration from X = 0. """
    X = np.zeros_like(W)
    for iteration in range(1, max_iter + 1):
        X_next = A @ X @ A.T + W
        scale = np.linalg.norm(X_next, "fro")
        if np.linalg.norm(X_next - X, "fro") <= tol * scale:
            return X_next
        X = X_next
    raise NoConvergence(
        f"Lyapunov iteration did not converge in {max_iter} steps",
        estimate=X,
        iterations=max_iter,
    )


def state_covariances(
    solution,
    model,
    k_max,
    tol=LYAPUNOV_TOL,
    max_iter=LYAPUNOV_MAX_ITER,
    slack=NON_EXPLOSIVE_SLACK,
):
    """
    Gamma_0 = 0, Gamma_k = A Gamma_{k-1} A^T + K R_bar K^T for k <= k_max.

    The fixed point Gamma_inf is only computed when the Gelfand estimate of
    rho(A) is below 1 - slack, it is None otherwise.
    """
    if k_max < 1:
        raise ValueError(f"k_max must be at least 1, got {k_max}")
    A = model.A
    W = solution.K @ solution.R_bar @ solution.K.T

    Gamma = np.zeros((k_max + 1, model.n, model.n))
    for k in range(1, k_max + 1):
        Gamma[k] = A @ Gamma[k - 1] @ A.T + W

    Gamma_inf = None
    if spectral_radius_gelfand(A) < 1 - slack:
        Gamma_inf = lyapunov_fixed_point(A, W, tol=tol, max_iter=max_iter)
    return CovarianceDiagnostics(
        Gamma=Gamma,
        Gamma_inf=Gamma_inf,
        A=A,
        C=model.C,
        K=solution.K,
        R_bar=solution.R_bar,
    )


def innovation_whiteness(run, max_lag, factor=WHITENESS_FACTOR):
    """
    Normalized empirical cross-correlations of the innovations at lags 1..max_lag.

    Entry (i, j) at lag l is sum_t e_{t+l,i} e_{t,j} / sqrt(c_ii c_jj) with
    c the lag-0 sums; no mean is removed. The test passes when every entry is
    at most factor / sqrt(N) in magnitude. Channels with zero energy fail.

    :param run: FilterRun, or array of innovations of shape (N, m).
    """
    innovations = as_matrix(getattr(run, "innovations", run), "innovations")
    N = innovations.shape[0]
    if max_lag < 1:
        raise ValueError(f"max_lag must be at least 1, got {max_lag}")
    if N < 100 * max_lag:
        raise LengthMismatch(f"need at least {100 * max_lag} innovations, got {N}")

    lag0 = innovations.T @ innovations / N
    energy = np.sqrt(np.diag(lag0))
    with np.errstate(divide="ignore", invalid="ignore"):
        normalization = np.outer(energy, energy)
        correlations = np.stack(
            [
                (innovations[lag:].T @ innovations[:-lag] / N) / normalization
                for lag in range(1, max_lag + 1)
            ]
        )
    threshold = factor / np.sqrt(N)
    passed = bool(np.all(np.abs(correlations) <= threshold))
    return WhitenessReport(
        N=N,
        max_lag=max_lag,
        threshold=float(threshold),
        correlations=correlations,
        lag0=lag0,
        passed=passed,
    )
