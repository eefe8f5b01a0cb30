#! /usr/bin/env python3
# -*- coding: utf-8 -*-

"""
analysis.py: Regret of the online predictor against the Kalman filter, and
empirical checks of the properties its analysis relies on: the log-determinant
inequality, the ARMA-like window recursion, persistency of excitation and the
best-FIR-predictor regret.
"""

from dataclasses import dataclass, field
import logging
from typing import NamedTuple, Optional
import warnings

import numpy as np
import scipy.linalg

from .exceptions import IndexOutOfRange, LengthMismatch, NoConvergence, NumericalWarning
from .linalg import (
    MinimalPolynomial,
    as_matrix,
    logdet_spd,
    min_eigenvalue,
    minimal_polynomial,
    numerical_rank,
    pseudo_inverse_tall,
    solve_linear,
    spectral_norm,
)
from .parameters import (
    FIR_JITTER,
    LAMBDA,
    LOGDET_SLACK,
    MINPOLY_TOL,
    PE_GRID_RATIO,
)
from .predictor import future_targets, past_windows
from .sysmodel import closed_loop_responses, observability_matrix

logger = logging.getLogger(__name__)

IDENTITY_TOL = 1e-6  # relative tolerance of R_N = L_N + 2 M_N
ARMA_SLACK = 1e-9  # relative roundoff allowance of the residual bound


@dataclass(frozen=True, eq=False)
class RegretReport:
    N: int
    start: int
    regret: float
    square_loss: float  # sum ||y_hat - y_tilde||^2
    martingale_term: float  # sum e^T (y_hat - y_tilde)
    online_losses: np.ndarray = field(repr=False)  # ||y_k - y_tilde_k||^2, k = start..N
    kalman_losses: np.ndarray = field(repr=False)  # ||y_k - y_hat_k||^2, k = start..N
    identity_residual: float

    def to_dict(self):
        return dict(
            N=self.N,
            start=self.start,
            regret=self.regret,
            square_loss=self.square_loss,
            martingale_term=self.martingale_term,
            online_loss=float(np.sum(self.online_losses)),
            kalman_loss=float(np.sum(self.kalman_losses)),
            identity_residual=self.identity_residual,
        )


class LogdetCheck(NamedTuple):
    lhs: float
    rhs: float
    passed: bool

    def to_dict(self):
        return dict(lhs=self.lhs, rhs=self.rhs, passed=self.passed)


@dataclass(frozen=True, eq=False)
class ArmaDiagnostics:
    polynomial: MinimalPolynomial
    p: int
    first_k: int  # residuals are reported for k = first_k, ..., len(observations)
    Delta: float
    residual_norms: np.ndarray = field(repr=False)
    sup_innovation: np.ndarray = field(repr=False)  # sup_{i <= k-1} ||e_i|| per k
    reconstruction_error: float  # max difference to the innovation form of delta_k
    passed: bool

    @property
    def max_ratio(self):
        bound = self.Delta * self.sup_innovation
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(bound > 0, self.residual_norms / bound, 0.0)
        return float(np.max(ratios)) if ratios.size else 0.0

    def to_dict(self):
        return dict(
            degree=self.polynomial.degree,
            coefficients=self.polynomial.coefficients.tolist(),
            l1_norm=self.polynomial.l1_norm,
            l2_norm=self.polynomial.l2_norm,
            p=self.p,
            Delta=self.Delta,
            max_residual=float(np.max(self.residual_norms, initial=0.0)),
            max_ratio=self.max_ratio,
            reconstruction_error=self.reconstruction_error,
            passed=self.passed,
        )


@dataclass(frozen=True, eq=False)
class PEReport:
    p: int
    k_grid: np.ndarray
    lambda_min: np.ndarray  # lambda_min(sum_{j=p}^{k} Z_j Z_j^T) per grid point
    sigma_R_quarter: float
    holds: np.ndarray  # lambda_min / (k-p+1) >= sigma_min(R) / 4 per grid point
    N0_hat: Optional[int]  # first grid point from which the bound holds onward
    stable_ratios: Optional[np.ndarray] = None  # vs (k-p+1) Gamma_Z / 32
    gram_consistency: Optional[float] = None

    @property
    def normalized(self):
        return self.lambda_min / (self.k_grid - self.p + 1)

    @property
    def min_normalized(self):
        return float(np.min(self.normalized))

    @property
    def stable_bound_ratio(self):
        if self.stable_ratios is None or self.N0_hat is None:
            return None
        return float(np.min(self.stable_ratios[self.k_grid >= self.N0_hat]))

    def to_dict(self):
        return dict(
            p=self.p,
            k_first=int(self.k_grid[0]),
            k_last=int(self.k_grid[-1]),
            n_grid=int(self.k_grid.size),
            min_normalized=self.min_normalized,
            final_normalized=float(self.normalized[-1]),
            sigma_R_quarter=self.sigma_R_quarter,
            N0_hat=self.N0_hat,
            stable_bound_ratio=self.stable_bound_ratio,
            gram_consistency=self.gram_consistency,
        )


@dataclass(frozen=True, eq=False)
class AlternativeRegret:
    p_star: int
    kalman_loss: float
    fir_loss: float  # infimum over FIR predictors of order p_star
    value: float  # kalman_loss - fir_loss
    coefficients: np.ndarray = field(repr=False)  # [g_1, ..., g_p*], shape (m, m p*)
    online_value: Optional[float] = None
    in_class: Optional[bool] = None  # ||g_t|| <= L rho^t for every lag
    jittered: bool = False

    def to_dict(self):
        return dict(
            p_star=self.p_star,
            kalman_loss=self.kalman_loss,
            fir_loss=self.fir_loss,
            value=self.value,
            relative_gap=(
                abs(self.value) / self.kalman_loss if self.kalman_loss else None
            ),
            online_value=self.online_value,
            in_class=self.in_class,
            jittered=self.jittered,
        )


def _aligned(*arrays):
    arrays = [as_matrix(array) for array in arrays]
    lengths = {array.shape[0] for array in arrays}
    if len(lengths) != 1:
        raise LengthMismatch(f"sequences of lengths {sorted(lengths)} are not aligned")
    shapes = {array.shape[1] for array in arrays}
    if len(shapes) != 1:
        raise LengthMismatch(f"sequences have different dimensions {sorted(shapes)}")
    return arrays


def compute_regret(observations, kalman_run, online_log, start=1):
    """
    R_N = sum_k ||y_k - y_tilde_k||^2 - sum_k ||y_k - y_hat_k||^2 over k = start..N,
    with its split into square loss L_N and martingale term M_N, R_N = L_N + 2 M_N.
    """
    y = getattr(observations, "observations", observations)
    y_hat = getattr(kalman_run, "y_hat", kalman_run)
    y_tilde = getattr(online_log, "y_tilde", online_log)
    y, y_hat, y_tilde = _aligned(y, y_hat, y_tilde)
    N = y.shape[0] - 1
    if not 0 <= start <= N:
        raise IndexOutOfRange(f"start must be in [0, {N}], got {start}")

    y, y_hat, y_tilde = y[start:], y_hat[start:], y_tilde[start:]
    innovations = y - y_hat
    gap = y_hat - y_tilde
    online_losses = np.sum((y - y_tilde) ** 2, axis=1)
    kalman_losses = np.sum(innovations ** 2, axis=1)

    regret = float(np.sum(online_losses) - np.sum(kalman_losses))
    square_loss = float(np.sum(gap ** 2))
    martingale_term = float(np.sum(innovations * gap))
    identity_residual = abs(regret - square_loss - 2 * martingale_term)
    if identity_residual > IDENTITY_TOL * (1 + abs(regret)):
        warnings.warn(
            f"regret decomposition residual {identity_residual:.2e}", NumericalWarning
        )
    return RegretReport(
        N=N,
        start=start,
        regret=regret,
        square_loss=square_loss,
        martingale_term=martingale_term,
        online_losses=online_losses,
        kalman_losses=kalman_losses,
        identity_residual=identity_residual,
    )


def regret_curve(report, checkpoints):
    """ Cumulative regret over k = start, ..., c - 1 for every checkpoint c. """
    cumulative = np.cumsum(report.online_losses - report.kalman_losses)
    curve = {}
    for c in checkpoints:
        if not report.start < c <= report.N + 1:
            raise IndexOutOfRange(
                f"checkpoint {c} outside ({report.start}, {report.N + 1}]"
            )
        curve[int(c)] = float(cumulative[c - 1 - report.start])
    return curve


def state_regret(states, kalman_states, predicted_states, start=1, stop=None):
    """ sum ||x_k - x_tilde_k||^2 - sum ||x_k - x_hat_k||^2, k in [start, stop). """
    x, x_hat, x_tilde = _aligned(states, kalman_states, predicted_states)
    stop = x.shape[0] if stop is None else stop
    if not 0 <= start <= stop <= x.shape[0]:
        raise IndexOutOfRange(f"range [{start}, {stop}) outside [0, {x.shape[0]}]")
    window = slice(start, stop)
    return float(
        np.sum((x[window] - x_tilde[window]) ** 2)
        - np.sum((x[window] - x_hat[window]) ** 2)
    )


def state_predictions(multistep_log, O_f):
    """ x_tilde_k = O_f^+ Y_tilde_k for every logged f-step prediction. """
    return multistep_log.y_tilde @ pseudo_inverse_tall(O_f).T


def multistep_regret(
    observations, kalman_run, model, multistep_log, start=1, stop=None
):
    """
    f-step regret sum ||Y_k - Y_tilde_k||^2 - sum ||Y_k - O_f x_hat_k||^2 over
    the k in [start, stop) whose targets Y_k = [y_k; ...; y_{k+f-1}] are observed.
    """
    y = as_matrix(getattr(observations, "observations", observations))
    f = multistep_log.f
    last = y.shape[0] - f + 1
    stop = last if stop is None else min(stop, last)
    if not 0 <= start <= stop:
        raise IndexOutOfRange(f"range [{start}, {stop}) is empty or negative")
    if multistep_log.y_tilde.shape[0] != y.shape[0]:
        raise LengthMismatch("multistep log and observations are not aligned")

    Y = future_targets(y, f, start, stop)
    Y_hat = kalman_run.x_hat[start:stop] @ observability_matrix(model.A, model.C, f).T
    Y_tilde = multistep_log.y_tilde[start:stop]
    return float(np.sum((Y - Y_tilde) ** 2) - np.sum((Y - Y_hat) ** 2))


def estimation_error(log, model, kalman):
    """ ||G_tilde_N - G_p||_F for the horizon p of the last epoch. """
    if log.state is None:
        raise ValueError("no epoch was run, the estimate is undefined")
    G_p = closed_loop_responses(model.A, model.C, kalman.K, log.p)
    return float(np.linalg.norm(log.G_tilde - G_p, "fro"))


def check_logdet_lemma(windows, lambda_=LAMBDA, initial_gram=None, slack=LOGDET_SLACK):
    """
    Compare sum_t Z_t^T V_t^-1 Z_t with ln det(V_end V_start^-1), where V_t
    already contains Z_t.

    :param windows: array of shape (T, d), one window per row in time order.
    :param initial_gram: V at the epoch start; lambda I if omitted.
    """
    windows = as_matrix(windows)
    if windows.shape[0] == 0:
        return LogdetCheck(lhs=0.0, rhs=0.0, passed=True)
    d = windows.shape[1]
    V = lambda_ * np.eye(d) if initial_gram is None else as_matrix(initial_gram).copy()
    logdet_start = logdet_spd(V)

    lhs = 0.0
    for z in windows:
        V += np.outer(z, z)
        lhs += float(z @ solve_linear(V, z, assume_spd=True))
    rhs = logdet_spd(V) - logdet_start
    return LogdetCheck(lhs=lhs, rhs=float(rhs), passed=bool(lhs <= rhs + slack))


def epoch_logdet_checks(observations, log, slack=LOGDET_SLACK):
    """ check_logdet_lemma on the in-epoch windows of every epoch of a log. """
    y = as_matrix(getattr(observations, "observations", observations))
    lambda_ = log.schedule.lambda_
    checks = []
    for record in log.epochs:
        prior = past_windows(y, record.p, record.p, record.start)
        initial_gram = lambda_ * np.eye(prior.shape[1]) + prior.T @ prior
        windows = past_windows(y, record.p, record.start, record.stop + 1)
        checks.append(check_logdet_lemma(windows, lambda_, initial_gram, slack=slack))
    return checks


def innovation_coefficients(A, C, K, polynomial):
    """
    M_0 = I and M_s = C A^(s-1) K - a_{d-s} I - sum_{t=1}^{s-1} a_{d-t} C A^(s-t-1) K,
    the innovation weights of y_k - sum_i a_i y_{k-d+i}.
    """
    d, a = polynomial.degree, polynomial.coefficients
    m = C.shape[0]
    markov = []  # C A^j K for j = 0, ..., d-1
    power_K = K
    for __ in range(d):
        markov.append(C @ power_K)
        power_K = A @ power_K

    M = [np.eye(m)]
    for s in range(1, d + 1):
        M_s = markov[s - 1] - a[d - s] * np.eye(m)
        for t in range(1, s):
            M_s = M_s - a[d - t] * markov[s - t - 1]
        M.append(M_s)
    return M


def arma_delta(A, C, K, polynomial, p):
    """
    Delta = (d+1) ||a||_1 max{||C|| ||K|| max_{0<=j<=d-1} ||A^j||, 1} sqrt(p).
    """
    d = polynomial.degree
    power = np.eye(A.shape[0])
    largest_power = 0.0
    for __ in range(d):
        largest_power = max(largest_power, spectral_norm(power))
        power = power @ A
    gain = spectral_norm(C) * spectral_norm(K) * largest_power
    return float((d + 1) * polynomial.l1_norm * max(gain, 1.0) * np.sqrt(p))


def check_arma_bound(observations, model, kalman_run, p, kalman, tol=MINPOLY_TOL):
    """
    Residuals delta_k = Z_k - sum_i a_i Z_{k-d+i} of the window recursion for
    k = p + d, ..., N, checked against ||delta_k|| <= Delta sup_{i <= k-1} ||e_i||.

    :param kalman: KalmanSolution of the true model, for K.
    """
    y, innovations = _aligned(
        getattr(observations, "observations", observations), kalman_run.innovations
    )
    n_obs = y.shape[0]
    polynomial = minimal_polynomial(model.A, tol=tol)
    d, a = polynomial.degree, polynomial.coefficients
    first_k = p + d
    if first_k > n_obs:
        raise IndexOutOfRange(
            f"need at least p + d = {first_k} observations, got {n_obs}"
        )

    windows = past_windows(y, p, p, n_obs + 1)  # rows k = p, ..., N+1
    count = windows.shape[0] - d
    delta = windows[d:].copy()
    for i in range(d):
        delta -= a[i] * windows[i : i + count]
    residual_norms = np.linalg.norm(delta, axis=1)

    # innovation form: block j of delta_k is u_{k-p+j}, u_t = sum_s M_s e_{t-s}
    M = innovation_coefficients(model.A, model.C, kalman.K, polynomial)
    u = np.zeros_like(innovations)
    for s, M_s in enumerate(M):
        u[d:] += innovations[d - s : n_obs - s] @ M_s.T
    reconstructed = past_windows(u, p, first_k, n_obs + 1)
    reconstruction_error = float(np.max(np.abs(reconstructed - delta), initial=0.0))

    innovation_norms = np.linalg.norm(innovations, axis=1)
    running_sup = np.maximum.accumulate(innovation_norms)
    sup_innovation = running_sup[first_k - 1 :]  # sup over i <= k-1

    Delta = arma_delta(model.A, model.C, kalman.K, polynomial, p)
    passed = bool(np.all(residual_norms <= Delta * sup_innovation * (1 + ARMA_SLACK)))
    return ArmaDiagnostics(
        polynomial=polynomial,
        p=p,
        first_k=first_k,
        Delta=Delta,
        residual_norms=residual_norms,
        sup_innovation=sup_innovation,
        reconstruction_error=reconstruction_error,
        passed=passed,
    )


def geometric_grid(count, ratio=PE_GRID_RATIO):
    """ Sample counts 1 = n_0 < n_1 < ... <= count, n_{i+1} ~ ratio n_i. """
    if not ratio > 1:
        raise ValueError(f"grid ratio must exceed 1, got {ratio}")
    grid = [1]
    while grid[-1] < count:
        grid.append(min(count, max(grid[-1] + 1, int(np.ceil(grid[-1] * ratio)))))
    return np.array(grid)


def check_persistency(
    windows, R, p, gamma_z=None, ratio=PE_GRID_RATIO, reference_gram=None
):
    """
    lambda_min(sum_{j=p}^{k} Z_j Z_j^T) against (k-p+1) sigma_min(R) / 4 on a
    geometric grid of k.

    :param windows: rows Z_p, Z_{p+1}, ..., Z_N.
    :param gamma_z: optional window covariance, a matrix or a callable k -> Gamma_{Z,k},
        for the ratio lambda_min(Gamma_Z^-1/2 Gram Gamma_Z^-1/2) / ((k-p+1) / 32).
    :param reference_gram: optional (k, Gram) pair, e.g. V_bar - lambda I of the
        predictor, compared with the Gram matrix recomputed here.
    """
    windows = as_matrix(windows)
    counts = geometric_grid(windows.shape[0], ratio=ratio)
    sigma_R_quarter = min_eigenvalue(R) / 4

    gram = np.zeros((windows.shape[1], windows.shape[1]))
    previous = 0
    lambda_min = np.empty(counts.size)
    stable_ratios = None if gamma_z is None else np.empty(counts.size)
    for i, count in enumerate(counts):
        block = windows[previous:count]
        gram += block.T @ block
        previous = count
        lambda_min[i] = min_eigenvalue(gram)
        if gamma_z is not None:
            k = p + count - 1
            covariance = gamma_z(k) if callable(gamma_z) else gamma_z
            try:
                generalized = scipy.linalg.eigh(
                    gram, covariance, eigvals_only=True, subset_by_index=[0, 0]
                )[0]
            except np.linalg.LinAlgError as e:
                raise NoConvergence("generalized eigenvalue solver failed") from e
            stable_ratios[i] = generalized / (count / 32)

    holds = lambda_min / counts >= sigma_R_quarter
    failures = np.flatnonzero(~holds)
    first = failures[-1] + 1 if failures.size else 0
    N0_hat = int(p + counts[first] - 1) if first < counts.size else None

    gram_consistency = None
    if reference_gram is not None:
        k, reference = reference_gram
        direct = windows[: k - p + 1].T @ windows[: k - p + 1]
        scale = max(np.linalg.norm(direct, "fro"), 1.0)
        gram_consistency = float(np.linalg.norm(direct - reference, "fro") / scale)

    return PEReport(
        p=p,
        k_grid=p + counts - 1,
        lambda_min=lambda_min,
        sigma_R_quarter=float(sigma_R_quarter),
        holds=holds,
        N0_hat=N0_hat,
        stable_ratios=stable_ratios,
        gram_consistency=gram_consistency,
    )


def fir_regressors(observations, p_star):
    """ Rows [y_{k-1}; ...; y_{k-p*}] for k = 0, ..., N, zero-padded before time 0. """
    y = as_matrix(observations)
    padded = np.vstack([np.zeros((p_star, y.shape[1])), y])
    n_obs = y.shape[0]
    return np.hstack(
        [padded[p_star - t : p_star - t + n_obs] for t in range(1, p_star + 1)]
    )


def alternative_regret(
    observations,
    kalman_run,
    p_star,
    rho=None,
    L=None,
    online_log=None,
    jitter=FIR_JITTER,
):
    """
    Kalman loss minus the smallest loss of any order-p_star FIR predictor
    fitted on the whole record, sums from k = 0 with zero padding.

    Membership of the fitted filter in the class ||g_t|| <= L rho^t is
    reported, not imposed.
    """
    y = as_matrix(getattr(observations, "observations", observations))
    y, y_hat = _aligned(y, kalman_run.y_hat)
    if not 1 <= p_star < y.shape[0]:
        raise IndexOutOfRange(f"p_star must be in [1, {y.shape[0] - 1}], got {p_star}")

    Phi = fir_regressors(y, p_star)
    gram = Phi.T @ Phi
    jittered = numerical_rank(gram) < gram.shape[0]
    if jittered:
        warnings.warn(
            f"FIR Gram matrix of order {p_star} is rank deficient, adding "
            f"{jitter:.0e} trace jitter",
            NumericalWarning,
        )
        gram = gram + jitter * max(np.trace(gram), 1.0) * np.eye(gram.shape[0])
    coefficients = solve_linear(gram, Phi.T @ y, assume_spd=True).T

    fir_loss = float(np.sum((y - Phi @ coefficients.T) ** 2))
    kalman_loss = float(np.sum((y - y_hat) ** 2))
    logger.debug(
        "FIR order %d: Kalman loss %.4g, FIR loss %.4g", p_star, kalman_loss, fir_loss
    )

    online_value = None
    if online_log is not None:
        y_tilde = getattr(online_log, "y_tilde", online_log)
        y, y_tilde = _aligned(y, y_tilde)
        online_value = float(np.sum((y - y_tilde) ** 2)) - fir_loss

    in_class = None
    if rho is not None and L is not None:
        m = y.shape[1]
        in_class = all(
            spectral_norm(coefficients[:, (t - 1) * m : t * m]) <= L * rho ** t
            for t in range(1, p_star + 1)
        )
    return AlternativeRegret(
        p_star=p_star,
        kalman_loss=kalman_loss,
        fir_loss=fir_loss,
        value=kalman_loss - fir_loss,
        coefficients=coefficients,
        online_value=online_value,
        in_class=in_class,
        jittered=bool(jittered),
    )
