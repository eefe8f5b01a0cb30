#! /usr/bin/env python3
# -*- coding: utf-8 -*-

"""
predictor.py: Online least-squares prediction of observations from past
observation windows, with doubling epochs and a growing past horizon.

Observations are arrays of shape (L, m) holding y_0 ... y_{L-1}. The window
Z_{k,p} stacks y_{k-p}, ..., y_{k-1}, oldest first.
"""

from dataclasses import dataclass, field
import logging
import numbers
from typing import List, Optional
import warnings

import numpy as np

from .exceptions import (
    DimensionMismatch,
    IndexOutOfRange,
    InvalidSchedule,
    NumericalWarning,
)
from .linalg import as_matrix, logdet_spd, pseudo_inverse_tall, spd_inverse
from .parameters import BETA, LAMBDA, REFRESH_TOL

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpochSchedule:
    """
    Epoch i starts at T_i = 2^(i-1) T_init and uses the past horizon
    p_i = ceil(beta ln T_i), clamped to [1, T_i - 1].
    """

    T_init: int
    beta: float = BETA
    lambda_: float = LAMBDA  # ridge parameter

    def __post_init__(self):
        integral = isinstance(self.T_init, numbers.Integral)
        if isinstance(self.T_init, bool) or not integral:
            raise InvalidSchedule(f"T_init must be an integer, got {self.T_init!r}")
        object.__setattr__(self, "T_init", int(self.T_init))
        if self.T_init < 2:
            raise InvalidSchedule(f"T_init must be at least 2, got {self.T_init}")
        if not self.beta > 0:
            raise InvalidSchedule(f"beta must be positive, got {self.beta}")
        if not self.lambda_ > 0:
            raise InvalidSchedule(f"lambda must be positive, got {self.lambda_}")
        if self.T_init <= self.beta * np.log(self.T_init):
            raise InvalidSchedule(
                f"T_init={self.T_init} must exceed beta ln T_init = "
                f"{self.beta * np.log(self.T_init):.3f}"
            )

    @classmethod
    def default(cls, beta=BETA, lambda_=LAMBDA):
        """ Schedule with T_init the smallest power of two above 8 beta. """
        T_init = 2
        while T_init <= 8 * beta:
            T_init *= 2
        return cls(T_init=T_init, beta=beta, lambda_=lambda_)

    def start(self, i):
        return 2 ** (i - 1) * self.T_init

    def horizon(self, T):
        p = int(np.ceil(self.beta * np.log(T)))
        return min(max(p, 1), T - 1)

    def epochs(self, n_observations):
        """ (i, T_i, p_i) for every epoch that starts before n_observations. """
        i = 1
        while self.start(i) < n_observations:
            T = self.start(i)
            yield i, T, self.horizon(T)
            i += 1

    def to_dict(self):
        return {
            "T_init": int(self.T_init),
            "beta": float(self.beta),
            "lambda": float(self.lambda_),
        }


@dataclass(eq=False)
class PredictorState:
    """
    Recursive least-squares state of one epoch. Mutated in place by
    recursive_update, one stream at a time.
    """

    epoch: int
    p: int
    k: int  # last time index included in the fit
    G_tilde: np.ndarray = field(repr=False)
    V_bar: np.ndarray = field(repr=False)  # lambda I + sum_t Z_t Z_t^T
    V_bar_inv: np.ndarray = field(repr=False)
    logdet: float
    logdet_start: float  # ln det V_bar at the epoch start
    lhs: float = 0.0  # running sum of Z_t^T V_t^-1 Z_t over the epoch

    @property
    def dimension(self):
        return self.V_bar.shape[0]

    def copy(self):
        return PredictorState(
            epoch=self.epoch,
            p=self.p,
            k=self.k,
            G_tilde=self.G_tilde.copy(),
            V_bar=self.V_bar.copy(),
            V_bar_inv=self.V_bar_inv.copy(),
            logdet=self.logdet,
            logdet_start=self.logdet_start,
            lhs=self.lhs,
        )


@dataclass(eq=False)
class EpochRecord:
    index: int
    start: int  # first prediction time T
    stop: int  # last time index included in the fit
    p: int
    lhs: float
    rhs: float
    inverse_drift: float  # ||V_bar V_bar^-1 - I||_F at the end of the epoch
    logdet_drift: float
    final_state: PredictorState = field(repr=False)  # snapshot at the epoch end

    @property
    def V_bar(self):
        return self.final_state.V_bar

    @property
    def G_tilde(self):
        return self.final_state.G_tilde

    def to_dict(self):
        return dict(
            index=self.index,
            start=self.start,
            stop=self.stop,
            p=self.p,
            lhs=self.lhs,
            rhs=self.rhs,
            inverse_drift=self.inverse_drift,
            logdet_drift=self.logdet_drift,
        )


@dataclass(eq=False)
class PredictionLog:
    schedule: EpochSchedule
    y_tilde: np.ndarray = field(repr=False)  # shape (L, m), zeros in the warm-up
    epochs: List[EpochRecord] = field(default_factory=list)
    state: Optional[PredictorState] = None  # final state, None if only warm-up

    @property
    def N(self):
        return self.y_tilde.shape[0] - 1

    @property
    def G_tilde(self):
        return None if self.state is None else self.state.G_tilde

    @property
    def p(self):
        return None if self.state is None else self.state.p


@dataclass(eq=False)
class MultistepLog(PredictionLog):
    f: int = 1
    # y_tilde holds the stacked predictions [y_k; ...; y_{k+f-1}] made at time k


def _observations(observations):
    return as_matrix(observations, "observations")


def past_window(observations, k, p):
    """ Z_{k,p} = [y_{k-p}; ...; y_{k-1}], a vector of length m p. """
    y = _observations(observations)
    if p < 1:
        raise ValueError(f"p must be at least 1, got {p}")
    if k < p or k > y.shape[0]:
        raise IndexOutOfRange(f"window Z_{k} with p={p} needs p <= k <= {y.shape[0]}")
    return y[k - p : k].ravel()


def past_windows(observations, p, start, stop):
    """ Rows Z_{t,p} for t = start, ..., stop - 1, shape (stop - start, m p). """
    y = _observations(observations)
    if start < p or stop > y.shape[0] + 1:
        raise IndexOutOfRange(
            f"windows for t in [{start}, {stop}) with p={p} need {p} <= t <= {y.shape[0]}"
        )
    if stop <= start:
        return np.zeros((0, p * y.shape[1]))
    return np.hstack([y[start - p + j : stop - p + j] for j in range(p)])


def future_targets(observations, f, start, stop):
    """ Rows Y_t = [y_t; ...; y_{t+f-1}] for t = start, ..., stop - 1. """
    y = _observations(observations)
    if start < 0 or stop + f - 1 > y.shape[0]:
        raise IndexOutOfRange(
            f"targets for t in [{start}, {stop}) with f={f} exceed data"
        )
    if stop <= start:
        return np.zeros((0, f * y.shape[1]))
    return np.hstack([y[start + j : stop + j] for j in range(f)])


def _ridge(windows, targets, lambda_):
    """ Regularized least squares; returns (G, V, V^-1, ln det V). """
    if not lambda_ > 0:
        raise ValueError(f"lambda must be positive, got {lambda_}")
    V = lambda_ * np.eye(windows.shape[1]) + windows.T @ windows
    V_inv, logdet = spd_inverse(V)
    G = (targets.T @ windows) @ V_inv
    return G, V, V_inv, logdet


def batch_fit(observations, p, k, lambda_=LAMBDA):
    """
    G = (sum_{t=p}^{k} y_t Z_t^T) (lambda I + sum_{t=p}^{k} Z_t Z_t^T)^-1.

    :return: (G_tilde, V_bar_inv, logdet of V_bar)
    """
    G, __, V_inv, logdet = _batch(observations, p, k, lambda_)
    return G, V_inv, logdet


def _batch(observations, p, k, lambda_):
    y = _observations(observations)
    if k < p or k >= y.shape[0]:
        raise IndexOutOfRange(
            f"batch fit needs p <= k < {y.shape[0]}, got p={p}, k={k}"
        )
    return _ridge(past_windows(y, p, p, k + 1), y[p : k + 1], lambda_)


def fit_multistep(observations, p, f, k, lambda_=LAMBDA):
    """
    Ridge regression of Y_t = [y_t; ...; y_{t+f-1}] on Z_{t,p} over t = p, ..., k - f.

    :return: G_tilde of shape (f m, m p)
    """
    G, *__ = _multistep(observations, p, f, k, lambda_)
    return G


def _multistep(observations, p, f, k, lambda_):
    y = _observations(observations)
    if f < 1:
        raise ValueError(f"f must be at least 1, got {f}")
    if k - f < p or k >= y.shape[0]:
        raise IndexOutOfRange(f"multistep fit needs p <= k - f and k < {y.shape[0]}")
    stop = k - f + 1
    return _ridge(past_windows(y, p, p, stop), future_targets(y, f, p, stop), lambda_)


def recursive_update(state, y_k, Z_k):
    """
    Add the pair (y_k, Z_k) to the fit in place and return the state.

    V_bar^-1 gets the rank-one inverse update, ln det V_bar grows by
    ln(1 + Z^T V_bar^-1 Z) and G_tilde += (y_k - G_tilde Z_k) Z_k^T V_bar_k^-1.
    """
    z = np.asarray(Z_k, dtype=float).ravel()
    y = np.asarray(y_k, dtype=float).ravel()
    if z.size != state.dimension:
        raise DimensionMismatch(
            f"window of length {z.size}, state has {state.dimension}"
        )
    if y.size != state.G_tilde.shape[0]:
        raise DimensionMismatch(
            f"target of length {y.size}, state predicts {state.G_tilde.shape[0]}"
        )

    Vz = state.V_bar_inv @ z
    u = float(z @ Vz)
    denominator = 1.0 + u
    error = y - state.G_tilde @ z

    V_inv = state.V_bar_inv - np.outer(Vz, Vz) / denominator
    state.V_bar_inv = (V_inv + V_inv.T) / 2
    state.V_bar += np.outer(z, z)
    state.logdet += np.log1p(u)
    state.G_tilde += np.outer(error, Vz / denominator)
    state.lhs += u / denominator
    state.k += 1
    return state


def predict_next(state, Z_next):
    """ y_tilde_{k+1} = G_tilde_k Z_{k+1}. """
    z = np.asarray(Z_next, dtype=float).ravel()
    if z.size != state.dimension:
        raise DimensionMismatch(
            f"window of length {z.size}, state has {state.dimension}"
        )
    return state.G_tilde @ z


def _initial_state(G, V, V_inv, logdet, epoch, p, k):
    return PredictorState(
        epoch=epoch,
        p=p,
        k=k,
        G_tilde=G,
        V_bar=V,
        V_bar_inv=V_inv,
        logdet=logdet,
        logdet_start=logdet,
    )


def refresh_check(state, tol=REFRESH_TOL):
    """
    Drift of the maintained inverse and log-determinant against a Cholesky
    refactorization of V_bar; warns when either exceeds tol.

    :return: (||V_bar V_bar^-1 - I||_F, |logdet - ln det V_bar|)
    """
    inverse_drift = float(
        np.linalg.norm(state.V_bar @ state.V_bar_inv - np.eye(state.dimension), "fro")
    )
    logdet_drift = float(abs(state.logdet - logdet_spd(state.V_bar)))
    if inverse_drift > tol or logdet_drift > tol:
        warnings.warn(
            f"epoch {state.epoch} ends with inverse drift {inverse_drift:.2e} "
            f"and log-det drift {logdet_drift:.2e} (tolerance {tol:.0e})",
            NumericalWarning,
        )
    return inverse_drift, logdet_drift


def _close_epoch(state, start, refresh_tol):
    inverse_drift, logdet_drift = refresh_check(state, tol=refresh_tol)
    return EpochRecord(
        index=state.epoch,
        start=start,
        stop=state.k,
        p=state.p,
        lhs=float(state.lhs),
        rhs=float(state.logdet - state.logdet_start),
        inverse_drift=inverse_drift,
        logdet_drift=logdet_drift,
        final_state=state.copy(),
    )


def run_online(observations, schedule, refresh_tol=REFRESH_TOL):
    """
    Online predictions y_tilde_k for every k, zero during the warm-up k < T_init.

    At the start T of every epoch the fit is recomputed over t = p, ..., T-1
    with the epoch's horizon p. Within the epoch, y_tilde_k = G_tilde_{k-1} Z_k
    is predicted before y_k is added by recursive_update.
    """
    y = _observations(observations)
    L, m = y.shape
    if L < schedule.T_init:
        raise InvalidSchedule(
            f"need at least T_init={schedule.T_init} observations, got {L}"
        )

    y_tilde = np.zeros((L, m))
    log = PredictionLog(schedule=schedule, y_tilde=y_tilde)
    for i, T, p in schedule.epochs(L):
        state = _initial_state(
            *_batch(y, p, T - 1, schedule.lambda_), epoch=i, p=p, k=T - 1
        )
        stop = min(2 * T, L)
        windows = past_windows(y, p, T, stop)
        for k, z in zip(range(T, stop), windows):
            y_tilde[k] = state.G_tilde @ z
            recursive_update(state, y[k], z)
        log.epochs.append(_close_epoch(state, T, refresh_tol))
        log.state = state
        logger.debug("epoch %d: T=%d, p=%d, last k=%d", i, T, p, state.k)
    return log


def run_multistep(observations, schedule, f, refresh_tol=REFRESH_TOL):
    """
    Online f-step-ahead predictions Y_tilde_k of [y_k; ...; y_{k+f-1}].

    The prediction at time k uses the fit over t = p, ..., k - f, whose targets
    only involve y_0 ... y_{k-1}. After y_k is observed the pair t = k - f + 1
    is added. Every epoch start T refits over t = p, ..., T - f.
    """
    y = _observations(observations)
    L, m = y.shape
    if f < 1:
        raise ValueError(f"f must be at least 1, got {f}")
    if L < schedule.T_init:
        raise InvalidSchedule(
            f"need at least T_init={schedule.T_init} observations, got {L}"
        )
    p_first = schedule.horizon(schedule.T_init)
    if schedule.T_init - f < p_first:
        raise InvalidSchedule(
            f"f={f} needs T_init - f >= p_1, got T_init={schedule.T_init}, p_1={p_first}"
        )

    Y_tilde = np.zeros((L, f * m))
    log = MultistepLog(schedule=schedule, y_tilde=Y_tilde, f=f)
    for i, T, p in schedule.epochs(L):
        state = _initial_state(
            *_multistep(y, p, f, T, schedule.lambda_), epoch=i, p=p, k=T - f
        )
        stop = min(2 * T, L)
        windows = past_windows(y, p, T, stop)
        for k, z in zip(range(T, stop), windows):
            Y_tilde[k] = state.G_tilde @ z
            t = k - f + 1
            recursive_update(state, y[t : t + f].ravel(), past_window(y, t, p))
        log.epochs.append(_close_epoch(state, T, refresh_tol))
        log.state = state
    return log


def predict_state(G_tilde_f, O_f, Z_k):
    """ x_tilde_k = O_f^+ G_tilde_f Z_k, with O_f^+ the left pseudo-inverse. """
    O_f = as_matrix(O_f, "O_f")
    G_tilde_f = as_matrix(G_tilde_f, "G_tilde_f")
    if O_f.shape[0] != G_tilde_f.shape[0]:
        raise DimensionMismatch(
            f"O_f has {O_f.shape[0]} rows, G_tilde_f predicts {G_tilde_f.shape[0]}"
        )
    return pseudo_inverse_tall(O_f) @ (G_tilde_f @ np.asarray(Z_k, dtype=float).ravel())
