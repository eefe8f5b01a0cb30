#! /usr/bin/env python3
# -*- coding: utf-8 -*-

"""
sysmodel.py: State-space model x_{k+1} = A x_k + w_k, y_k = C x_k + v_k, its
validation, seeded simulation and structural block matrices.
"""

from dataclasses import dataclass, field, replace
import logging
from typing import Optional
import warnings

import numpy as np

from .exceptions import AssumptionViolated, DimensionMismatch, NumericalWarning
from .linalg import (
    as_matrix,
    gaussian_sample,
    is_psd,
    make_rngs,
    numerical_rank,
    psd_cholesky,
    psd_sqrt,
    spectral_radius_gelfand,
)
from .parameters import GELFAND_K, NON_EXPLOSIVE_SLACK, RANK_TOL

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    A: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Sigma0: Optional[np.ndarray] = None  # initial state covariance, zero if omitted
    name: str = "custom"
    kappa: Optional[int] = None  # largest Jordan block of A, metadata only

    def __post_init__(self):
        for key in ["A", "C", "Q", "R"]:
            object.__setattr__(self, key, as_matrix(getattr(self, key), key))
        if self.Sigma0 is None:
            object.__setattr__(self, "Sigma0", np.zeros((self.n, self.n)))
        else:
            object.__setattr__(self, "Sigma0", as_matrix(self.Sigma0, "Sigma0"))
        check_dimensions(self)

        if not is_psd(self.Q):
            raise AssumptionViolated("Q must be symmetric positive semi-definite")
        if not is_psd(self.Sigma0):
            raise AssumptionViolated("Sigma0 must be symmetric positive semi-definite")
        if not is_psd(self.R, strict=True):
            raise AssumptionViolated("R must be symmetric positive definite")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.C.shape[0]

    def to_dict(self):
        dict_ = {
            key: getattr(self, key).tolist() for key in ["A", "C", "Q", "R", "Sigma0"]
        }
        dict_["name"] = self.name
        dict_["kappa"] = self.kappa
        return dict_

    @classmethod
    def from_dict(cls, dict_):
        return cls(
            A=dict_["A"],
            C=dict_["C"],
            Q=dict_["Q"],
            R=dict_["R"],
            Sigma0=dict_.get("Sigma0"),
            name=dict_.get("name", "custom"),
            kappa=dict_.get("kappa"),
        )


@dataclass(frozen=True)
class ModelValidation:
    observable: bool
    controllable_process: bool
    rho_A: float
    non_explosive: bool
    controllable_gain: Optional[bool] = None  # requires the Kalman gain
    rho_closed_loop: Optional[float] = None

    def to_dict(self):
        return dict(
            observable=self.observable,
            controllable_process=self.controllable_process,
            controllable_gain=self.controllable_gain,
            rho_A=self.rho_A,
            rho_closed_loop=self.rho_closed_loop,
            non_explosive=self.non_explosive,
        )


@dataclass(frozen=True, eq=False)
class Trajectory:
    seed: int
    states: np.ndarray = field(repr=False)  # x_0 ... x_N, shape (N+1, n)
    observations: np.ndarray = field(repr=False)  # y_0 ... y_N, shape (N+1, m)

    @property
    def N(self):
        return self.observations.shape[0] - 1


def check_dimensions(model):
    n = model.A.shape[0]
    expected = dict(A=(n, n), Q=(n, n), Sigma0=(n, n))
    if model.A.shape[1] != n:
        raise DimensionMismatch(f"A must be square, got {model.A.shape}")
    if model.C.shape[1] != n:
        raise DimensionMismatch(f"C must have {n} columns, got {model.C.shape}")
    m = model.C.shape[0]
    expected["R"] = (m, m)
    for key, shape in expected.items():
        if getattr(model, key).shape != shape:
            raise DimensionMismatch(
                f"{key} must have shape {shape}, got {getattr(model, key).shape}"
            )


def observability_matrix(A, C, k):
    """ Stacked [C; CA; ...; CA^(k-1)], of shape (k m, n). """
    A, C = as_matrix(A), as_matrix(C)
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    blocks = [C]
    for __ in range(k - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def controllability_matrix(A, B, k):
    """ [B, AB, ..., A^(k-1) B]. """
    A, B = as_matrix(A), as_matrix(B)
    blocks = [B]
    for __ in range(k - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def kalman_controllability(A, C, K, p):
    """ [(A-KC)^(p-1) K, ..., (A-KC) K, K], of shape (n, m p). """
    A, C, K = as_matrix(A), as_matrix(C), as_matrix(K)
    if p < 1:
        raise ValueError(f"p must be at least 1, got {p}")
    closed_loop = A - K @ C
    blocks = [K]
    for __ in range(p - 1):
        blocks.append(closed_loop @ blocks[-1])
    return np.hstack(blocks[::-1])


def closed_loop_responses(A, C, K, p):
    """ G_p = [C(A-KC)^(p-1) K, ..., CK], of shape (m, m p). """
    return as_matrix(C) @ kalman_controllability(A, C, K, p)


def toeplitz_response(A, C, K, f):
    """
    Lower block-triangular Toeplitz matrix of shape (f m, f m) with identity
    diagonal blocks and C A^(j-1) K on the j-th block sub-diagonal.
    """
    A, C, K = as_matrix(A), as_matrix(C), as_matrix(K)
    if f < 1:
        raise ValueError(f"f must be at least 1, got {f}")
    m = C.shape[0]
    markov = [np.eye(m)]
    power_K = K
    for __ in range(f - 1):
        markov.append(C @ power_K)
        power_K = A @ power_K

    T = np.zeros((f * m, f * m))
    for i in range(f):
        for j in range(i + 1):
            T[i * m : (i + 1) * m, j * m : (j + 1) * m] = markov[i - j]
    return T


def validate(model, kalman=None, slack=NON_EXPLOSIVE_SLACK, gelfand_k=GELFAND_K):
    """
    Check observability, controllability and non-explosiveness of the model.

    :param kalman: KalmanSolution, needed for the (A, K) controllability and rho(A-KC).
    """
    check_dimensions(model)
    n = model.n

    observable = numerical_rank(observability_matrix(model.A, model.C, n)) == n
    controllable_process = (
        numerical_rank(controllability_matrix(model.A, psd_sqrt(model.Q), n)) == n
    )
    rho_A = spectral_radius_gelfand(model.A, k=gelfand_k)
    non_explosive = rho_A <= 1 + slack
    if not non_explosive:
        warnings.warn(
            f"Gelfand estimate of rho(A) for {model.name} is {rho_A:.6f} > 1 + {slack}; "
            "the estimate is upper-biased for Jordan blocks, continuing.",
            NumericalWarning,
        )

    controllable_gain = None
    rho_closed_loop = None
    if kalman is not None:
        controllable_gain = bool(
            numerical_rank(controllability_matrix(model.A, kalman.K, n), tol=RANK_TOL)
            == n
        )
        rho_closed_loop = kalman.rho_closed_loop

    return ModelValidation(
        observable=bool(observable),
        controllable_process=bool(controllable_process),
        controllable_gain=controllable_gain,
        rho_A=float(rho_A),
        rho_closed_loop=rho_closed_loop,
        non_explosive=bool(non_explosive),
    )


def simulate(model, N, seed, noise_factors=None):
    """
    Simulate N steps from x_0 ~ N(0, Sigma0).

    Initial state, process noise and measurement noise use three independent
    generators spawned from seed.

    :param noise_factors: optional (L_Sigma0, L_Q, L_R) Cholesky factors replacing
    the ones computed from the model, e.g. zeros for noise-free runs.
    """
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N}")
    n, m = model.n, model.m
    if noise_factors is None:
        noise_factors = (
            psd_cholesky(model.Sigma0),
            psd_cholesky(model.Q),
            psd_cholesky(model.R),
        )
    L_sigma0, L_Q, L_R = noise_factors

    rng_x0, rng_w, rng_v = make_rngs(seed, 3)
    x0 = gaussian_sample(np.zeros(n), L_sigma0, rng_x0)
    process_noise = gaussian_sample(np.zeros(n), L_Q, rng_w, size=N)
    measurement_noise = gaussian_sample(np.zeros(m), L_R, rng_v, size=N + 1)

    states = np.empty((N + 1, n))
    states[0] = x0
    A = model.A
    for k in range(N):
        states[k + 1] = A @ states[k] + process_noise[k]
    observations = states @ model.C.T + measurement_noise
    logger.debug("simulated %s for seed %s, N=%d", model.name, seed, N)
    return Trajectory(seed=seed, states=states, observations=observations)


def with_stationary_prior(model, kalman):
    """ The model with Sigma0 := P, so that the steady-state gain is exact from k=0. """
    return replace(model, Sigma0=kalman.P)


def theoretical_beta_floor(kalman, kappa):
    """ kappa / log(1 / rho(A-KC)), the scale of the past-horizon constant. """
    if kappa is None:
        return None
    rho = kalman.rho_closed_loop
    if rho <= 0:
        return 0.0
    if rho >= 1:
        return float("inf")
    return float(kappa / np.log(1.0 / rho))


def _rotation(theta):
    return np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])


# A = [[B1, X], [0, B2]] with B1 = 0.8 rot(0.4) and B2 upper triangular;
# eigenvalues 0.8 exp(+-0.4i), 0.6, -0.5.
STABLE4_A = [
    [0.736849, -0.311535, 0.2, -0.1],
    [0.311535, 0.736849, 0.05, 0.3],
    [0.0, 0.0, 0.6, 0.3],
    [0.0, 0.0, 0.0, -0.5],
]
STABLE4_C = [[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]]

PRESETS = {
    "SCALAR_STABLE": lambda: StateSpaceModel(
        A=[[0.5]], C=[[1.0]], Q=[[1.0]], R=[[1.0]], name="SCALAR_STABLE", kappa=1,
    ),
    "ROTATION_MARGINAL": lambda: StateSpaceModel(
        A=_rotation(0.7),
        C=[[1.0, 0.0]],
        Q=np.eye(2),
        R=[[1.0]],
        name="ROTATION_MARGINAL",
        kappa=1,
    ),
    "INTEGRATOR2": lambda: StateSpaceModel(
        A=[[1.0, 1.0], [0.0, 1.0]],
        C=[[1.0, 0.0]],
        Q=np.eye(2),
        R=[[1.0]],
        name="INTEGRATOR2",
        kappa=2,
    ),
    "STABLE4": lambda: StateSpaceModel(
        A=STABLE4_A, C=STABLE4_C, Q=np.eye(4), R=np.eye(2), name="STABLE4", kappa=1,
    ),
}


def get_preset(name):
    """ Preset model with Sigma0 = 0; see kalman.stationary_model for Sigma0 = P. """
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name}, available: {sorted(PRESETS)}") from None
