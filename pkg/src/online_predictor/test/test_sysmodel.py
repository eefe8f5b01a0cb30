#! /usr/bin/env python3
# -*- coding: utf-8 -*-
"""
test_sysmodel.py: Test the state-space model, its structural matrices and simulation.
"""

import numpy as np
import pytest

from online_predictor.exceptions import (
    AssumptionViolated,
    DimensionMismatch,
    NumericalWarning,
)
from online_predictor.kalman import lyapunov_fixed_point, solve_riccati
from online_predictor.sysmodel import (
    PRESETS,
    StateSpaceModel,
    closed_loop_responses,
    get_preset,
    kalman_controllability,
    observability_matrix,
    simulate,
    theoretical_beta_floor,
    toeplitz_response,
    validate,
)


def test_model_checks():
    print("==== testing model checks ====")
    model = StateSpaceModel(A=[[0.5]], C=[[1.0]], Q=[[1.0]], R=[[1.0]])
    assert (model.n, model.m) == (1, 1)
    np.testing.assert_array_equal(model.Sigma0, [[0.0]])

    with pytest.raises(DimensionMismatch):
        StateSpaceModel(A=np.eye(2), C=[[1.0, 0.0, 0.0]], Q=np.eye(2), R=[[1.0]])
    with pytest.raises(DimensionMismatch):
        StateSpaceModel(A=np.eye(2), C=[[1.0, 0.0]], Q=np.eye(3), R=[[1.0]])
    with pytest.raises(AssumptionViolated):
        StateSpaceModel(A=[[0.5]], C=[[1.0]], Q=[[-1.0]], R=[[1.0]])
    with pytest.raises(AssumptionViolated):
        StateSpaceModel(A=[[0.5]], C=[[1.0]], Q=[[1.0]], R=[[0.0]])

    rebuilt = StateSpaceModel.from_dict(get_preset("STABLE4").to_dict())
    np.testing.assert_allclose(rebuilt.A, get_preset("STABLE4").A)
    assert rebuilt.name == "STABLE4"


def test_structural_matrices():
    print("==== testing observability and Toeplitz matrices ====")
    model = get_preset("ROTATION_MARGINAL")
    O = observability_matrix(model.A, model.C, 3)
    assert O.shape == (3, 2)
    np.testing.assert_allclose(O[2], model.C[0] @ model.A @ model.A)

    K = np.array([[0.3]])
    T = toeplitz_response([[0.5]], [[1.0]], K, 3)
    expected = np.array([[1.0, 0.0, 0.0], [0.3, 1.0, 0.0], [0.15, 0.3, 1.0]])
    np.testing.assert_allclose(T, expected)

    A, C, K = np.array([[0.5]]), np.array([[1.0]]), np.array([[0.3]])
    # oldest lag first: [(A-KC)^2 K, (A-KC) K, K]
    np.testing.assert_allclose(
        kalman_controllability(A, C, K, 3), [[0.2 ** 2 * 0.3, 0.2 * 0.3, 0.3]]
    )
    np.testing.assert_allclose(
        closed_loop_responses(A, C, K, 3), kalman_controllability(A, C, K, 3)
    )

    rng = np.random.default_rng(0)
    A = rng.standard_normal((4, 4)) / 2
    C = rng.standard_normal((2, 4))
    K = rng.standard_normal((4, 2)) / 4
    for k in range(1, 6):
        longer = observability_matrix(A, C, k + 1)
        assert longer.shape == ((k + 1) * 2, 4)
        np.testing.assert_array_equal(longer[: 2 * k], observability_matrix(A, C, k))
        np.testing.assert_allclose(
            longer[2 * k :], C @ np.linalg.matrix_power(A, k), atol=1e-12
        )

    p = 4
    closed_loop = A - K @ C
    G_p = closed_loop_responses(A, C, K, p)
    assert G_p.shape == (2, 2 * p)
    np.testing.assert_allclose(G_p, C @ kalman_controllability(A, C, K, p))
    for j in range(p):
        block = C @ np.linalg.matrix_power(closed_loop, p - 1 - j) @ K
        np.testing.assert_allclose(G_p[:, 2 * j : 2 * j + 2], block, atol=1e-12)


def test_presets():
    print("==== testing presets ====")
    eigenvalues = np.sort(np.abs(np.linalg.eigvals(get_preset("STABLE4").A)))
    np.testing.assert_allclose(eigenvalues, [0.5, 0.6, 0.8, 0.8], atol=1e-5)

    for name in PRESETS:
        model = get_preset(name)
        kalman = solve_riccati(model)
        if name == "INTEGRATOR2":
            with pytest.warns(NumericalWarning):
                validation = validate(model, kalman)
            assert validation.rho_A > 1
        else:
            validation = validate(model, kalman)
            assert validation.non_explosive
        assert validation.observable
        assert validation.controllable_process
        assert validation.controllable_gain
        assert validation.rho_closed_loop < 1

    with pytest.raises(KeyError):
        get_preset("UNSTABLE")


def test_validate_degenerate_models():
    print("==== testing validation of degenerate models ====")
    zero_dynamics = StateSpaceModel(A=[[0.0]], C=[[1.0]], Q=[[1.0]], R=[[1.0]])
    validation = validate(zero_dynamics)
    assert validation.observable
    assert validation.controllable_process
    assert validation.rho_A == 0.0
    assert validation.non_explosive
    assert validation.controllable_gain is None

    blind = StateSpaceModel(A=[[0.5]], C=[[0.0]], Q=[[1.0]], R=[[1.0]])
    assert not validate(blind).observable


def test_simulate():
    print("==== testing simulation ====")
    model = get_preset("ROTATION_MARGINAL")
    traj = simulate(model, 50, seed=3)
    assert traj.states.shape == (51, 2)
    assert traj.observations.shape == (51, 1)
    assert traj.N == 50
    # Sigma0 = 0
    np.testing.assert_array_equal(traj.states[0], 0)

    again = simulate(model, 50, seed=3)
    np.testing.assert_array_equal(traj.observations, again.observations)
    other = simulate(model, 50, seed=4)
    assert not np.allclose(traj.observations, other.observations)

    zeros = (np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((1, 1)))
    silent = simulate(model, 20, seed=3, noise_factors=zeros)
    np.testing.assert_array_equal(silent.observations, 0)

    with pytest.raises(ValueError):
        simulate(model, 0, seed=3)


def test_simulated_variance():
    print("==== testing stationary simulation statistics ====")
    # x_{k+1} = x_k / 2 + w_k has variance 1 / (1 - 1/4)
    traj = simulate(get_preset("SCALAR_STABLE"), 100000, seed=1)
    states = traj.states[1000:, 0]
    assert np.mean(states ** 2) == pytest.approx(4 / 3, rel=0.05)
    assert np.var(traj.observations[1000:, 0]) == pytest.approx(7 / 3, rel=0.05)

    model = get_preset("STABLE4")
    states = simulate(model, 100000, seed=2).states[1000:]
    empirical = states.T @ states / states.shape[0]
    stationary = lyapunov_fixed_point(model.A, model.Q)
    error = np.linalg.norm(empirical - stationary) / np.linalg.norm(stationary)
    assert error <= 0.1


def test_beta_floor():
    print("==== testing beta floor ====")
    model = get_preset("SCALAR_STABLE")
    kalman = solve_riccati(model)
    floor = theoretical_beta_floor(kalman, model.kappa)
    assert floor == pytest.approx(1 / np.log(1 / kalman.rho_closed_loop))
    assert theoretical_beta_floor(kalman, None) is None


if __name__ == "__main__":
    test_model_checks()
    test_structural_matrices()
    test_presets()
    test_validate_degenerate_models()
    test_simulate()
    test_simulated_variance()
    test_beta_floor()
    print("done")
