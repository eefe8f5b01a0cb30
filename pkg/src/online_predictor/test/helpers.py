#! /usr/bin/env python3
# -*- coding: utf-8 -*-

"""
helpers.py: Simulated runs shared by the predictor, analysis and cli tests.
"""

from online_predictor.kalman import run_filter, stationary_model
from online_predictor.sysmodel import get_preset, simulate


def stationary_run(preset, n_observations, seed=0):
    """ (model with Sigma0 = P, Kalman solution, y_0 ... y_{L-1}, filter run) """
    model, kalman = stationary_model(get_preset(preset))
    traj = simulate(model, n_observations - 1, seed)
    run = run_filter(kalman, model, traj)
    return model, kalman, traj, run


def write_config(directory, text, name="config.yaml"):
    path = directory / name
    path.write_text(text)
    return path
