#! /usr/bin/env python3
# -*- coding: utf-8 -*-

"""
parameters.py: Numerical defaults shared by all modules. Every function takes
these as keyword defaults, so they can be overridden per call.
"""

# linear algebra
PIVOT_TOL = 1e-14  # relative to the Frobenius norm of the system matrix
RANK_TOL = 1e-10  # relative to the leading singular value
PINV_TOL = 1e-12  # sigma_min(M^T M) relative to ||M||_2^2
MINPOLY_TOL = 1e-8  # relative residual of the vectorized power projection
GELFAND_K = 512  # matrix power used for the spectral radius estimate
OVERFLOW_LIMIT = 1e150  # rescale powers when entries exceed this
PSD_JITTER = 1e-12  # diagonal jitter for Cholesky of singular PSD matrices
PSD_TOL = 1e-10  # allowed negative eigenvalue, relative to the spectral norm

# model validation
# the Gelfand estimate is upper-biased, therefore rho(A) <= 1 is checked with slack.
NON_EXPLOSIVE_SLACK = 1e-6

# Riccati / Lyapunov iterations
RICCATI_TOL = 1e-12  # relative Frobenius change per iteration
RICCATI_MAX_ITER = 10 ** 6
RICCATI_RESIDUAL_TOL = 1e-9
LYAPUNOV_TOL = 1e-12
LYAPUNOV_MAX_ITER = 10 ** 6

# online predictor
BETA = 2.0
LAMBDA = 1.0
REFRESH_TOL = 1e-6  # allowed ||V V^-1 - I||_F and log-det drift at epoch boundaries

# diagnostics
WHITENESS_FACTOR = 4.0  # correlations must stay below WHITENESS_FACTOR / sqrt(N)
PE_GRID_RATIO = 1.25  # ratio of the geometric grid of check points
LOGDET_SLACK = 1e-9
FIR_JITTER = 1e-10  # trace jitter for rank-deficient FIR Gram matrices
