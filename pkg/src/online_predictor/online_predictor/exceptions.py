#! /usr/bin/env python3
# -*- coding: utf-8 -*-

"""
exceptions.py: Exception hierarchy. NumericalError maps to exit code 3 and
ConfigError to exit code 2 in the command line tool.
"""


class OnlinePredictorError(Exception):
    pass


class NumericalError(OnlinePredictorError, ArithmeticError):
    pass


class SingularMatrix(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class NoConvergence(NumericalError):
    """ Iteration cap reached; carries the best estimate available. """

    def __init__(self, message, estimate=None, iterations=None):
        super().__init__(message)
        self.estimate = estimate
        self.iterations = iterations


class NumericalWarning(RuntimeWarning):
    pass


class ModelError(OnlinePredictorError, ValueError):
    pass


class DimensionMismatch(ModelError):
    pass


class AssumptionViolated(ModelError):
    pass


class LengthMismatch(ModelError):
    pass


class InvalidSchedule(ModelError):
    pass


class IndexOutOfRange(OnlinePredictorError, IndexError):
    pass


class ConfigError(OnlinePredictorError, ValueError):
    pass


class ConfigParseError(ConfigError):
    def __init__(self, message, line=None, field=None):
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field is not None:
            location.append(f"field '{field}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.line = line
        self.field = field


class ConfigValidationError(ConfigError):
    def __init__(self, message, invariant=None):
        super().__init__(message)
        self.invariant = invariant


class ExperimentError(OnlinePredictorError):
    """ Error raised inside one seed of an experiment, tagged with seed and phase. """

    def __init__(self, seed, phase, error):
        super().__init__(f"seed {seed}, phase {phase}: {type(error).__name__}: {error}")
        self.seed = seed
        self.phase = phase
        self.error = error

    def __reduce__(self):
        # keeps the exception picklable across worker processes
        return (type(self), (self.seed, self.phase, self.error))
