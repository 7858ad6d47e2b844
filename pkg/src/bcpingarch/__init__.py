"""Bivariate conditional Poisson INGARCH(1,1) models.

Simulation, conditional maximum likelihood estimation, standard errors,
tests for contemporaneous dependence and one-step-ahead forecasting.
"""
from ._backend import BACKEND
from .bcp_dist import BcpParams
from .estimation import FitConfig, FitResult, fit, log_likelihood, score
from .exceptions import (BcpError, ConvergenceError, DataError, DomainError,
                         NonStationaryError, NumericalError, NumericalWarning, SamplingError)
from .process import LambdaPath, ModelParams, SeriesPair, simulate

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BcpParams", "FitConfig", "FitResult", "fit", "log_likelihood", "score",
    "LambdaPath", "ModelParams", "SeriesPair", "simulate", "BcpError", "ConvergenceError",
    "DataError", "DomainError", "NonStationaryError", "NumericalError", "NumericalWarning",
    "SamplingError",
]
