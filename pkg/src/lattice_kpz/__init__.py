"""Lattice KPZ / stochastic Burgers dynamics: simulation, statistics, exact algebra and bounds."""
from .core import (BlowUpError, ModelParameters, ParameterError, SeedSpec, SlopeField,
                   coupling_lambda, mean_current_theory, susceptibility)

__version__ = "0.1.0"

__all__ = ["BlowUpError", "ModelParameters", "ParameterError", "SeedSpec", "SlopeField",
           "coupling_lambda", "mean_current_theory", "susceptibility", "__version__"]
