"""Coupled exclusion process with reservoirs: simulation, Gibbs sampling and the limiting PDE."""
from .model import ModelParams

__version__ = "0.1.0"

__all__ = ["ModelParams", "__version__"]
