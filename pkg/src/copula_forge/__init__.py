"""Generative Archimedean and hierarchical Archimedean copulas built on
empirical Laplace transforms of trainable latent samplers."""

__version__ = "0.1.0"

from .ac import AcModel
from .families import ParametricGenerator
from .hac import HacModel, Subordinator
from .laplace import EmpiricalGenerator
from .mlp import GeneratorNet, NetArchitecture

__all__ = [
    "AcModel",
    "EmpiricalGenerator",
    "GeneratorNet",
    "HacModel",
    "NetArchitecture",
    "ParametricGenerator",
    "Subordinator",
    "__version__",
]
