"""Dynamic SLAM back-end: world-centric and object-centric factor graphs on SE(3)."""

from .builders import BuildOptions, Formulation, NoiseConfig, build
from .dataset import SceneDataset, load, parse, save, serialize
from .se3 import Pose
from .simulator import SceneConfig, generate
from .solver import IndeterminateSystemError, SolverConfig, solve

__version__ = "0.1.0"

__all__ = [
    "BuildOptions",
    "Formulation",
    "IndeterminateSystemError",
    "NoiseConfig",
    "Pose",
    "SceneConfig",
    "SceneDataset",
    "SolverConfig",
    "build",
    "generate",
    "load",
    "parse",
    "save",
    "serialize",
    "solve",
]
