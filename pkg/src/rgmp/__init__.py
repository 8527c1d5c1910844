"""Randomized Gaussian message passing for sparsified C-RAN uplink detection."""

__version__ = "0.1.0"

from .engine import EngineParams, RunTrace, Schedule, run
from .geometry import NetworkConfig, make_instance, sparse_from_matrix
from .graph import build_graph
from .spectral import analyze, expected_operator, spectral_radius

__all__ = [
    "EngineParams",
    "NetworkConfig",
    "RunTrace",
    "Schedule",
    "analyze",
    "build_graph",
    "expected_operator",
    "make_instance",
    "run",
    "sparse_from_matrix",
    "spectral_radius",
]
