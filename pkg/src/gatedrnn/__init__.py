"""Minimal gated unit recurrent networks and gated baselines, trained by BPTT."""

from ._jit import JIT_ENABLED, backend
from .cells import CellKind, CellParams, CellState, init_params, madd_count, param_count, step
from .core import Rng
from .errors import ConfigError, DataError, GatedRNNError, NumericalError, ShapeError
from .network import LayerStack, SequenceBatch, build_stack, forward_sequence, backward_sequence
from .trainer import TrainConfig, gradcheck

__version__ = "0.1.0"

__all__ = [
    "JIT_ENABLED",
    "CellKind",
    "CellParams",
    "CellState",
    "ConfigError",
    "DataError",
    "GatedRNNError",
    "LayerStack",
    "NumericalError",
    "Rng",
    "SequenceBatch",
    "ShapeError",
    "TrainConfig",
    "backend",
    "backward_sequence",
    "build_stack",
    "forward_sequence",
    "gradcheck",
    "init_params",
    "madd_count",
    "param_count",
    "step",
]
