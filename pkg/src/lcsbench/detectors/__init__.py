"""Numpy autoencoders: dense (ANN) and recurrent (GRU)."""

from lcsbench.detectors.layers import gru_cell
from lcsbench.detectors.models import (
    AnnSpec,
    GruSpec,
    Network,
    ann_forward,
    build,
    make_windows,
    param_shapes,
    parameter_count,
    reconstruction_error,
    spec_from_dict,
)
from lcsbench.detectors.training import TrainConfig, read_loss_curve, train, write_loss_curve
from lcsbench.detectors.weights import WeightsBundle

__all__ = [
    "AnnSpec",
    "GruSpec",
    "Network",
    "TrainConfig",
    "WeightsBundle",
    "ann_forward",
    "build",
    "gru_cell",
    "make_windows",
    "param_shapes",
    "parameter_count",
    "read_loss_curve",
    "reconstruction_error",
    "spec_from_dict",
    "train",
    "write_loss_curve",
]
