"""Reference trainer for dense encoder-decoder architecture descriptors."""

from .data import CLASS_NAMES, NUM_CLASSES, DataConfig, ShapesDataset, make_arrays
from .net import DenseEncDec, build_network, conv_channel_walk
from .server import handle_request, serve
from .train import TrainSettings, last_k_mean, train_and_score

__all__ = [
    "CLASS_NAMES",
    "NUM_CLASSES",
    "DataConfig",
    "DenseEncDec",
    "ShapesDataset",
    "TrainSettings",
    "build_network",
    "conv_channel_walk",
    "handle_request",
    "last_k_mean",
    "make_arrays",
    "serve",
    "train_and_score",
]

__version__ = "0.1.0"
