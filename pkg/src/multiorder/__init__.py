"""Adaptive multi-order meta-path graph convolution for heterogeneous graphs."""
from .graph import HeteroGraph, load_dataset, write_dataset
from .metapath import MetaPathSpec, build_first_order_set, enumerate_subsets
from .model import ModelParams, backward, finite_diff_check, forward
from .synth import SynthConfig, generate_synthetic
from .train import TrainConfig, RunRecord, train

__version__ = "0.1.0"

__all__ = [
    "HeteroGraph",
    "MetaPathSpec",
    "ModelParams",
    "RunRecord",
    "SynthConfig",
    "TrainConfig",
    "backward",
    "build_first_order_set",
    "enumerate_subsets",
    "finite_diff_check",
    "forward",
    "generate_synthetic",
    "load_dataset",
    "train",
    "write_dataset",
]
