"""PyTorch bridge for the gramprune engine."""

__version__ = "0.1.0"

from .data import stratified_batch, synthetic_dataset
from .extract import ExtractionSession, extract_features
from .finetune import evaluate, finetune_smoke, train
from .fmap import read_fmap, write_fmap
from .models import ToyConvNet, ToyProjectionNet, ToyResidualNet
from .surgery import apply_masks, count_parameters, load_plan
from .tracing import TracedModel, trace_model

__all__ = [
    "ExtractionSession",
    "ToyConvNet",
    "ToyProjectionNet",
    "ToyResidualNet",
    "TracedModel",
    "apply_masks",
    "count_parameters",
    "evaluate",
    "extract_features",
    "finetune_smoke",
    "load_plan",
    "read_fmap",
    "stratified_batch",
    "synthetic_dataset",
    "trace_model",
    "train",
    "write_fmap",
]
