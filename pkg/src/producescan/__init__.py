"""Produce identification for self-checkout kiosks.

Numeric CNN kernels, a micro model zoo with cost accounting, softmax-head
transfer training, an accuracy/latency evaluation harness, dataset tooling,
and the kiosk session state machine with its HTTP service and CLI.
"""

from .tensor import ConvKernel, Tensor
from .models import (
    ClassificationResult,
    LayerSpec,
    Model,
    ModelSpec,
    build_micro_mobilenet,
    build_micro_standardnet,
    forward,
    load_model,
    mult_add_count,
    param_count,
    save_model,
)

__version__ = "0.1.0"

__all__ = [
    "ClassificationResult",
    "ConvKernel",
    "LayerSpec",
    "Model",
    "ModelSpec",
    "Tensor",
    "build_micro_mobilenet",
    "build_micro_standardnet",
    "forward",
    "load_model",
    "mult_add_count",
    "param_count",
    "save_model",
    "__version__",
]
