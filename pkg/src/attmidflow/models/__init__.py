"""Flow estimation model zoo and checkpoint files."""

from .checkpoint import load_checkpoint, load_model, save_checkpoint
from .flownet import (
    ZOO,
    Extractor,
    FlowNet,
    FlowPyramid,
    LayerRow,
    ModelSpec,
    build_model,
    layer_report,
    model_spec,
    param_count,
    spec_name,
)

__all__ = [
    "ZOO", "Extractor", "FlowNet", "FlowPyramid", "LayerRow", "ModelSpec", "build_model",
    "layer_report", "model_spec", "param_count", "spec_name",
    "save_checkpoint", "load_checkpoint", "load_model",
]
