"""Desk-scale multi-head hand-object network.

Submodules: `autograd` (reverse-mode tensor engine on numpy), `model`
(backbone, pyramid, heads, fusion, checkpoints), `losses` (the seven-term
training objective), `data` (scene loading and batching), `train`
(regimes and the optimization loop), `infer` (detections for matching
and evaluation).
"""

from .autograd import Tensor
from .infer import Detection, infer
from .losses import LossBreakdown, compute_loss
from .model import Model, ModelConfig, load_checkpoint, save_checkpoint
from .train import TrainConfig, train

__all__ = [
    "Tensor", "Detection", "infer", "LossBreakdown", "compute_loss",
    "Model", "ModelConfig", "load_checkpoint", "save_checkpoint",
    "TrainConfig", "train",
]
