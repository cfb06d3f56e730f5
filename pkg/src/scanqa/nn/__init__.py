from .dft import dft2, dft_features
from .engine import ParamStore, Tape, Var, backward_total, head_grad
from .model import ModelConfig, forward, init_model
from .optim import AdamState, adam_step, cosine_lr, init_adam

__all__ = [
    "AdamState",
    "ModelConfig",
    "ParamStore",
    "Tape",
    "Var",
    "adam_step",
    "backward_total",
    "cosine_lr",
    "dft2",
    "dft_features",
    "forward",
    "head_grad",
    "init_adam",
    "init_model",
]
