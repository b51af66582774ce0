from .model import (
    PATCH,
    ToyHyper,
    ToyModel,
    apply_mask,
    decode,
    densify_pyramid,
    forward,
    grad_check,
    init_model,
    level_visibility,
    load_model,
    loss_and_grads,
    pixel_visibility,
    recon_loss,
    save_model,
    sparse_encode,
    train_step,
)
from .ops import densify

__all__ = [
    "PATCH",
    "ToyHyper",
    "ToyModel",
    "apply_mask",
    "decode",
    "densify",
    "densify_pyramid",
    "forward",
    "grad_check",
    "init_model",
    "level_visibility",
    "load_model",
    "loss_and_grads",
    "pixel_visibility",
    "recon_loss",
    "save_model",
    "sparse_encode",
    "train_step",
]
