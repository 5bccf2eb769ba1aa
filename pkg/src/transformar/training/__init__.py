"""Optimiser, scheduler, training loop, checkpoints and attention export."""

from .attention_export import class_token_maps, export_attention
from .optim import AdamState, AdamW, ReduceLROnPlateau, adamw_step, lr_plateau
from .trainer import (
    TrainConfig,
    TrainResult,
    build_optimizer,
    cross_validate,
    fit,
    load_checkpoint,
    prepare_data,
    resolve_fold,
    save_checkpoint,
    train_run,
)

__all__ = [name for name in dir() if not name.startswith("_")]
