"""Losses, region handling and optimisation loops."""
from .losses import (
    TERMS,
    LossValues,
    LossWeights,
    grid_offsets,
    loss_cycle,
    loss_data,
    loss_phys,
    loss_tv,
    total_loss,
)
from .loop import (
    LOG_COLUMNS,
    LossLog,
    PhysicsContext,
    TrainConfig,
    batch_objective,
    physics_context,
    train,
    train_branched,
)
from .occlusion import OcclusionMap, compute_occlusion_map, loss_occ
from .regions import BoundaryMask, CollocationSet, classify_regions, nearest_index

__all__ = [
    "TERMS", "LossValues", "LossWeights", "grid_offsets", "loss_cycle", "loss_data",
    "loss_phys", "loss_tv", "total_loss", "LOG_COLUMNS", "LossLog", "PhysicsContext",
    "TrainConfig", "batch_objective", "physics_context", "train", "train_branched",
    "OcclusionMap", "compute_occlusion_map", "loss_occ", "BoundaryMask", "CollocationSet",
    "classify_regions", "nearest_index",
]
