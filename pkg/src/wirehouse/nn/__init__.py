from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .layers import (AttentionLayer, CausalAttentionStack, GraphConv, LocalAttentionStack,
                     MultiHeadAttention, ResidualConv1dStack, scatter_mean)
from .training import (TrainConfig, TrainingDiverged, lr_at, reconstruct_loss,
                       smoothed_coordinate_targets, token_loss)

__all__ = [
    "CheckpointError", "load_checkpoint", "save_checkpoint", "AttentionLayer",
    "CausalAttentionStack", "GraphConv", "LocalAttentionStack", "MultiHeadAttention",
    "ResidualConv1dStack", "scatter_mean", "TrainConfig", "TrainingDiverged", "lr_at",
    "reconstruct_loss", "smoothed_coordinate_targets", "token_loss",
]
