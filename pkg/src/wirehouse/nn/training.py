"""Learning-rate schedule, smoothed coordinate targets, losses and the train config."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr_max: float = 1e-4
    lr_min: float = 1e-6
    warmup_epochs: float = 10
    total_epochs: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.lr_min <= self.lr_max:
            raise ValueError("need 0 < lr_min <= lr_max")
        if not 0 < self.warmup_epochs < self.total_epochs:
            raise ValueError("need 0 < warmup_epochs < total_epochs")


def lr_at(t: float, cfg: TrainConfig) -> float:
    """Linear warmup to lr_max over t0 epochs, cosine decay to T, floor at lr_min."""
    t0, T = cfg.warmup_epochs, cfg.total_epochs
    if not 0 <= t <= T:
        raise ValueError(f"epoch {t} outside [0, {T}]")
    if t <= t0:
        lr = cfg.lr_max * t / t0
    else:
        lr = cfg.lr_max * 0.5 * (1.0 + math.cos((t - t0) / (T - t0) * math.pi))
    return max(cfg.lr_min, lr)


def smoothed_coordinate_targets(true_bin, sigma: float = 1.0, bins: int = 128) -> np.ndarray:
    """Discrete Gaussian over bins, cut at 3 sigma and renormalized.

    Accepts a scalar or an integer array; the bin axis is appended last.
    """
    b = np.asarray(true_bin, dtype=np.int64)
    if np.any(b < 0) or np.any(b >= bins):
        raise ValueError("bin out of range")
    k = np.arange(bins)
    diff = (k - b[..., None]).astype(np.float64)
    if sigma <= 0:
        w = (diff == 0).astype(np.float64)
    else:
        w = np.exp(-0.5 * (diff / sigma) ** 2)
        w[np.abs(diff) > 3 * sigma] = 0.0
    return w / w.sum(axis=-1, keepdims=True)


def soft_cross_entropy(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """-sum_k y_k log softmax(logits)_k over the last axis (no reduction)."""
    return -(target * torch.log_softmax(logits, dim=-1)).sum(-1)


def reconstruct_loss(logits: torch.Tensor, target_dist: torch.Tensor) -> torch.Tensor:
    """Coordinate loss for logits (N, 6, 128): mean over 3 coords, 2 endpoints, N."""
    ce = soft_cross_entropy(logits, target_dist)  # (N, 6)
    per_vertex = ce.view(-1, 2, 3).mean(-1)
    return per_vertex.mean(-1).mean()


def token_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy over every predicted slot (codes and the stop slot)."""
    logp = torch.log_softmax(logits, dim=-1)
    return -logp.gather(-1, targets.view(-1, 1)).mean()


def make_optimizer(params, cfg: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=cfg.lr_max, betas=(cfg.beta1, cfg.beta2), eps=cfg.eps)


def set_lr(opt: torch.optim.Optimizer, lr: float) -> None:
    for group in opt.param_groups:
        group["lr"] = lr


def check_finite(value: float, epoch: int, what: str = "loss") -> None:
    if not math.isfinite(value):
        raise TrainingDiverged(f"{what} became {value} at epoch {epoch}")


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)

    def column(self, key: str) -> list:
        return [row[key] for row in self.epochs]


def epoch_batches(n: int, batch_size: int, seed: int, epoch: int) -> list:
    order = np.random.default_rng([seed, epoch]).permutation(n)
    return [order[i:i + batch_size].tolist() for i in range(0, n, batch_size)]
