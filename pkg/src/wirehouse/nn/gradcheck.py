"""Central finite-difference gradient checks for torch parameters and inputs."""

from __future__ import annotations

import numpy as np
import torch


def numeric_grad(fn, tensor: torch.Tensor, indices, h: float = 1e-5) -> np.ndarray:
    out = []
    flat = tensor.data.view(-1)
    with torch.no_grad():
        for i in indices:
            old = flat[i].item()
            flat[i] = old + h
            fp = float(fn())
            flat[i] = old - h
            fm = float(fn())
            flat[i] = old
            out.append((fp - fm) / (2 * h))
    return np.array(out)


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-10) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)


def check_gradients(fn, tensors: dict, h: float = 1e-5, max_entries: int = 12,
                    seed: int = 0) -> dict:
    """Relative error between autograd and central differences per tensor.

    ``fn`` returns a scalar tensor. Up to ``max_entries`` random coordinates
    of each tensor are probed.
    """
    rng = np.random.default_rng(seed)
    for t in tensors.values():
        t.grad = None
    loss = fn()
    grads = torch.autograd.grad(loss, list(tensors.values()), allow_unused=True)
    errors = {}
    for (name, t), g in zip(tensors.items(), grads):
        n = t.numel()
        idx = np.arange(n) if n <= max_entries else rng.choice(n, max_entries, replace=False)
        analytic = (np.zeros(len(idx)) if g is None
                    else g.detach().reshape(-1)[torch.as_tensor(idx)].numpy())
        numeric = numeric_grad(lambda: fn().detach(), t, idx.tolist(), h)
        errors[name] = relative_error(analytic, numeric)
    return errors
