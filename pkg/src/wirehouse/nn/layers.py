"""Layers for the wireframe networks: SAGE-style graph conv, block-local and
causal multi-head attention, and a pre-activation 1D residual conv stack."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

DTYPE = torch.float64


def scatter_mean(values: torch.Tensor, index: torch.Tensor, size: int) -> torch.Tensor:
    """Mean of ``values`` rows grouped by ``index``; empty groups give zeros."""
    out = values.new_zeros((size,) + values.shape[1:])
    out = out.index_add(0, index, values)
    count = torch.bincount(index, minlength=size).to(values.dtype).clamp(min=1)
    return out / count.view(-1, *([1] * (values.dim() - 1)))


def adjacency_index(adjacency) -> tuple[torch.Tensor, torch.Tensor]:
    """(target, source) index tensors for a list of neighbour lists."""
    tgt, src = [], []
    for i, nbrs in enumerate(adjacency):
        tgt.extend([i] * len(nbrs))
        src.extend(nbrs)
    return torch.tensor(tgt, dtype=torch.long), torch.tensor(src, dtype=torch.long)


class GraphConv(nn.Module):
    """out_i = act(W_self x_i + W_neigh mean_{j in adj(i)} x_j + b)."""

    def __init__(self, d_in: int, d_out: int, activation: bool = True):
        super().__init__()
        self.self_lin = nn.Linear(d_in, d_out, dtype=DTYPE)
        self.neigh_lin = nn.Linear(d_in, d_out, bias=False, dtype=DTYPE)
        self.activation = activation

    def forward(self, x: torch.Tensor, edges: tuple[torch.Tensor, torch.Tensor]) -> torch.Tensor:
        tgt, src = edges
        neigh = scatter_mean(x[src], tgt, x.shape[0]) if len(tgt) else torch.zeros_like(x)
        out = self.self_lin(x) + self.neigh_lin(neigh)
        return F.relu(out) if self.activation else out


def block_mask(length: int, window: int) -> torch.Tensor:
    """True where query i may attend key j: both in the same fixed block."""
    blk = torch.arange(length) // window
    return blk[:, None] == blk[None, :]


def causal_mask(length: int) -> torch.Tensor:
    return torch.ones(length, length, dtype=torch.bool).tril()


def padded_mask(base: torch.Tensor, valid: torch.Tensor | None) -> torch.Tensor:
    """Combine an (L, L) pattern with a (B, L) key-validity mask into (B, L, L).

    Every position may always attend to itself so padded rows stay finite.
    """
    if valid is None:
        return base
    eye = torch.eye(base.shape[0], dtype=torch.bool)
    return (base[None] & valid[:, None, :]) | eye[None]


def lengths_to_valid(lengths, max_len: int) -> torch.Tensor:
    return torch.arange(max_len)[None, :] < torch.as_tensor(lengths)[:, None]


class MultiHeadAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads:
            raise ValueError(f"dim {dim} is not divisible by {heads} heads")
        self.heads = heads
        self.qkv = nn.Linear(dim, 3 * dim, dtype=DTYPE)
        self.out = nn.Linear(dim, dim, dtype=DTYPE)

    def weights(self, x: torch.Tensor, mask: torch.Tensor | None) -> tuple:
        """Attention probabilities (..., heads, L, L) and values (..., heads, L, head_dim).

        ``x`` is (L, dim) or (B, L, dim); ``mask`` is (L, L) or (B, L, L).
        """
        *lead, L, dim = x.shape
        hd = dim // self.heads
        q, k, v = self.qkv(x).split(dim, dim=-1)
        q, k, v = (t.reshape(*lead, L, self.heads, hd).transpose(-3, -2) for t in (q, k, v))
        scores = q @ k.transpose(-1, -2) / math.sqrt(hd)
        if mask is not None:
            scores = scores.masked_fill(~mask.unsqueeze(-3), float("-inf"))
        return torch.softmax(scores, dim=-1), v

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        attn, v = self.weights(x, mask)
        return self.out((attn @ v).transpose(-3, -2).reshape(x.shape))


class AttentionLayer(nn.Module):
    """Post-norm transformer layer: LN(x + MHA(x)) then LN(x + FFN(x))."""

    def __init__(self, dim: int, heads: int, ff_mult: int = 2):
        super().__init__()
        self.attn = MultiHeadAttention(dim, heads)
        self.norm1 = nn.LayerNorm(dim, dtype=DTYPE)
        self.ff = nn.Sequential(nn.Linear(dim, ff_mult * dim, dtype=DTYPE), nn.GELU(),
                                nn.Linear(ff_mult * dim, dim, dtype=DTYPE))
        self.norm2 = nn.LayerNorm(dim, dtype=DTYPE)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        x = self.norm1(x + self.attn(x, mask))
        return self.norm2(x + self.ff(x))


class LocalAttentionStack(nn.Module):
    """Block-local self-attention: position i only sees its own window."""

    def __init__(self, dim: int, heads: int, layers: int, window: int):
        super().__init__()
        if window < 1:
            raise ValueError("window must be at least 1")
        self.window = window
        self.layers = nn.ModuleList(AttentionLayer(dim, heads) for _ in range(layers))

    def forward(self, x: torch.Tensor, valid: torch.Tensor | None = None) -> torch.Tensor:
        """``x`` is (L, dim), or (B, L, dim) with a (B, L) ``valid`` mask for padding."""
        mask = padded_mask(block_mask(x.shape[-2], self.window), valid)
        for layer in self.layers:
            x = layer(x, mask)
        return x


class CausalAttentionStack(nn.Module):
    def __init__(self, dim: int, heads: int, layers: int):
        super().__init__()
        self.layers = nn.ModuleList(AttentionLayer(dim, heads) for _ in range(layers))

    def forward(self, x: torch.Tensor, valid: torch.Tensor | None = None) -> torch.Tensor:
        """``x`` is (L, dim) or (B, L, dim); attention is causal along L."""
        mask = padded_mask(causal_mask(x.shape[-2]), valid)
        for layer in self.layers:
            x = layer(x, mask)
        return x


def _masked(h: torch.Tensor, keep: torch.Tensor | None) -> torch.Tensor:
    return h if keep is None else h * keep


class ResidualBlock1d(nn.Module):
    """x + conv(gelu(conv(gelu(x)))); zeroing ``conv2`` makes it the identity."""

    def __init__(self, channels: int, kernel: int = 3):
        super().__init__()
        pad = kernel // 2
        self.conv1 = nn.Conv1d(channels, channels, kernel, padding=pad, dtype=DTYPE)
        self.conv2 = nn.Conv1d(channels, channels, kernel, padding=pad, dtype=DTYPE)

    def forward(self, x: torch.Tensor, keep: torch.Tensor | None = None) -> torch.Tensor:
        # ``keep`` zeroes padded positions so they look like the conv's own padding
        h = _masked(self.conv1(F.gelu(x)), keep)
        return _masked(x + self.conv2(F.gelu(h)), keep)


class ResidualConv1dStack(nn.Module):
    """Four stages of stride-1 residual blocks (ResNet34 layout: [3, 4, 6, 3]).

    Each stage opens with a 1x1 projection to its width. Input and output are
    (L, C) or (B, L, C) sequences; length is preserved.
    """

    def __init__(self, d_in: int, channels=(16, 24, 32, 48), blocks=(3, 4, 6, 3)):
        super().__init__()
        if len(channels) != len(blocks):
            raise ValueError("channels and blocks must have the same length")
        self.projections = nn.ModuleList()
        self.stages = nn.ModuleList()
        prev = d_in
        for ch, nb in zip(channels, blocks):
            self.projections.append(nn.Conv1d(prev, ch, 1, dtype=DTYPE))
            self.stages.append(nn.ModuleList(ResidualBlock1d(ch) for _ in range(nb)))
            prev = ch
        self.out_channels = prev

    def forward(self, x: torch.Tensor, valid: torch.Tensor | None = None) -> torch.Tensor:
        single = x.dim() == 2
        h = (x.unsqueeze(0) if single else x).transpose(1, 2)
        keep = None if valid is None else valid[:, None, :].to(h.dtype)
        h = _masked(h, keep)
        for proj, stage in zip(self.projections, self.stages):
            h = _masked(proj(h), keep)
            for block in stage:
                h = block(h, keep)
        h = h.transpose(1, 2)
        return h.squeeze(0) if single else h


def pad_sequences(seqs: list, max_len: int | None = None) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack (L_i, d) tensors into (B, L, d) zero-padded, plus the (B, L) validity mask."""
    lengths = [s.shape[0] for s in seqs]
    L = max(lengths) if max_len is None else max_len
    out = seqs[0].new_zeros((len(seqs), L) + seqs[0].shape[1:])
    for i, s in enumerate(seqs):
        out[i, :s.shape[0]] = s
    return out, lengths_to_valid(lengths, L)


def init_seeded(module_factory, seed: int):
    """Build a module with a private, seeded torch RNG state."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return module_factory()
