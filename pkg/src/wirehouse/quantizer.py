"""Residual lookup-free quantization of vertex latents.

Each depth quantizes the current residual by sign, so a code index is just
the little-endian bit pattern of the positive components and no codebook
search is needed. Depth d contributes ``scale_d * sign(r)`` pushed through its
own output projection; the scales start at 1, 1/2, 1/4, ...
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .nn.layers import DTYPE, scatter_mean
from .wireframe import atomic_write_bytes


class InvalidCode(ValueError):
    pass


@dataclass(frozen=True)
class LfqConfig:
    code_dim: int = 6
    depth: int = 2

    def __post_init__(self):
        if self.code_dim < 1 or self.depth < 1:
            raise ValueError("code_dim and depth must be positive")

    @property
    def codebook_size(self) -> int:
        return 2 ** self.code_dim

    @classmethod
    def from_codebook_size(cls, k: int, depth: int = 2) -> "LfqConfig":
        n = int(round(math.log2(k)))
        if 2 ** n != k:
            raise ValueError(f"codebook size {k} is not a power of two")
        return cls(n, depth)


def lfq_sign(z) -> np.ndarray:
    """Componentwise sign with sign(0) = -1."""
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite input to lfq_sign")
    return np.where(z > 0, 1.0, -1.0)


def lfq_index(z) -> np.ndarray | int:
    """sum_i 2^i [z_i > 0] over the last axis (bit 0 is the first component)."""
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite input to lfq_index")
    weights = 2 ** np.arange(z.shape[-1], dtype=np.int64)
    idx = ((z > 0).astype(np.int64) * weights).sum(-1)
    return int(idx) if idx.ndim == 0 else idx


def index_to_code(index, code_dim: int) -> np.ndarray:
    idx = np.asarray(index, dtype=np.int64)
    if np.any(idx < 0) or np.any(idx >= 2 ** code_dim):
        raise InvalidCode(f"code index outside [0, {2 ** code_dim})")
    bits = (idx[..., None] >> np.arange(code_dim)) & 1
    return np.where(bits == 1, 1.0, -1.0)


def _sign_t(z: torch.Tensor) -> torch.Tensor:
    return torch.where(z > 0, torch.ones_like(z), -torch.ones_like(z))


def _index_t(z: torch.Tensor) -> torch.Tensor:
    weights = 2 ** torch.arange(z.shape[-1], dtype=torch.long)
    return ((z > 0).long() * weights).sum(-1)


def _binary_entropy(p: torch.Tensor) -> torch.Tensor:
    p = p.clamp(1e-12, 1 - 1e-12)
    return -(p * torch.log(p) + (1 - p) * torch.log(1 - p))


def entropy_penalty(r: torch.Tensor, scale: torch.Tensor | float) -> torch.Tensor:
    """Mean per-sample code entropy minus entropy of the batch-mean code distribution.

    Codes are treated as independent bits: the soft probability that bit i is
    +1 is sigmoid(4 * scale * r_i), which is the softmax over {-scale, +scale}
    of negative squared distance. Lower bound: -code_dim * ln 2.
    """
    p = torch.sigmoid(4.0 * scale * r)
    per_sample = _binary_entropy(p).sum(-1).mean()
    batch = _binary_entropy(p.mean(0)).sum(-1)
    return per_sample - batch


@dataclass
class QuantizerOutput:
    codes: torch.Tensor        # (V, D) long
    z_hat: torch.Tensor        # (V, latent)
    commit: torch.Tensor       # scalar
    entropy: torch.Tensor      # scalar
    pre_quant: list            # residual entering each depth


def residual_quantize(z: torch.Tensor, scales, proj_in=None, proj_out=None,
                      surrogate: bool = False) -> QuantizerOutput:
    """Quantize latents ``z`` (V, latent) over ``len(scales)`` residual depths.

    ``proj_in`` maps latents to code space and ``proj_out`` is a sequence of
    per-depth maps back; ``None`` means identity. The sign is straight-through:
    its backward pass is the identity. With ``surrogate=True`` the sign is
    skipped entirely, which gives a smooth function for finite-difference checks.
    """
    r = z if proj_in is None else proj_in(z)
    depth = len(scales)
    codes, residuals, commits, entropies = [], [], [], []
    z_hat = 0.0
    for d in range(depth):
        s = scales[d]
        residuals.append(r)
        codes.append(_index_t(r.detach()))
        q = r if surrogate else r + (_sign_t(r) - r).detach()
        c = s * q
        commits.append(((r - c.detach()) ** 2).mean())
        entropies.append(entropy_penalty(r, s))
        z_hat = z_hat + (c if proj_out is None else proj_out[d](c))
        r = r - c
    return QuantizerOutput(torch.stack(codes, dim=-1), z_hat,
                           torch.stack(commits).mean(), torch.stack(entropies).mean(),
                           residuals)


class ResidualLFQ(nn.Module):
    def __init__(self, latent_dim: int, cfg: LfqConfig):
        super().__init__()
        self.cfg = cfg
        self.proj_in = nn.Linear(latent_dim, cfg.code_dim, dtype=DTYPE)
        init = torch.tensor([-d * math.log(2.0) for d in range(cfg.depth)], dtype=DTYPE)
        self.log_scales = nn.Parameter(init)
        self.proj_out = nn.ModuleList(nn.Linear(cfg.code_dim, latent_dim, dtype=DTYPE)
                                      for _ in range(cfg.depth))

    @property
    def scales(self) -> torch.Tensor:
        return torch.exp(self.log_scales)

    def forward(self, z: torch.Tensor, surrogate: bool = False) -> QuantizerOutput:
        s = self.scales
        return residual_quantize(z, [s[d] for d in range(self.cfg.depth)],
                                 self.proj_in, self.proj_out, surrogate)

    def codes_to_latent(self, codes) -> torch.Tensor:
        """Latents for integer codes (V, D), as the forward pass would produce them."""
        codes = np.asarray(codes, dtype=np.int64).reshape(-1, self.cfg.depth)
        s = self.scales
        out = 0.0
        for d in range(self.cfg.depth):
            vec = torch.as_tensor(index_to_code(codes[:, d], self.cfg.code_dim), dtype=DTYPE)
            out = out + self.proj_out[d](s[d] * vec)
        return out


def segment_to_vertex_features(seg_latents: torch.Tensor, segments, num_vertices: int):
    """Each vertex gets the mean latent of its incident segments."""
    seg = torch.tensor(np.asarray(segments), dtype=torch.long).reshape(-1, 2)
    values = seg_latents.repeat_interleave(2, dim=0)
    return scatter_mean(values, seg.reshape(-1), num_vertices)


def vertex_to_segment_codes(codes, segments) -> np.ndarray:
    """Per segment: [codes of endpoint A (D), codes of endpoint B (D)]."""
    codes = np.asarray(codes, dtype=np.int64)
    seg = np.asarray(segments, dtype=np.int64).reshape(-1, 2)
    return np.concatenate([codes[seg[:, 0]], codes[seg[:, 1]]], axis=1)


# --- token files --------------------------------------------------------------
# magic b"WHTK", then u32 version, code_dim n, depth D, segment count N, then
# 2*D*N u32 code tokens and, for finished sequences, the stop sentinel 2**n.

TOKEN_MAGIC = b"WHTK"


@dataclass(frozen=True)
class TokenFile:
    code_dim: int
    depth: int
    tokens: np.ndarray  # including the trailing stop when complete

    @property
    def stop(self) -> int:
        return 2 ** self.code_dim

    @property
    def complete(self) -> bool:
        return len(self.tokens) > 0 and int(self.tokens[-1]) == self.stop

    @property
    def segment_count(self) -> int:
        n = len(self.tokens) - (1 if self.complete else 0)
        return n // (2 * self.depth)


def encode_tokens(tf: TokenFile) -> bytes:
    toks = np.asarray(tf.tokens, dtype="<u4")
    body = toks[:-1] if tf.complete else toks
    if len(body) % (2 * tf.depth):
        raise InvalidCode("token count is not a whole number of segment blocks")
    if np.any(body >= tf.stop):
        raise InvalidCode("code token out of range")
    head = TOKEN_MAGIC + struct.pack("<IIII", 1, tf.code_dim, tf.depth, tf.segment_count)
    return head + toks.tobytes()


def decode_tokens(data: bytes) -> TokenFile:
    if data[:4] != TOKEN_MAGIC or len(data) < 20:
        raise InvalidCode("not a token file")
    version, n, depth, count = struct.unpack_from("<IIII", data, 4)
    if version != 1:
        raise InvalidCode(f"unsupported token file version {version}")
    toks = np.frombuffer(data[20:], dtype="<u4").astype(np.int64)
    body = 2 * depth * count
    if len(toks) not in (body, body + 1):
        raise InvalidCode("token count does not match header")
    if len(toks) == body + 1 and toks[-1] != 2 ** n:
        raise InvalidCode("trailing token is not the stop sentinel")
    return TokenFile(n, depth, toks)


def write_tokens(path, tf: TokenFile) -> None:
    atomic_write_bytes(path, encode_tokens(tf))


def read_tokens(path) -> TokenFile:
    return decode_tokens(Path(path).read_bytes())
