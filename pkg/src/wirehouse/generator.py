"""Coarse-to-fine autoregressive model over code token sequences.

A sequence is N blocks of 2D code tokens (endpoint A's D levels, then B's)
followed by the stop token. The coarse stage turns each block into one
feature and runs causal attention over ``[start, block_0, ..., block_{N-1}]``;
its output h_i summarizes everything before block i. The fine stage runs a
short causal pass over ``[h_i, tok_{i,0}, ..., tok_{i,2D-2}]`` and predicts
the tokens of block i. Stop is scored from h_i and is only legal in the first
slot of a block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .nn.checkpoint import load_checkpoint, load_state, save_model
from .nn.layers import DTYPE, CausalAttentionStack, init_seeded, pad_sequences
from .nn.training import (TrainConfig, TrainHistory, check_finite, epoch_batches, lr_at,
                          make_optimizer, set_lr, token_loss)
from .quantizer import InvalidCode


class SequenceTooLong(ValueError):
    pass


@dataclass(frozen=True)
class GenConfig:
    code_dim: int = 6
    depth: int = 2
    dim: int = 64
    heads: int = 4
    coarse_layers: int = 2
    fine_layers: int = 1
    max_segments: int = 101
    seed: int = 0

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} is not divisible by {self.heads} heads")
        if self.max_segments < 1:
            raise ValueError("max_segments must be positive")

    @property
    def codebook_size(self) -> int:
        return 2 ** self.code_dim

    @property
    def stop(self) -> int:
        return self.codebook_size

    @property
    def start(self) -> int:
        return self.codebook_size + 1

    @property
    def block(self) -> int:
        return 2 * self.depth

    @property
    def max_len(self) -> int:
        """Code tokens in the longest sequence; the stop token comes on top."""
        return self.block * self.max_segments

    @classmethod
    def paper(cls) -> "GenConfig":
        return cls(code_dim=13, dim=512, heads=8, coarse_layers=12, fine_layers=2,
                   max_segments=406)


def check_length_budget(cfg: GenConfig, segment_limit: int) -> None:
    """Every house with fewer than ``segment_limit`` segments must fit."""
    if cfg.max_segments < segment_limit - 1:
        raise ValueError(f"max length {cfg.max_len} cannot hold {segment_limit - 1} segments")
    if cfg.max_len != cfg.block * cfg.max_segments:
        raise ValueError("max length is not a whole number of segment blocks")


def blocks_of(tokens, cfg: GenConfig) -> tuple[np.ndarray, bool]:
    """Split tokens into (N, 2D) blocks; also report whether a stop ended them."""
    toks = np.asarray(tokens, dtype=np.int64).reshape(-1)
    done = bool(len(toks)) and int(toks[-1]) == cfg.stop
    body = toks[:-1] if done else toks
    if np.any(body < 0) or np.any(body >= cfg.codebook_size):
        raise InvalidCode("token outside the code range (or stop before the end)")
    if len(body) % cfg.block:
        raise InvalidCode(f"{len(body)} tokens is not a whole number of {cfg.block}-token blocks")
    blocks = body.reshape(-1, cfg.block)
    if len(blocks) > cfg.max_segments:
        raise SequenceTooLong(f"{len(blocks)} segments exceeds the maximum {cfg.max_segments}")
    return blocks, done


class GeneratorModel(nn.Module):
    def __init__(self, cfg: GenConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.dim
        self.token_emb = nn.Embedding(cfg.codebook_size + 2, d, dtype=DTYPE)
        self.position_emb = nn.Embedding(cfg.max_len, d, dtype=DTYPE)
        self.vertex_emb = nn.Embedding(2, d, dtype=DTYPE)
        self.level_emb = nn.Embedding(cfg.depth, d, dtype=DTYPE)
        self.merge = nn.Linear(cfg.block * d, d, dtype=DTYPE)
        self.coarse = CausalAttentionStack(d, cfg.heads, cfg.coarse_layers)
        self.query_emb = nn.Embedding(cfg.block, d, dtype=DTYPE)
        self.fine = CausalAttentionStack(d, cfg.heads, cfg.fine_layers)
        self.code_head = nn.Linear(d, cfg.codebook_size, dtype=DTYPE)
        self.stop_head = nn.Linear(d, 1, dtype=DTYPE)
        slot = torch.arange(cfg.block)
        self.register_buffer("slot_vertex", slot // cfg.depth, persistent=False)
        self.register_buffer("slot_level", slot % cfg.depth, persistent=False)

    @classmethod
    def create(cls, cfg: GenConfig) -> "GeneratorModel":
        return init_seeded(lambda: cls(cfg), cfg.seed)

    def slot_embed(self, blocks: torch.Tensor) -> torch.Tensor:
        """(N, 2D) tokens to (N, 2D, dim) embeddings with all three encodings."""
        n = blocks.shape[0]
        pos = torch.arange(n * self.cfg.block).view(n, self.cfg.block)
        return (self.token_emb(blocks) + self.position_emb(pos)
                + self.vertex_emb(self.slot_vertex) + self.level_emb(self.slot_level))

    def start_feature(self) -> torch.Tensor:
        start = torch.full((self.cfg.block,), self.cfg.start, dtype=torch.long)
        e = (self.token_emb(start) + self.vertex_emb(self.slot_vertex)
             + self.level_emb(self.slot_level))
        return self.merge(e.reshape(1, -1))

    def coarse_context(self, block_lists: list) -> list:
        """For each sequence of N blocks, contexts h_0..h_N (N + 1, dim)."""
        seqs = []
        for blocks in block_lists:
            flat = self.slot_embed(blocks).reshape(len(blocks), self.cfg.block * self.cfg.dim)
            merged = self.merge(flat)
            seqs.append(torch.cat([self.start_feature(), merged]))
        x, valid = pad_sequences(seqs)
        x = self.coarse(x, valid)
        return [x[i, :len(s)] for i, s in enumerate(seqs)]

    def fine_logits(self, h: torch.Tensor, prev: torch.Tensor) -> torch.Tensor:
        """Logits (M, S, K + 1) for blocks with contexts ``h`` (M, dim) and the
        first S - 1 tokens of each block ``prev`` (M, S - 1)."""
        m, s = h.shape[0], prev.shape[1] + 1
        toks = self.token_emb(prev)
        x = torch.cat([h[:, None, :], toks], dim=1) + self.query_emb.weight[:s]
        f = self.fine(x)
        codes = self.code_head(f)
        stop = torch.full((m, s, 1), float("-inf"), dtype=DTYPE)
        stop = torch.cat([self.stop_head(h)[:, None, :], stop[:, 1:]], dim=1)
        return torch.cat([codes, stop], dim=-1)

    def forward(self, block_lists: list) -> list:
        """Teacher-forced logits, one (2D * N + 1, K + 1) tensor per sequence
        aligned with its tokens (the last row predicts stop)."""
        contexts = self.coarse_context(block_lists)
        h = torch.cat(contexts)
        prev = torch.cat([torch.cat([b, b.new_zeros(1, self.cfg.block)])[:, :-1]
                          for b in block_lists])
        logits = self.fine_logits(h, prev)
        out, at = [], 0
        for b in block_lists:
            n = len(b)
            rows = logits[at:at + n + 1]
            out.append(torch.cat([rows[:n].reshape(-1, rows.shape[-1]), rows[n, :1]]))
            at += n + 1
        return out


def sequence_targets(blocks: torch.Tensor, cfg: GenConfig) -> torch.Tensor:
    return torch.cat([blocks.reshape(-1), torch.tensor([cfg.stop])])


def generator_loss(model: GeneratorModel, block_lists: list) -> torch.Tensor:
    logits = model(block_lists)
    return torch.stack([token_loss(lg, sequence_targets(b, model.cfg))
                        for lg, b in zip(logits, block_lists)]).mean()


def to_blocks(sequences: list, cfg: GenConfig) -> list:
    out = []
    for seq in sequences:
        blocks, done = blocks_of(seq, cfg)
        if not done:
            raise InvalidCode("training sequences must end with the stop token")
        out.append(torch.as_tensor(blocks.copy()))
    return out


def train_generator(sequences: list, cfg: GenConfig, tcfg: TrainConfig,
                    model: GeneratorModel | None = None,
                    log=None) -> tuple[GeneratorModel, TrainHistory]:
    model = GeneratorModel.create(cfg) if model is None else model
    data = to_blocks(sequences, cfg)
    opt = make_optimizer(model.parameters(), tcfg)
    history = TrainHistory()
    for epoch in range(tcfg.total_epochs):
        lr = lr_at(epoch, tcfg)
        set_lr(opt, lr)
        total = 0.0
        batches = epoch_batches(len(data), tcfg.batch_size, tcfg.seed, epoch)
        for idx in batches:
            loss = generator_loss(model, [data[i] for i in idx])
            check_finite(loss.item(), epoch)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() / len(batches)
        row = dict(epoch=epoch, lr=lr, loss=total)
        history.epochs.append(row)
        if log is not None:
            log(row)
    return model, history


# --- sampling ------------------------------------------------------------------

def pick(logits: np.ndarray, temperature: float, rng: np.random.Generator) -> int:
    """Argmax at temperature 0, otherwise inverse-CDF sampling of softmax(logits / T)."""
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    if temperature == 0:
        return int(np.argmax(logits))
    z = logits / temperature
    z = z - np.max(z)
    p = np.exp(z)
    cdf = np.cumsum(p)
    u = rng.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side="right"), len(p) - 1))


def _continue(model: GeneratorModel, blocks: list, temperature: float,
              rng: np.random.Generator, max_segments: int) -> np.ndarray:
    cfg = model.cfg
    with torch.no_grad():
        while len(blocks) < max_segments:
            seq = torch.as_tensor(np.array(blocks, dtype=np.int64).reshape(-1, cfg.block))
            h = model.coarse_context([seq])[0][-1:]
            block = []
            for j in range(cfg.block):
                prev = torch.as_tensor(np.array(block, dtype=np.int64).reshape(1, j))
                logits = model.fine_logits(h, prev)[0, j].numpy()
                tok = pick(logits, temperature, rng)
                if tok == cfg.stop:
                    break
                block.append(tok)
            if len(block) < cfg.block:
                break
            blocks.append(block)
    body = np.array(blocks, dtype=np.int64).reshape(-1)
    return np.append(body, cfg.stop)


def sample(model: GeneratorModel, temperature: float = 1.0,
           rng: np.random.Generator | None = None,
           max_segments: int | None = None) -> np.ndarray:
    """One token sequence ending with stop; stop is only ever drawn at a block start."""
    return complete(np.zeros(0, dtype=np.int64), model, temperature, rng, max_segments)


def complete(prefix, model: GeneratorModel, temperature: float = 1.0,
             rng: np.random.Generator | None = None,
             max_segments: int | None = None) -> np.ndarray:
    """Continue a block-aligned prefix; the prefix is kept verbatim."""
    cfg = model.cfg
    rng = np.random.default_rng(0) if rng is None else rng
    limit = cfg.max_segments if max_segments is None else min(max_segments, cfg.max_segments)
    blocks, done = blocks_of(prefix, cfg)
    if done:
        return np.asarray(prefix, dtype=np.int64).copy()
    return _continue(model, blocks.tolist(), temperature, rng, limit)


def greedy_from_prefixes(model: GeneratorModel, sequences: list) -> list:
    """Greedy completion of each sequence from its shortest distinguishing prefix.

    Greedy decoding from an empty prefix yields a single sequence, so
    memorization of several sequences is probed by giving each one the fewest
    leading blocks that tell it apart from every other sequence.
    """
    cfg = model.cfg
    blocks = [blocks_of(s, cfg)[0] for s in sequences]
    out = []
    for i, b in enumerate(blocks):
        k = 0
        while k < len(b) and any(j != i and len(o) >= k and np.array_equal(o[:k], b[:k])
                                 for j, o in enumerate(blocks)):
            k += 1
        out.append(complete(b[:k].reshape(-1), model, temperature=0.0))
    return out


def load_generator(path) -> GeneratorModel:
    tensors, meta = load_checkpoint(path)
    if meta.get("kind") != "generator":
        raise ValueError(f"{path} is not a generator checkpoint")
    model = GeneratorModel(GenConfig(**meta["config"]))
    load_state(model, tensors)
    return model


def save_generator(path, model: GeneratorModel, extra: dict | None = None) -> None:
    save_model(path, model, "generator", extra)
