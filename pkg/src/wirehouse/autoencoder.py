"""Wireframe autoencoder: segment features -> graph conv -> windowed attention ->
vertex latents -> residual LFQ -> decoder producing 6 x 128 coordinate logits
per segment. Also the training loop and the tokenize / detokenize pair."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .nn.checkpoint import load_checkpoint, load_state
from .nn.layers import (DTYPE, GraphConv, LocalAttentionStack, ResidualConv1dStack,
                        adjacency_index, init_seeded, pad_sequences)
from .nn.training import (TrainConfig, TrainHistory, check_finite, epoch_batches, lr_at,
                          make_optimizer, reconstruct_loss, set_lr,
                          smoothed_coordinate_targets)
from .quantizer import (InvalidCode, LfqConfig, ResidualLFQ, TokenFile, index_to_code,
                        segment_to_vertex_features, vertex_to_segment_codes)
from .sequencing import FEATURE_NAMES, canonicalize, extract_features
from .wireframe import (GRID_BINS, Wireframe, bin_to_coord, build_graph, coord_to_bin,
                        empty_wireframe, merge_vertex_arrays)


@dataclass(frozen=True)
class AEConfig:
    embed_dim: int = 32
    gcn_dims: tuple = (32, 64, 64)
    latent_dim: int = 64
    heads: int = 4
    encoder_layers: int = 2
    window: int = 16
    decoder_dim: int = 64
    decoder_layers: int = 2
    conv_channels: tuple = (16, 24, 32, 48)
    conv_blocks: tuple = (3, 4, 6, 3)
    code_dim: int = 6
    depth: int = 2
    commit_weight: float = 0.25
    entropy_weight: float = 0.1
    sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "gcn_dims", tuple(self.gcn_dims))
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))
        object.__setattr__(self, "conv_blocks", tuple(self.conv_blocks))
        if self.gcn_dims[-1] != self.latent_dim:
            raise ValueError("last graph conv width must equal latent_dim")
        for dim in (self.latent_dim, self.decoder_dim):
            if dim % self.heads:
                raise ValueError(f"width {dim} is not divisible by {self.heads} heads")

    @property
    def lfq(self) -> LfqConfig:
        return LfqConfig(self.code_dim, self.depth)

    @classmethod
    def paper(cls) -> "AEConfig":
        return cls(embed_dim=196, gcn_dims=(64, 128, 256, 256, 384), latent_dim=384,
                   heads=12, encoder_layers=4, window=64, decoder_dim=384,
                   decoder_layers=2, conv_channels=(128, 192, 256, 384), code_dim=13)


# --- data preparation ----------------------------------------------------------

@dataclass
class PreparedHouse:
    """A canonicalized wireframe with everything the networks consume."""

    wireframe: Wireframe
    features: torch.Tensor          # (N, 16) long
    edges: tuple                    # (target, source) segment indices
    bins: torch.Tensor              # (N, 6) long: A xyz, B xyz
    targets: torch.Tensor           # (N, 6, 128)

    @property
    def num_segments(self) -> int:
        return self.wireframe.num_segments


def prepare(w: Wireframe, sigma: float = 1.0) -> PreparedHouse:
    if w.num_segments == 0:
        raise ValueError("cannot encode an empty wireframe")
    cw = canonicalize(w)
    g = build_graph(cw)
    feats = extract_features(cw, g)
    bins = coord_to_bin(cw.vertices[cw.segments].reshape(-1, 6))
    return PreparedHouse(cw, torch.as_tensor(feats), adjacency_index(g.adjacency),
                         torch.as_tensor(bins),
                         torch.as_tensor(smoothed_coordinate_targets(bins, sigma)))


def quantized_reference(w: Wireframe) -> Wireframe:
    """What an exact decoder returns for ``w``: canonical segments snapped to
    bin centers, then merged on the grid."""
    if w.num_segments == 0:
        return empty_wireframe()
    cw = canonicalize(w)
    return _assemble(coord_to_bin(cw.vertices[cw.segments].reshape(-1, 6)))


def _assemble(bins: np.ndarray) -> Wireframe:
    coords = bin_to_coord(np.asarray(bins).reshape(-1, 3))
    n = len(coords) // 2
    return merge_vertex_arrays(coords, np.arange(2 * n).reshape(n, 2))


# --- model ---------------------------------------------------------------------

@dataclass
class AEOutput:
    logits: list                    # per house (N_i, 6, 128)
    codes: list                     # per house (V_i, D) long
    commit: torch.Tensor
    entropy: torch.Tensor


class AutoencoderModel(nn.Module):
    def __init__(self, cfg: AEConfig):
        super().__init__()
        self.cfg = cfg
        self.embeddings = nn.ModuleList(nn.Embedding(GRID_BINS, cfg.embed_dim, dtype=DTYPE)
                                        for _ in FEATURE_NAMES)
        dims = (cfg.embed_dim,) + cfg.gcn_dims
        self.gcn = nn.ModuleList(GraphConv(a, b, activation=i < len(cfg.gcn_dims) - 1)
                                 for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])))
        self.encoder_attn = LocalAttentionStack(cfg.latent_dim, cfg.heads,
                                                cfg.encoder_layers, cfg.window)
        self.quantizer = ResidualLFQ(cfg.latent_dim, cfg.lfq)
        self.decoder_in = nn.Linear(2 * cfg.latent_dim, cfg.decoder_dim, dtype=DTYPE)
        self.decoder_attn = LocalAttentionStack(cfg.decoder_dim, cfg.heads,
                                                cfg.decoder_layers, cfg.window)
        self.decoder_conv = ResidualConv1dStack(cfg.decoder_dim, cfg.conv_channels,
                                                cfg.conv_blocks)
        self.head = nn.Linear(self.decoder_conv.out_channels, 6 * GRID_BINS, dtype=DTYPE)

    @classmethod
    def create(cls, cfg: AEConfig) -> "AutoencoderModel":
        return init_seeded(lambda: cls(cfg), cfg.seed)

    def embed(self, feats: torch.Tensor) -> torch.Tensor:
        return sum(table(feats[:, k]) for k, table in enumerate(self.embeddings))

    def graph_encode(self, house: PreparedHouse) -> torch.Tensor:
        h = self.embed(house.features)
        for layer in self.gcn:
            h = layer(h, house.edges)
        return h

    def encode_batch(self, houses: list) -> list:
        """Per-segment latents (N_i, latent_dim) for each house."""
        seqs = [self.graph_encode(h) for h in houses]
        x, valid = pad_sequences(seqs)
        x = self.encoder_attn(x, valid)
        return [x[i, :h.num_segments] for i, h in enumerate(houses)]

    def encode(self, house: PreparedHouse) -> torch.Tensor:
        return self.encode_batch([house])[0]

    def decode_batch(self, pairs: list) -> list:
        """Decode per-segment endpoint latents (N_i, 2 * latent) to logits (N_i, 6, 128)."""
        seqs = [self.decoder_in(p) for p in pairs]
        x, valid = pad_sequences(seqs)
        x = self.decoder_attn(x, valid)
        x = self.decoder_conv(x, valid)
        logits = self.head(x)
        return [logits[i, :len(p)].reshape(-1, 6, GRID_BINS) for i, p in enumerate(pairs)]

    def forward(self, houses: list, surrogate: bool = False) -> AEOutput:
        latents = self.encode_batch(houses)
        vert, counts = [], []
        for h, z in zip(houses, latents):
            w = h.wireframe
            vert.append(segment_to_vertex_features(z, w.segments, w.num_vertices))
            counts.append(w.num_vertices)
        # one quantizer call so the entropy penalty sees the whole batch
        q = self.quantizer(torch.cat(vert), surrogate=surrogate)
        z_hat = q.z_hat.split(counts)
        codes = q.codes.split(counts)
        pairs = []
        for h, zv in zip(houses, z_hat):
            seg = torch.tensor(h.wireframe.segments)
            pairs.append(torch.cat([zv[seg[:, 0]], zv[seg[:, 1]]], dim=1))
        return AEOutput(self.decode_batch(pairs), list(codes), q.commit, q.entropy)

    def codes_to_pairs(self, seg_codes: np.ndarray) -> torch.Tensor:
        """(N, 2D) code blocks to decoder input (N, 2 * latent)."""
        D = self.cfg.depth
        a = self.quantizer.codes_to_latent(seg_codes[:, :D])
        b = self.quantizer.codes_to_latent(seg_codes[:, D:])
        return torch.cat([a, b], dim=1)


@dataclass
class LossParts:
    total: torch.Tensor
    recon: torch.Tensor
    commit: torch.Tensor
    entropy: torch.Tensor


def ae_loss(model: AutoencoderModel, houses: list, surrogate: bool = False) -> LossParts:
    out = model(houses, surrogate=surrogate)
    recon = torch.stack([reconstruct_loss(lg, h.targets)
                         for lg, h in zip(out.logits, houses)]).mean()
    cfg = model.cfg
    total = recon + cfg.commit_weight * out.commit + cfg.entropy_weight * out.entropy
    return LossParts(total, recon, out.commit, out.entropy)


def bin_accuracy(model: AutoencoderModel, houses: list) -> float:
    """Fraction of coordinates whose argmax bin equals the true bin."""
    with torch.no_grad():
        out = model(houses)
    hits = sum(int((lg.argmax(-1) == h.bins).sum()) for lg, h in zip(out.logits, houses))
    return hits / sum(6 * h.num_segments for h in houses)


# --- training ------------------------------------------------------------------

def train_autoencoder(houses: list, cfg: AEConfig, tcfg: TrainConfig,
                      model: AutoencoderModel | None = None,
                      log=None) -> tuple[AutoencoderModel, TrainHistory]:
    """Minimize recon + beta * commit + lambda * entropy over ``tcfg.total_epochs``.

    The learning rate is constant within an epoch and equals ``lr_at(epoch)``.
    Raises TrainingDiverged on a non-finite loss.
    """
    model = AutoencoderModel.create(cfg) if model is None else model
    opt = make_optimizer(model.parameters(), tcfg)
    history = TrainHistory()
    for epoch in range(tcfg.total_epochs):
        lr = lr_at(epoch, tcfg)
        set_lr(opt, lr)
        sums = dict(total=0.0, recon=0.0, commit=0.0, entropy=0.0)
        batches = epoch_batches(len(houses), tcfg.batch_size, tcfg.seed, epoch)
        for idx in batches:
            parts = ae_loss(model, [houses[i] for i in idx])
            check_finite(parts.total.item(), epoch)
            opt.zero_grad()
            parts.total.backward()
            opt.step()
            for k in sums:
                sums[k] += getattr(parts, k).item() / len(batches)
        row = dict(epoch=epoch, lr=lr, **sums)
        history.epochs.append(row)
        if log is not None:
            log(row)
    return model, history


# --- tokens --------------------------------------------------------------------

def tokenize(w: Wireframe, model: AutoencoderModel) -> TokenFile:
    """Code tokens of ``w`` in BFS order followed by the stop sentinel."""
    cfg = model.cfg
    if w.num_segments == 0:
        return TokenFile(cfg.code_dim, cfg.depth, np.array([2 ** cfg.code_dim]))
    house = prepare(w, cfg.sigma)
    with torch.no_grad():
        out = model([house])
    blocks = vertex_to_segment_codes(out.codes[0].numpy(), house.wireframe.segments)
    toks = np.append(blocks.reshape(-1), 2 ** cfg.code_dim)
    return TokenFile(cfg.code_dim, cfg.depth, toks.astype(np.int64))


def split_blocks(tokens, code_dim: int, depth: int) -> np.ndarray:
    """Validate a token sequence and return its (N, 2D) code blocks."""
    toks = np.asarray(tokens, dtype=np.int64).reshape(-1)
    stop = 2 ** code_dim
    if len(toks) and toks[-1] == stop:
        toks = toks[:-1]
    if np.any(toks < 0) or np.any(toks >= stop):
        raise InvalidCode("token outside the code range (or stop before the end)")
    if len(toks) % (2 * depth):
        raise InvalidCode(f"{len(toks)} tokens is not a whole number of {2 * depth}-token blocks")
    return toks.reshape(-1, 2 * depth)


def decode_bins(blocks: np.ndarray, model: AutoencoderModel) -> np.ndarray:
    if len(blocks) == 0:
        return np.zeros((0, 6), dtype=np.int64)
    for d in range(blocks.shape[1]):
        index_to_code(blocks[:, d], model.cfg.code_dim)  # range check
    with torch.no_grad():
        logits = model.decode_batch([model.codes_to_pairs(blocks)])[0]
    return logits.argmax(-1).numpy()


def detokenize(tokens, model: AutoencoderModel) -> Wireframe:
    cfg = model.cfg
    blocks = split_blocks(tokens, cfg.code_dim, cfg.depth)
    if len(blocks) == 0:
        return empty_wireframe()
    return _assemble(decode_bins(blocks, model))


# --- checkpoints ---------------------------------------------------------------

def load_autoencoder(path) -> AutoencoderModel:
    tensors, meta = load_checkpoint(path)
    if meta.get("kind") != "autoencoder":
        raise ValueError(f"{path} is not an autoencoder checkpoint")
    model = AutoencoderModel(AEConfig(**meta["config"]))
    load_state(model, tensors)
    return model
