"""Versioned binary container of named float64 tensors plus a JSON header.

Layout (all integers little-endian):

    magic      4 bytes   b"WHCK"
    version    u32       1
    meta_len   u32       length of the UTF-8 JSON metadata that follows
    meta       bytes
    count      u32       number of tensors
    per tensor:
        name_len u32, name (UTF-8)
        ndim     u32, dims u64 x ndim
        values   f64 x prod(dims), row-major
"""

from __future__ import annotations

import dataclasses
import io
import json
import struct
from collections import OrderedDict

import numpy as np
import torch

from ..wireframe import atomic_write_bytes

MAGIC = b"WHCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_checkpoint(tensors: dict, meta: dict) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    buf.write(struct.pack("<II", VERSION, len(meta_bytes)))
    buf.write(meta_bytes)
    buf.write(struct.pack("<I", len(tensors)))
    for name, value in tensors.items():
        arr = np.asarray(value, dtype="<f8", order="C")
        nb = name.encode()
        buf.write(struct.pack("<I", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def decode_checkpoint(data: bytes) -> tuple[OrderedDict, dict]:
    view = memoryview(data)
    if bytes(view[:4]) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(view):
            raise CheckpointError("truncated checkpoint")
        out = struct.unpack_from(fmt, view, pos)
        pos += size
        return out

    version, meta_len = take("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    meta = json.loads(bytes(view[pos:pos + meta_len]))
    pos += meta_len
    (count,) = take("<I")
    tensors = OrderedDict()
    for _ in range(count):
        (nlen,) = take("<I")
        name = bytes(view[pos:pos + nlen]).decode()
        pos += nlen
        (ndim,) = take("<I")
        dims = take(f"<{ndim}Q") if ndim else ()
        n = int(np.prod(dims)) if dims else 1
        if pos + 8 * n > len(view):
            raise CheckpointError("truncated checkpoint")
        arr = np.frombuffer(view[pos:pos + 8 * n], dtype="<f8").reshape(dims).copy()
        pos += 8 * n
        tensors[name] = arr
    return tensors, meta


def save_checkpoint(path, tensors: dict, meta: dict) -> None:
    atomic_write_bytes(path, encode_checkpoint(tensors, meta))


def load_checkpoint(path) -> tuple[OrderedDict, dict]:
    with open(path, "rb") as f:
        return decode_checkpoint(f.read())


def _config_to_json(cfg) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(cfg).items()}


def save_model(path, model: torch.nn.Module, kind: str, extra: dict | None = None) -> None:
    tensors = {k: v.detach().numpy() for k, v in model.state_dict().items()}
    meta = dict(kind=kind, config=_config_to_json(model.cfg), **(extra or {}))
    save_checkpoint(path, tensors, meta)


def load_state(model: torch.nn.Module, tensors: dict) -> None:
    state = {k: torch.as_tensor(v) for k, v in tensors.items()}
    model.load_state_dict(state, strict=True)
