"""Wireframe data model, segment graph, normalization and component splitting."""

from __future__ import annotations

import os
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

GRID_BINS = 128


class InvalidWireframe(ValueError):
    pass


class DegenerateInput(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Wireframe:
    """Vertices (V x 3 float64) and undirected segments (N x 2 int64).

    Construction validates the invariants: in-range distinct endpoints, no
    duplicate segments, no zero-length segments. Arrays are read-only.
    """

    vertices: np.ndarray
    segments: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        s = np.asarray(self.segments, dtype=np.int64).reshape(-1, 2)
        if len(s):
            if s.min() < 0 or s.max() >= len(v):
                raise InvalidWireframe("segment references an out-of-range vertex")
            if np.any(s[:, 0] == s[:, 1]):
                raise InvalidWireframe("segment endpoints must be distinct")
            keys = np.sort(s, axis=1)
            if len(np.unique(keys, axis=0)) != len(keys):
                raise InvalidWireframe("duplicate segment")
            lengths = np.linalg.norm(v[s[:, 0]] - v[s[:, 1]], axis=1)
            if np.any(lengths == 0.0):
                raise InvalidWireframe("zero-length segment")
        if not np.all(np.isfinite(v)):
            raise InvalidWireframe("non-finite vertex coordinate")
        object.__setattr__(self, "vertices", _frozen(v))
        object.__setattr__(self, "segments", _frozen(s))

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_segments(self) -> int:
        return len(self.segments)

    def is_empty(self) -> bool:
        return len(self.segments) == 0

    def degrees(self) -> np.ndarray:
        return np.bincount(self.segments.ravel(), minlength=len(self.vertices))

    def segment_set(self, decimals: int | None = None) -> set:
        """Segments as unordered coordinate pairs, for comparisons up to reindexing."""
        v = self.vertices if decimals is None else np.round(self.vertices, decimals)
        out = set()
        for a, b in self.segments:
            pa, pb = tuple(v[a].tolist()), tuple(v[b].tolist())
            out.add((pa, pb) if pa <= pb else (pb, pa))
        return out

    def __eq__(self, other):
        if not isinstance(other, Wireframe):
            return NotImplemented
        return (np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.segments, other.segments))

    def __repr__(self):
        return f"Wireframe(V={self.num_vertices}, N={self.num_segments})"


def empty_wireframe() -> Wireframe:
    return Wireframe(np.zeros((0, 3)), np.zeros((0, 2), dtype=np.int64))


@dataclass(frozen=True)
class SegmentGraph:
    node_count: int
    adjacency: tuple = field(repr=False)

    def neighbors(self, i: int) -> tuple:
        return self.adjacency[i]

    def edge_pairs(self) -> list:
        return [(i, j) for i, adj in enumerate(self.adjacency) for j in adj if i < j]


@dataclass(frozen=True)
class ComponentLabeling:
    label: np.ndarray
    component_count: int


def build_graph(w: Wireframe) -> SegmentGraph:
    """Segments are nodes; two segments are adjacent iff they share a vertex."""
    incident: list[list[int]] = [[] for _ in range(w.num_vertices)]
    for i, (a, b) in enumerate(w.segments):
        incident[a].append(i)
        incident[b].append(i)
    adj = [set() for _ in range(w.num_segments)]
    for segs in incident:
        for i in segs:
            adj[i].update(segs)
    adjacency = tuple(tuple(sorted(s - {i})) for i, s in enumerate(adj))
    return SegmentGraph(w.num_segments, adjacency)


def connected_components(g: SegmentGraph) -> ComponentLabeling:
    label = np.full(g.node_count, -1, dtype=np.int64)
    count = 0
    for root in range(g.node_count):
        if label[root] >= 0:
            continue
        label[root] = count
        queue = deque([root])
        while queue:
            i = queue.popleft()
            for j in g.adjacency[i]:
                if label[j] < 0:
                    label[j] = count
                    queue.append(j)
        count += 1
    return ComponentLabeling(label, count)


def split_components(w: Wireframe) -> list[Wireframe]:
    comp = connected_components(build_graph(w))
    parts = []
    for c in range(comp.component_count):
        segs = w.segments[comp.label == c]
        used, inverse = np.unique(segs.ravel(), return_inverse=True)
        parts.append(Wireframe(w.vertices[used], inverse.reshape(-1, 2)))
    return parts


def normalize(w: Wireframe) -> Wireframe:
    """Center the bounding box at the origin and scale the longest extent to [-1, 1]."""
    if w.num_vertices == 0:
        raise DegenerateInput("cannot normalize an empty wireframe")
    lo, hi = w.vertices.min(axis=0), w.vertices.max(axis=0)
    extent = float((hi - lo).max())
    if extent <= 0.0:
        raise DegenerateInput("wireframe has zero extent")
    center = (lo + hi) / 2.0
    return Wireframe((w.vertices - center) * (2.0 / extent), w.segments)


def coord_to_bin(x, bins: int = GRID_BINS, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
    """Half-open binning over [lo, hi] with the top value clamped into the last bin."""
    b = np.floor((np.asarray(x, dtype=np.float64) - lo) / (hi - lo) * bins)
    return np.clip(b, 0, bins - 1).astype(np.int64)


def bin_to_coord(b, bins: int = GRID_BINS) -> np.ndarray:
    return -1.0 + (np.asarray(b, dtype=np.float64) + 0.5) * (2.0 / bins)


def merge_vertex_arrays(vertices: np.ndarray, segments: np.ndarray,
                        bins: int = GRID_BINS) -> Wireframe:
    """Merge vertices sharing a grid cell, dropping collapsed and repeated segments.

    The first vertex (by index) seen in a cell is kept. Works on raw arrays so
    that decoded samples with degenerate segments can be repaired.
    """
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    segments = np.asarray(segments, dtype=np.int64).reshape(-1, 2)
    cells = coord_to_bin(vertices, bins)
    cell_index: dict[tuple, int] = {}
    remap = np.empty(len(vertices), dtype=np.int64)
    kept = []
    for i, c in enumerate(map(tuple, cells.tolist())):
        j = cell_index.get(c)
        if j is None:
            j = cell_index[c] = len(kept)
            kept.append(i)
        remap[i] = j
    seen = set()
    out = []
    for a, b in remap[segments].tolist():
        key = (min(a, b), max(a, b))
        if a == b or key in seen:
            continue
        seen.add(key)
        out.append((a, b))
    if not out:
        return empty_wireframe()
    # vertices left without any segment are dropped; relative order is kept
    seg = np.array(out, dtype=np.int64)
    used, inverse = np.unique(seg.ravel(), return_inverse=True)
    return Wireframe(vertices[kept][used], inverse.reshape(-1, 2))


def merge_duplicate_vertices(w: Wireframe, bins: int = GRID_BINS) -> Wireframe:
    return merge_vertex_arrays(w.vertices, w.segments, bins)


# --- text format -------------------------------------------------------------

def format_wireframe(w: Wireframe, comment: str | None = None) -> str:
    lines = []
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    for x, y, z in w.vertices.tolist():
        lines.append(f"v {x:.9g} {y:.9g} {z:.9g}")
    for a, b in w.segments.tolist():
        lines.append(f"l {a + 1} {b + 1}")
    return "\n".join(lines) + "\n"


def parse_wireframe(text: str) -> Wireframe:
    verts, segs = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "v" and len(parts) == 4:
                verts.append([float(p) for p in parts[1:]])
            elif parts[0] == "l" and len(parts) == 3:
                segs.append([int(parts[1]) - 1, int(parts[2]) - 1])
            else:
                raise ValueError(f"unrecognized record {parts[0]!r}")
        except ValueError as exc:
            raise InvalidWireframe(f"line {lineno}: {exc}") from None
    return Wireframe(np.array(verts, dtype=np.float64).reshape(-1, 3),
                     np.array(segs, dtype=np.int64).reshape(-1, 2))


def read_wireframe(path) -> Wireframe:
    path = Path(path)
    try:
        return parse_wireframe(path.read_text())
    except InvalidWireframe as exc:
        raise InvalidWireframe(f"{path}: {exc}") from None


def write_wireframe(path, w: Wireframe, comment: str | None = None) -> None:
    atomic_write_text(path, format_wireframe(w, comment))


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def cube_wireframe(lo: float = 0.0, hi: float = 1.0) -> Wireframe:
    corners = np.array([[x, y, z] for z in (lo, hi) for y in (lo, hi) for x in (lo, hi)],
                       dtype=np.float64)
    segs = [(i, j) for i in range(8) for j in range(i + 1, 8)
            if np.count_nonzero(corners[i] != corners[j]) == 1]
    return Wireframe(corners, np.array(segs))
