"""Canonical z-y-x ordering, semantic BFS sequencing and discrete segment features."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .wireframe import GRID_BINS, SegmentGraph, Wireframe, build_graph, coord_to_bin

FEATURE_NAMES = (
    "ax", "ay", "az", "bx", "by", "bz", "length", "dx", "dy", "dz",
    "mx", "my", "mz", "angle_min", "angle_mean", "angle_max",
)
MAX_LENGTH = 2.0 * np.sqrt(3.0)


class InvalidInput(ValueError):
    pass


@dataclass(frozen=True)
class CanonicalOrder:
    """``vertex_perm[k]`` is the original index of the k-th vertex in z-y-x order.

    ``presorted`` lists original segment indices sorted by canonical endpoint
    ranks; ``segment_perm`` is the BFS sequence built on top of it.
    """

    vertex_perm: np.ndarray
    presorted: np.ndarray
    segment_perm: np.ndarray

    @property
    def vertex_rank(self) -> np.ndarray:
        rank = np.empty_like(self.vertex_perm)
        rank[self.vertex_perm] = np.arange(len(self.vertex_perm))
        return rank


def _vertex_keys(w: Wireframe) -> list:
    v = w.vertices
    nbrs: list[list] = [[] for _ in range(w.num_vertices)]
    for a, b in w.segments.tolist():
        nbrs[a].append((v[b, 2], v[b, 1], v[b, 0]))
        nbrs[b].append((v[a, 2], v[a, 1], v[a, 0]))
    # coincident vertices are told apart by their neighbourhoods, so the
    # order does not depend on how the input happened to be indexed
    return [(v[i, 2], v[i, 1], v[i, 0], tuple(sorted(nbrs[i])), i) for i in range(len(v))]


def _presort(w: Wireframe, rank: np.ndarray) -> np.ndarray:
    ends = np.sort(rank[w.segments], axis=1) if w.num_segments else np.zeros((0, 2), int)
    return np.lexsort((ends[:, 1], ends[:, 0])) if len(ends) else np.zeros(0, dtype=np.int64)


def bfs_sequence(w: Wireframe, g: SegmentGraph, presorted: np.ndarray) -> np.ndarray:
    """Component-contiguous BFS order over segments.

    Components start at their lowest pre-sorted segment and are visited in
    that order; neighbours are expanded by ascending pre-sorted position.
    """
    pos = np.empty(len(presorted), dtype=np.int64)
    pos[presorted] = np.arange(len(presorted))
    seen = np.zeros(len(presorted), dtype=bool)
    out = []
    for root in presorted.tolist():
        if seen[root]:
            continue
        seen[root] = True
        queue = deque([root])
        while queue:
            i = queue.popleft()
            out.append(i)
            for j in sorted(g.adjacency[i], key=lambda s: pos[s]):
                if not seen[j]:
                    seen[j] = True
                    queue.append(j)
    return np.array(out, dtype=np.int64)


def canonical_sort(w: Wireframe) -> CanonicalOrder:
    keys = _vertex_keys(w)
    vertex_perm = np.array(sorted(range(w.num_vertices), key=keys.__getitem__), dtype=np.int64)
    rank = np.empty_like(vertex_perm)
    rank[vertex_perm] = np.arange(len(vertex_perm))
    presorted = _presort(w, rank)
    seq = bfs_sequence(w, build_graph(w), presorted)
    return CanonicalOrder(vertex_perm, presorted, seq)


def canonicalize(w: Wireframe, order: CanonicalOrder | None = None) -> Wireframe:
    """Relabel vertices in z-y-x order and list segments (A < B) in BFS order."""
    order = canonical_sort(w) if order is None else order
    rank = order.vertex_rank
    segs = np.sort(rank[w.segments[order.segment_perm]], axis=1)
    return Wireframe(w.vertices[order.vertex_perm], segs.reshape(-1, 2))


def _angle_stats(w: Wireframe, g: SegmentGraph) -> np.ndarray:
    v = w.vertices
    out = np.zeros((w.num_segments, 3))
    segs = w.segments
    for i in range(w.num_segments):
        angles = []
        a, b = segs[i]
        for j in g.adjacency[i]:
            c, d = segs[j]
            shared = a if a in (c, d) else b
            u = v[b if shared == a else a] - v[shared]
            o = v[d if shared == c else c] - v[shared]
            cosang = np.dot(u, o) / (np.linalg.norm(u) * np.linalg.norm(o))
            angles.append(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
        if angles:
            out[i] = (min(angles), float(np.mean(angles)), max(angles))
    return out


def continuous_features(w: Wireframe, g: SegmentGraph | None = None) -> np.ndarray:
    """(N, 16) real-valued features; endpoint A is the segment's first index."""
    g = build_graph(w) if g is None else g
    a = w.vertices[w.segments[:, 0]]
    b = w.vertices[w.segments[:, 1]]
    length = np.linalg.norm(b - a, axis=1)
    if np.any(length == 0):
        raise InvalidInput("zero-length segment")
    direction = (b - a) / length[:, None]
    mid = (a + b) / 2.0
    return np.column_stack([a, b, length, direction, mid, _angle_stats(w, g)])


def discretize_features(feats: np.ndarray, bins: int = GRID_BINS) -> np.ndarray:
    out = np.empty(feats.shape, dtype=np.int64)
    out[:, 0:6] = coord_to_bin(feats[:, 0:6], bins)
    out[:, 6] = coord_to_bin(feats[:, 6], bins, 0.0, MAX_LENGTH)
    out[:, 7:10] = coord_to_bin(feats[:, 7:10], bins)
    out[:, 10:13] = coord_to_bin(feats[:, 10:13], bins)
    out[:, 13:16] = coord_to_bin(feats[:, 13:16], bins, 0.0, 180.0)
    return out


def extract_features(w: Wireframe, g: SegmentGraph | None = None,
                     order: CanonicalOrder | None = None) -> np.ndarray:
    """Discrete (N, 16) features of ``w`` in BFS order, entries in [0, 128).

    When ``order`` is given the wireframe is canonicalized first; otherwise it
    is assumed to already be canonical (segments in sequence order, A < B).
    """
    if order is not None:
        w = canonicalize(w, order)
        g = None
    return discretize_features(continuous_features(w, g))


def dump_features(feats: np.ndarray) -> str:
    return json.dumps(np.asarray(feats).tolist())


def load_features(text: str) -> np.ndarray:
    return np.array(json.loads(text), dtype=np.int64).reshape(-1, len(FEATURE_NAMES))
