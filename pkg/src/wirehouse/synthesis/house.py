"""Lift a 2D layout to a 3D house wireframe: exterior walls, rooms, skeleton roof."""

from __future__ import annotations

import numpy as np

from ..wireframe import Wireframe
from .layout import Layout2D, SynthesisConfig
from .skeleton import straight_skeleton


def _prism(ring: np.ndarray, height: float, offset: int):
    """Base ring, top ring and vertical studs of an extruded closed polyline."""
    k = len(ring)
    verts = np.concatenate([np.column_stack([ring, np.zeros(k)]),
                            np.column_stack([ring, np.full(k, height)])])
    segs = []
    for i in range(k):
        j = (i + 1) % k
        segs.append((offset + i, offset + j))
        segs.append((offset + k + i, offset + k + j))
        segs.append((offset + i, offset + k + i))
    return verts, segs


def wall_height_for(layout: Layout2D, cfg: SynthesisConfig) -> float:
    if cfg.wall_height is not None:
        return float(cfg.wall_height)
    fp = layout.footprint
    return 0.4 * float(np.linalg.norm(fp.max(axis=0) - fp.min(axis=0)))


def assemble_house(layout: Layout2D, cfg: SynthesisConfig) -> Wireframe:
    """Walls, rooms and roof as vertex-disjoint parts of one wireframe.

    The roof eave ring repeats the wall top ring coordinates with its own
    vertices, so walls and roof remain separate components.
    """
    height = wall_height_for(layout, cfg)
    verts, segs = _prism(layout.footprint, height, 0)
    all_v, all_s = [verts], list(segs)
    offset = len(verts)
    for x0, y0, x1, y1 in layout.rooms:
        ring = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=np.float64)
        v, s = _prism(ring, height, offset)
        all_v.append(v)
        all_s.extend(s)
        offset += len(v)

    sk = straight_skeleton(layout.footprint)
    roof_v = np.column_stack([sk.points, height + cfg.roof_pitch * sk.times])
    all_v.append(roof_v)
    k = sk.boundary_count
    for i in range(k):
        all_s.append((offset + i, offset + (i + 1) % k))
    for a, b in sk.arcs:
        all_s.append((offset + a, offset + b))
    return Wireframe(np.concatenate(all_v), np.array(all_s, dtype=np.int64))
