"""Procedural rectilinear footprints and room layouts."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .skeleton import signed_area, validate_polygon


class SynthesisFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class SynthesisConfig:
    wall_height: float | None = None  # None: 0.4 x footprint diagonal
    roof_pitch: float = 0.5
    max_segments: int = 100
    room_count_range: tuple[int, int] = (2, 4)
    footprint_complexity: tuple[int, int] = (4, 12)  # corner count range
    seed: int = 0

    def __post_init__(self):
        if self.wall_height is not None and self.wall_height <= 0:
            raise ValueError("wall_height must be positive")
        if self.roof_pitch <= 0:
            raise ValueError("roof_pitch must be positive")
        if self.max_segments < 12:
            raise ValueError("max_segments must be at least 12")
        lo, hi = self.room_count_range
        if not 0 <= lo <= hi:
            raise ValueError("bad room_count_range")
        clo, chi = self.footprint_complexity
        if not 4 <= clo <= chi:
            raise ValueError("footprint corner range must start at 4 or more")


@dataclass(frozen=True)
class Layout2D:
    footprint: np.ndarray  # (k, 2), counterclockwise
    rooms: tuple = field(default=())  # (x0, y0, x1, y1) rectangles

    def to_json(self) -> str:
        return json.dumps({"footprint": self.footprint.tolist(),
                           "rooms": [list(r) for r in self.rooms]})

    @classmethod
    def from_json(cls, text: str) -> "Layout2D":
        data = json.loads(text)
        fp = validate_polygon(np.asarray(data["footprint"], dtype=np.float64))
        if signed_area(fp) < 0:
            fp = fp[::-1].copy()
        rooms = tuple(tuple(float(c) for c in r) for r in data.get("rooms", []))
        for x0, y0, x1, y1 in rooms:
            if not (x0 < x1 and y0 < y1):
                raise ValueError(f"degenerate room rectangle {(x0, y0, x1, y1)}")
        return cls(fp, rooms)


def load_layout(path) -> Layout2D:
    return Layout2D.from_json(Path(path).read_text())


def _boundary_from_cells(filled: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Trace the counterclockwise outline of a simply connected cell set."""
    ncol, nrow = filled.shape
    nxt = {}

    def cell(i, j):
        return 0 <= i < ncol and 0 <= j < nrow and filled[i, j]

    for i in range(ncol):
        for j in range(nrow):
            if not filled[i, j]:
                continue
            # unit edges with the interior on the left
            if not cell(i, j - 1):
                nxt[(i, j)] = (i + 1, j)
            if not cell(i + 1, j):
                nxt[(i + 1, j)] = (i + 1, j + 1)
            if not cell(i, j + 1):
                nxt[(i + 1, j + 1)] = (i, j + 1)
            if not cell(i - 1, j):
                nxt[(i, j + 1)] = (i, j)
    start = min(nxt)
    loop = [start]
    cur = nxt[start]
    while cur != start:
        loop.append(cur)
        cur = nxt[cur]
    if len(loop) != len(nxt):
        raise SynthesisFailure("cell set boundary is not a single loop")
    corners = []
    m = len(loop)
    for k in range(m):
        a, b, c = loop[k - 1], loop[k], loop[(k + 1) % m]
        if (b[0] - a[0], b[1] - a[1]) != (c[0] - b[0], c[1] - b[1]):
            corners.append(b)
    return np.array([[xs[i], ys[j]] for i, j in corners], dtype=np.float64)


def _carve(rng: np.random.Generator, ncol: int, nrow: int, notches: int) -> np.ndarray:
    filled = np.ones((ncol, nrow), dtype=bool)
    removed = np.zeros_like(filled)
    for _ in range(notches):
        for _attempt in range(20):
            side = int(rng.integers(4))
            corner = bool(rng.integers(2))
            along, across = (ncol, nrow) if side in (0, 2) else (nrow, ncol)
            depth = int(rng.integers(1, max(2, across // 2)))
            if corner:
                width = int(rng.integers(1, max(2, along // 2)))
                start = 0 if rng.integers(2) else along - width
            else:
                if along < 3:
                    continue
                width = int(rng.integers(1, along - 1))
                start = int(rng.integers(1, along - width))
                if start + width > along - 1:
                    continue
            mask = np.zeros_like(filled)
            if side == 0:
                mask[start:start + width, :depth] = True
            elif side == 2:
                mask[start:start + width, nrow - depth:] = True
            elif side == 1:
                mask[ncol - depth:, start:start + width] = True
            else:
                mask[:depth, start:start + width] = True
            grown = mask.copy()
            grown[1:] |= mask[:-1]
            grown[:-1] |= mask[1:]
            grown[:, 1:] |= grown[:, :-1].copy()
            grown[:, :-1] |= grown[:, 1:].copy()
            if np.any(grown & removed):
                continue
            trial = filled & ~mask
            if not trial[:, 1:-1].any(axis=0).all() or not trial[1:-1, :].any(axis=1).all():
                continue
            filled, removed = trial, removed | mask
            break
    return filled


def _largest_filled_rect(filled: np.ndarray) -> tuple[int, int, int, int]:
    ncol, nrow = filled.shape
    best, best_area = (0, 0, 1, 1), -1
    for i0 in range(ncol):
        for i1 in range(i0 + 1, ncol + 1):
            for j0 in range(nrow):
                for j1 in range(j0 + 1, nrow + 1):
                    if filled[i0:i1, j0:j1].all():
                        area = (i1 - i0) * (j1 - j0)
                        if area > best_area:
                            best, best_area = (i0, j0, i1, j1), area
    return best


def _split_rooms(rng, rect, count, min_size):
    x0, y0, x1, y1 = rect
    if min(x1 - x0, y1 - y0) < min_size:
        return None
    rooms = [rect]
    while len(rooms) < count:
        order = sorted(range(len(rooms)),
                       key=lambda r: -(rooms[r][2] - rooms[r][0]) * (rooms[r][3] - rooms[r][1]))
        for idx in order:
            x0, y0, x1, y1 = rooms[idx]
            horizontal = (x1 - x0) >= (y1 - y0)
            span = (x1 - x0) if horizontal else (y1 - y0)
            if span < 2 * min_size:
                continue
            frac = float(rng.uniform(0.35, 0.65))
            cut = max(min_size, min(span - min_size, span * frac))
            if horizontal:
                a, b = (x0, y0, x0 + cut, y1), (x0 + cut, y0, x1, y1)
            else:
                a, b = (x0, y0, x1, y0 + cut), (x0, y0 + cut, x1, y1)
            rooms[idx:idx + 1] = [a, b]
            break
        else:
            return None
    return rooms


def generate_layout(cfg: SynthesisConfig, rng: np.random.Generator,
                    max_retries: int = 200) -> Layout2D:
    """Rectangle-with-notches footprint and a recursively split room block.

    Rooms are inset from the footprint and from each other by a margin, so
    they never touch the exterior walls or one another.
    """
    lo_c, hi_c = cfg.footprint_complexity
    lo_r, hi_r = cfg.room_count_range
    for _ in range(max_retries):
        ncol, nrow = int(rng.integers(3, 7)), int(rng.integers(3, 7))
        xs = np.concatenate([[0.0], np.cumsum(rng.uniform(2.0, 5.0, ncol))])
        ys = np.concatenate([[0.0], np.cumsum(rng.uniform(2.0, 5.0, nrow))])
        xs, ys = np.round(xs, 2), np.round(ys, 2)
        notches = int(rng.integers(0, (hi_c - 4) // 2 + 1))
        filled = _carve(rng, ncol, nrow, notches)
        try:
            footprint = _boundary_from_cells(filled, xs, ys)
        except SynthesisFailure:
            continue
        if not lo_c <= len(footprint) <= hi_c:
            continue
        room_count = int(rng.integers(lo_r, hi_r + 1))
        rooms: list = []
        if room_count:
            i0, j0, i1, j1 = _largest_filled_rect(filled)
            margin = 0.04 * float(max(xs[-1], ys[-1]))
            core = (xs[i0] + margin, ys[j0] + margin, xs[i1] - margin, ys[j1] - margin)
            split = _split_rooms(rng, core, room_count, min_size=4 * margin)
            if split is None:
                continue
            half = margin / 2
            rooms = [tuple(round(c, 6) for c in (x0 + half, y0 + half, x1 - half, y1 - half))
                     for x0, y0, x1, y1 in split]
        return Layout2D(footprint, tuple(rooms))
    raise SynthesisFailure(f"no valid layout after {max_retries} attempts")


def random_rectilinear_polygon(rng: np.random.Generator, corners: tuple[int, int] = (4, 12),
                               snap: float | None = None) -> np.ndarray:
    """Footprint-style rectilinear polygon; ``snap`` rounds cell sizes to a grid."""
    for _ in range(500):
        ncol, nrow = int(rng.integers(3, 7)), int(rng.integers(3, 7))
        w = rng.uniform(1.0, 4.0, ncol)
        h = rng.uniform(1.0, 4.0, nrow)
        if snap:
            w = np.maximum(snap, np.round(w / snap) * snap)
            h = np.maximum(snap, np.round(h / snap) * snap)
        xs = np.concatenate([[0.0], np.cumsum(w)])
        ys = np.concatenate([[0.0], np.cumsum(h)])
        filled = _carve(rng, ncol, nrow, int(rng.integers(0, (corners[1] - 4) // 2 + 1)))
        try:
            poly = _boundary_from_cells(filled, xs, ys)
        except SynthesisFailure:
            continue
        if corners[0] <= len(poly) <= corners[1]:
            return poly
    raise SynthesisFailure("could not draw a rectilinear polygon")
