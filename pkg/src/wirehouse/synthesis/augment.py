"""Training-time augmentation: quarter-turn rotation, YOZ mirror, scale, shift."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..wireframe import Wireframe, normalize

# exact quarter-turn rotations about the vertical (z) axis
_QUARTER = {
    0: np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=np.float64),
    1: np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1]], dtype=np.float64),
    2: np.array([[-1, 0, 0], [0, -1, 0], [0, 0, 1]], dtype=np.float64),
    3: np.array([[0, 1, 0], [-1, 0, 0], [0, 0, 1]], dtype=np.float64),
}
_MIRROR = np.diag([-1.0, 1.0, 1.0])


@dataclass(frozen=True)
class AugmentParams:
    quarter_turns: int = 0
    mirror: bool = False
    scale: tuple = (1.0, 1.0, 1.0)
    shift: tuple = (0.0, 0.0, 0.0)


def draw_params(rng: np.random.Generator) -> AugmentParams:
    return AugmentParams(
        quarter_turns=int(rng.integers(4)),
        mirror=bool(rng.integers(2)),
        scale=tuple(rng.uniform(0.9, 1.1, 3).tolist()),
        shift=tuple(rng.uniform(-0.1, 0.1, 3).tolist()),
    )


def symmetry_matrix(quarter_turns: int, mirror: bool) -> np.ndarray:
    m = _QUARTER[quarter_turns % 4]
    return m @ _MIRROR if mirror else m


def apply_symmetry(w: Wireframe, quarter_turns: int, mirror: bool = False) -> Wireframe:
    return Wireframe(w.vertices @ symmetry_matrix(quarter_turns, mirror).T, w.segments)


def symmetry_variants(w: Wireframe) -> list[Wireframe]:
    """The 8 rotation/mirror images used to expand evaluation references."""
    return [apply_symmetry(w, q, m) for m in (False, True) for q in range(4)]


def apply_params(w: Wireframe, p: AugmentParams) -> Wireframe:
    v = w.vertices @ symmetry_matrix(p.quarter_turns, p.mirror).T
    v = v * np.asarray(p.scale) + np.asarray(p.shift)
    out = Wireframe(v, w.segments)
    if np.abs(v).max() > 1.0:
        out = normalize(out)
    return out


def augment(w: Wireframe, rng: np.random.Generator) -> Wireframe:
    return apply_params(w, draw_params(rng))
