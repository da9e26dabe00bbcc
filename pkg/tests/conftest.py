import numpy as np
import pytest

from wirehouse.synthesis import SynthesisConfig, synthesize_sample
from wirehouse.wireframe import Wireframe, cube_wireframe, normalize


def square(z=0.0, offset=(0.0, 0.0), size=1.0):
    x0, y0 = offset
    v = np.array([[x0, y0, z], [x0 + size, y0, z], [x0 + size, y0 + size, z],
                  [x0, y0 + size, z]])
    return v, np.array([[0, 1], [1, 2], [2, 3], [3, 0]])


def union(*parts):
    verts, segs, base = [], [], 0
    for v, s in parts:
        verts.append(v)
        segs.append(np.asarray(s) + base)
        base += len(v)
    return Wireframe(np.vstack(verts), np.vstack(segs))


def shuffled(w, rng):
    """Same wireframe with vertex and segment order permuted and endpoints flipped."""
    vp = rng.permutation(w.num_vertices)
    inv = np.empty_like(vp)
    inv[vp] = np.arange(len(vp))
    segs = inv[w.segments][rng.permutation(w.num_segments)]
    flip = rng.random(len(segs)) < 0.5
    segs[flip] = segs[flip][:, ::-1]
    return Wireframe(w.vertices[vp], segs)


@pytest.fixture
def cube():
    return cube_wireframe()


@pytest.fixture
def two_squares():
    return union(square(z=0.0), square(z=1.0, offset=(2.0, 0.0)))


@pytest.fixture(scope="session")
def desk_houses():
    cfg = SynthesisConfig(max_segments=100)
    out = []
    idx = 0
    while len(out) < 12:
        w, _ = synthesize_sample(cfg, idx)
        idx += 1
        if w.num_segments < cfg.max_segments:
            out.append(normalize(w))
    return out


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
