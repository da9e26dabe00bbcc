"""Evaluation: point sampling, Chamfer / EMD, COV / MMD / 1-NN, connected-vertex
proportions, component-count divergence and novelty against the training set.

Chamfer distance here is the sum of the two mean *squared* nearest-neighbour
distances; the report records this in its ``chamfer`` field.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import warnings
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .synthesis.augment import symmetry_variants
from .wireframe import Wireframe, build_graph, connected_components

EXACT_EMD_LIMIT = 256
SINKHORN_EPS = 0.01
SINKHORN_ITERS = 500


def sample_points(w: Wireframe, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` points uniform by arc length over all segments of ``w``."""
    if w.num_segments == 0:
        raise ValueError("cannot sample points from an empty wireframe")
    a = w.vertices[w.segments[:, 0]]
    b = w.vertices[w.segments[:, 1]]
    length = np.linalg.norm(b - a, axis=1)
    seg = rng.choice(len(length), size=count, p=length / length.sum())
    t = rng.random(count)[:, None]
    return a[seg] + t * (b[seg] - a[seg])


def chamfer(a: np.ndarray, b: np.ndarray) -> float:
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer distance needs non-empty point sets")
    d2 = cdist(a, b, "sqeuclidean")
    return float(d2.min(axis=1).mean() + d2.min(axis=0).mean())


def emd_exact(a: np.ndarray, b: np.ndarray) -> float:
    cost = cdist(a, b)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def emd_sinkhorn(a: np.ndarray, b: np.ndarray, eps: float = SINKHORN_EPS,
                 iters: int = SINKHORN_ITERS) -> float:
    """Entropic optimal transport between uniform point sets (log-domain)."""
    cost = cdist(a, b)
    n = len(a)
    log_mu = np.full(n, -math.log(n))
    f = np.zeros(n)
    g = np.zeros(n)
    for _ in range(iters):
        f = eps * (log_mu - logsumexp((g[None, :] - cost) / eps, axis=1))
        g = eps * (log_mu - logsumexp((f[:, None] - cost) / eps, axis=0))
    plan = np.exp((f[:, None] + g[None, :] - cost) / eps)
    return float((plan * cost).sum() / plan.sum())


def emd(a: np.ndarray, b: np.ndarray) -> float:
    """Mean matched distance of the optimal one-to-one assignment.

    Exact (Hungarian) up to 256 points, entropic approximation above.
    """
    if len(a) != len(b):
        raise ValueError(f"emd needs equal point counts, got {len(a)} and {len(b)}")
    if len(a) == 0:
        raise ValueError("emd needs non-empty point sets")
    if len(a) <= EXACT_EMD_LIMIT:
        return emd_exact(a, b)
    return emd_sinkhorn(a, b)


def emd_bruteforce(a: np.ndarray, b: np.ndarray) -> float:
    cost = cdist(a, b)
    idx = np.arange(len(a))
    return min(cost[idx, list(p)].mean() for p in itertools.permutations(range(len(b))))


def pairwise(xs: list, ys: list, distance) -> np.ndarray:
    return np.array([[distance(x, y) for y in ys] for x in xs]).reshape(len(xs), len(ys))


def symmetric_pairwise(xs: list, distance) -> np.ndarray:
    n = len(xs)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = distance(xs[i], xs[j])
    return out


@dataclass(frozen=True)
class SetScores:
    cov: float
    mmd: float
    onenn: float


def set_scores(d_gr: np.ndarray, d_gg: np.ndarray, d_rr: np.ndarray) -> SetScores:
    """COV, MMD and 1-NN accuracy from the three distance matrices."""
    g, r = d_gr.shape
    if g == 0 or r == 0:
        raise ValueError("both sets must be non-empty")
    cov = len(set(np.argmin(d_gr, axis=1).tolist())) / r
    mmd = float(d_gr.min(axis=0).mean())
    full = np.block([[d_gg, d_gr], [d_gr.T, d_rr]]).astype(np.float64)
    np.fill_diagonal(full, np.inf)
    nearest = np.argmin(full, axis=1)
    is_gen = np.arange(g + r) < g
    onenn = float(np.mean(is_gen[nearest] == is_gen))
    return SetScores(float(cov), mmd, onenn)


def cov_mmd_1nn(gen: list, ref: list, distance) -> SetScores:
    return set_scores(pairwise(gen, ref, distance), symmetric_pairwise(gen, distance),
                      symmetric_pairwise(ref, distance))


def structural_validity(w: Wireframe) -> tuple[float, float]:
    """Fractions of vertices touching at least two and at least three segments."""
    if w.num_vertices == 0:
        warnings.warn("structural validity of an empty wireframe is (0, 0)", stacklevel=2)
        return 0.0, 0.0
    deg = w.degrees()
    return float(np.mean(deg >= 2)), float(np.mean(deg >= 3))


def component_count(w: Wireframe) -> int:
    return connected_components(build_graph(w)).component_count if w.num_segments else 0


def kld_components(gen_counts, ref_counts) -> float:
    """KL(P_gen || P_ref) of component-count histograms, add-one smoothed over
    the union of observed counts."""
    cg, cr = Counter(gen_counts), Counter(ref_counts)
    if not cg or not cr:
        raise ValueError("both sets must be non-empty")
    support = sorted(set(cg) | set(cr))
    p = np.array([cg[k] + 1 for k in support], dtype=np.float64)
    q = np.array([cr[k] + 1 for k in support], dtype=np.float64)
    p /= p.sum()
    q /= q.sum()
    return float(np.sum(p * np.log(p / q)))


@dataclass
class NoveltyHistogram:
    nearest_cd: list          # per generated sample
    nearest_train: list       # index of the closest training sample
    edges: list
    counts: list
    exemplars: list           # per bin: (generated index, train index) or None

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["bin_lo", "bin_hi", "count", "exemplar_generated", "exemplar_train"])
        for i, c in enumerate(self.counts):
            ex = self.exemplars[i]
            g, t = ("", "") if ex is None else ex
            out.writerow([repr(self.edges[i]), repr(self.edges[i + 1]), c, g, t])
        return buf.getvalue()


def novelty_histogram(gen: list, train: list, bins: int = 10,
                      distance=chamfer) -> NoveltyHistogram:
    """Distance from each generated point set to its nearest training set."""
    if not gen or not train:
        raise ValueError("both sets must be non-empty")
    d = pairwise(gen, train, distance)
    nearest = np.argmin(d, axis=1)
    best = d[np.arange(len(gen)), nearest]
    top = float(best.max()) if best.max() > 0 else 1.0
    counts, edges = np.histogram(best, bins=bins, range=(0.0, top))
    which = np.minimum(np.searchsorted(edges, best, side="right") - 1, bins - 1)
    exemplars = []
    for k in range(bins):
        members = np.flatnonzero(which == k)
        if len(members) == 0:
            exemplars.append(None)
        else:
            i = int(members[np.argmin(best[members])])
            exemplars.append((i, int(nearest[i])))
    return NoveltyHistogram(best.tolist(), nearest.tolist(), edges.tolist(),
                            counts.tolist(), exemplars)


def expand_references(refs: list) -> list:
    """Each reference wireframe in its 8 quarter-turn / mirror variants."""
    return [v for w in refs for v in symmetry_variants(w)]


@dataclass
class MetricReport:
    cov_cd: float
    cov_emd: float
    mmd_cd: float
    mmd_emd: float
    onenn_cd: float
    onenn_emd: float
    cvp2: float
    cvp3: float
    kld_components: float
    generated: int
    evaluated: int
    references: int
    novelty: dict = field(default_factory=dict)
    chamfer: str = "sum of mean squared nearest-neighbour distances"
    emd_method: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class EvalConfig:
    points: int = 512
    emd_points: int = 256
    novelty_bins: int = 10
    seed: int = 0


def evaluate(generated: list, references: list, train: list,
             cfg: EvalConfig = EvalConfig()) -> tuple[MetricReport, list]:
    """Full report plus per-generated-sample rows.

    References are expanded by the 8 symmetries before comparison. Empty
    generated wireframes count towards CVP and component statistics but are
    left out of the point-set metrics.
    """
    refs = expand_references(references)
    rng = np.random.default_rng(cfg.seed)
    nonempty = [i for i, w in enumerate(generated) if w.num_segments]
    if not nonempty:
        raise ValueError("no non-empty generated wireframes to evaluate")
    gen_pts = [sample_points(generated[i], cfg.points, rng) for i in nonempty]
    ref_pts = [sample_points(w, cfg.points, rng) for w in refs]
    train_pts = [sample_points(w, cfg.points, rng) for w in train]
    cd = set_scores(pairwise(gen_pts, ref_pts, chamfer),
                    symmetric_pairwise(gen_pts, chamfer), symmetric_pairwise(ref_pts, chamfer))
    m = cfg.emd_points
    gen_e = [p[:m] for p in gen_pts]
    ref_e = [p[:m] for p in ref_pts]
    em = set_scores(pairwise(gen_e, ref_e, emd), symmetric_pairwise(gen_e, emd),
                    symmetric_pairwise(ref_e, emd))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        validity = [structural_validity(w) for w in generated]
    kld = kld_components([component_count(w) for w in generated],
                         [component_count(w) for w in references])
    nov = novelty_histogram(gen_pts, train_pts, cfg.novelty_bins)
    method = "exact assignment" if m <= EXACT_EMD_LIMIT else f"sinkhorn eps={SINKHORN_EPS}"
    report = MetricReport(
        cov_cd=cd.cov, cov_emd=em.cov, mmd_cd=cd.mmd, mmd_emd=em.mmd,
        onenn_cd=cd.onenn, onenn_emd=em.onenn,
        cvp2=float(np.mean([v[0] for v in validity])),
        cvp3=float(np.mean([v[1] for v in validity])),
        kld_components=kld, generated=len(generated), evaluated=len(nonempty),
        references=len(refs),
        novelty=dict(edges=nov.edges, counts=nov.counts, exemplars=nov.exemplars),
        emd_method=f"{method}, {m} points")
    rows = []
    for k, i in enumerate(nonempty):
        w = generated[i]
        rows.append(dict(index=i, segments=w.num_segments, components=component_count(w),
                         cvp2=validity[i][0], cvp3=validity[i][1],
                         nearest_train_cd=nov.nearest_cd[k],
                         nearest_train=nov.nearest_train[k]))
    return report, rows


def rows_to_csv(rows: list) -> str:
    buf = io.StringIO()
    if rows:
        out = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        out.writeheader()
        out.writerows(rows)
    return buf.getvalue()
