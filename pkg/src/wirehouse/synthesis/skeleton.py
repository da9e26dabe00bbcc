"""Straight skeleton of a simple polygon by kinetic wavefront propagation.

Every wavefront vertex moves so that it stays on the inward offsets of its two
supporting edge lines. The next event (an edge shrinking to zero, or a reflex
vertex reaching a wavefront edge) is found by scanning all candidates; the
whole wavefront is then advanced to that time and a cleanup pass resolves
everything that happens there at once: touching vertices are inserted into
edges, coincident vertices are clustered, polygons are split where a cluster
occurs twice, and collapsed pieces are retired. Resolving all coincident
events together is what makes exact ties on rectilinear inputs collapse
deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EVENT_TOL = 1e-9


class InvalidPolygon(ValueError):
    pass


class SkeletonError(RuntimeError):
    pass


@dataclass(frozen=True)
class SkeletonGraph:
    """Nodes 0..k-1 are the input polygon corners (time 0), in input order."""

    points: np.ndarray
    times: np.ndarray
    arcs: tuple
    boundary_count: int

    @property
    def node_count(self) -> int:
        return len(self.points)

    def degree(self) -> np.ndarray:
        deg = np.zeros(self.node_count, dtype=np.int64)
        for a, b in self.arcs:
            deg[a] += 1
            deg[b] += 1
        return deg


def _cross(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = _cross(b - a, c - a)
        return 0 if abs(v) < 1e-15 else (1 if v > 0 else -1)

    def on_seg(a, b, c):
        return (min(a[0], b[0]) - 1e-15 <= c[0] <= max(a[0], b[0]) + 1e-15
                and min(a[1], b[1]) - 1e-15 <= c[1] <= max(a[1], b[1]) + 1e-15)

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and on_seg(p1, p2, q1)) or (o2 == 0 and on_seg(p1, p2, q2))
            or (o3 == 0 and on_seg(q1, q2, p1)) or (o4 == 0 and on_seg(q1, q2, p2)))


def validate_polygon(poly) -> np.ndarray:
    p = np.asarray(poly, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 2 or len(p) < 3:
        raise InvalidPolygon("polygon needs at least 3 two-dimensional vertices")
    if not np.all(np.isfinite(p)):
        raise InvalidPolygon("non-finite coordinate")
    k = len(p)
    if len({tuple(q) for q in p.tolist()}) != k:
        raise InvalidPolygon("repeated vertex")
    for i in range(k):
        a, b = p[i], p[(i + 1) % k]
        for j in range(i + 1, k):
            c, d = p[j], p[(j + 1) % k]
            if j == i + 1 or (i == 0 and j == k - 1):
                # neighbours share one endpoint; reject fold-backs
                shared = b if j == i + 1 else a
                other_1 = a if j == i + 1 else b
                other_2 = d if j == i + 1 else c
                u, v = other_1 - shared, other_2 - shared
                if abs(_cross(u, v)) < 1e-15 and np.dot(u, v) > 0:
                    raise InvalidPolygon(f"edges {i} and {j} overlap")
                continue
            if _segments_intersect(a, b, c, d):
                raise InvalidPolygon(f"edges {i} and {j} intersect")
    if abs(signed_area(p)) == 0.0:
        raise InvalidPolygon("zero-area polygon")
    return p


class _Vertex:
    __slots__ = ("origin", "t0", "vel", "e_in", "e_out", "node")

    def __init__(self, origin, t0, e_in, e_out, node, normals):
        self.origin = np.asarray(origin, dtype=np.float64)
        self.t0 = t0
        self.e_in = e_in
        self.e_out = e_out
        self.node = node
        self.vel = _velocity(normals[e_in], normals[e_out])

    def at(self, t: float) -> np.ndarray:
        return self.origin + self.vel * (t - self.t0)


def _velocity(n1, n2) -> np.ndarray:
    det = _cross(n1, n2)
    if abs(det) < 1e-12:
        if np.dot(n1, n2) > 0:
            return n1.copy()
        raise SkeletonError("antiparallel wavefront edges at a vertex")
    # solve n1.v = 1, n2.v = 1
    return np.array([(n2[1] - n1[1]) / det, (n1[0] - n2[0]) / det])


class _Builder:
    def __init__(self, poly: np.ndarray, order: list[int]):
        k = len(poly)
        self.k = k
        pts = poly[order]
        d = np.roll(pts, -1, axis=0) - pts
        self.dirs = d / np.linalg.norm(d, axis=1, keepdims=True)
        self.normals = np.stack([-self.dirs[:, 1], self.dirs[:, 0]], axis=1)
        self.anchors = pts.copy()
        scale = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
        self.tol = 1e-8 * max(1.0, scale)
        self.points = [poly[i].copy() for i in range(k)]
        self.times = [0.0] * k
        self.arcs: list[tuple[int, int]] = []
        # wavefront edge j runs from vertex j to j+1 on the line of input edge j
        verts = [_Vertex(pts[j], 0.0, (j - 1) % k, j, order[j], self.normals) for j in range(k)]
        self.polygons: list[list[_Vertex]] = [verts]

    # -- events ---------------------------------------------------------------
    def next_event_time(self, t: float) -> float | None:
        best = None
        for poly in self.polygons:
            m = len(poly)
            for i in range(m):
                u, w = poly[i], poly[(i + 1) % m]
                d = self.dirs[u.e_out]
                rate = float(np.dot(w.vel - u.vel, d))
                if rate < -1e-12:
                    length = float(np.dot(w.at(t) - u.at(t), d))
                    te = t + max(length, 0.0) / -rate
                    best = te if best is None else min(best, te)
            for i, v in enumerate(poly):
                if _cross(self.dirs[v.e_in], self.dirs[v.e_out]) >= -1e-12:
                    continue
                pv = v.at(t)
                for j in range(m):
                    u, w = poly[j], poly[(j + 1) % m]
                    if u is v or w is v:
                        continue
                    e = u.e_out
                    n = self.normals[e]
                    rate = float(np.dot(v.vel, n)) - 1.0
                    if rate >= -1e-12:
                        continue
                    f0 = float(np.dot(pv - self.anchors[e], n)) - t
                    if f0 < -self.tol:
                        continue
                    th = t + max(f0, 0.0) / -rate
                    x = v.at(th)
                    pu, pw = u.at(th), w.at(th)
                    d = self.dirs[e]
                    length = float(np.dot(pw - pu, d))
                    s = float(np.dot(x - pu, d))
                    if length < -self.tol or s < -self.tol or s > length + self.tol:
                        continue
                    best = th if best is None else min(best, th)
        return best

    # -- cleanup at an event time ---------------------------------------------
    def resolve(self, t: float) -> None:
        tol = self.tol
        cluster_nodes: dict[int, int] = {}
        new_polys: list[list[_Vertex]] = []
        for poly in self.polygons:
            # slot: [position, e_in, e_out, members(list of _Vertex)]
            slots = [[v.at(t), v.e_in, v.e_out, [v]] for v in poly]
            slots = self._insert_touching(slots)
            # cluster coincident slots (transitively), ordered by (x, y)
            n = len(slots)
            parent = list(range(n))

            def find(a):
                while parent[a] != a:
                    parent[a] = parent[parent[a]]
                    a = parent[a]
                return a

            for a in range(n):
                for b in range(a + 1, n):
                    if np.linalg.norm(slots[a][0] - slots[b][0]) <= tol:
                        parent[find(a)] = find(b)
            groups: dict[int, list[int]] = {}
            for a in range(n):
                groups.setdefault(find(a), []).append(a)
            cid = {}
            for root, members in groups.items():
                pos = np.mean([slots[a][0] for a in members], axis=0)
                key = len(self._clusters)
                self._clusters.append((pos, [m for a in members for m in slots[a][3]]))
                for a in members:
                    cid[a] = key
            seq = [(cid[a], slots[a][1], slots[a][2]) for a in range(n)]
            for piece in self._split(seq):
                new_polys.append(self._rebuild(piece, t, cluster_nodes))
        self.polygons = []
        for piece in new_polys:
            if piece is not None:
                self.polygons.append(piece)

    def _insert_touching(self, slots):
        tol = self.tol
        changed = True
        while changed:
            changed = False
            m = len(slots)
            for i in range(m):
                p = slots[i][0]
                for j in range(m):
                    a, b = slots[j], slots[(j + 1) % m]
                    if i == j or i == (j + 1) % m:
                        continue
                    ab = b[0] - a[0]
                    L = float(np.linalg.norm(ab))
                    if L <= tol:
                        continue
                    s = float(np.dot(p - a[0], ab)) / L
                    if s <= tol or s >= L - tol:
                        continue
                    if abs(_cross(ab / L, p - a[0])) > tol:
                        continue
                    e = a[2]
                    slots.insert(j + 1, [p.copy(), e, e, []])
                    changed = True
                    break
                if changed:
                    break
        return slots

    @staticmethod
    def _split(seq):
        # merge consecutive equal clusters
        out = []
        for c in seq:
            if out and out[-1][0] == c[0]:
                out[-1] = (c[0], out[-1][1], c[2])
            else:
                out.append(c)
        if len(out) > 1 and out[0][0] == out[-1][0]:
            first = out.pop(0)
            out[-1] = (first[0], out[-1][1], first[2])
        if len(out) <= 1:
            return [out]
        seen = {}
        for i, c in enumerate(out):
            if c[0] in seen:
                j = seen[c[0]]
                a = [(c[0], c[1], out[j][2])] + out[j + 1:i]
                b = [(c[0], out[j][1], c[2])] + out[i + 1:] + out[:j]
                return _Builder._split(a) + _Builder._split(b)
            seen[c[0]] = i
        return [out]

    def _node_for(self, cluster: int, t: float, cluster_nodes: dict) -> int:
        if cluster in cluster_nodes:
            return cluster_nodes[cluster]
        pos, members = self._clusters[cluster]
        node = None
        for v in members:
            if np.linalg.norm(self.points[v.node] - pos) <= self.tol:
                node = v.node
                break
        if node is None:
            node = len(self.points)
            self.points.append(pos.copy())
            self.times.append(t)
        for v in members:
            if v.node != node:
                arc = (min(v.node, node), max(v.node, node))
                if arc not in self._arc_set:
                    self._arc_set.add(arc)
                    self.arcs.append((v.node, node))
        cluster_nodes[cluster] = node
        return node

    def _rebuild(self, piece, t, cluster_nodes):
        dead = len(piece) < 3
        if not dead:
            pts = np.array([self._clusters[c][0] for c, _, _ in piece])
            dead = signed_area(pts) <= self.tol ** 2
        if dead:
            nodes = [self._node_for(c, t, cluster_nodes) for c, _, _ in piece]
            m = len(nodes)
            for i in range(m if m > 2 else m - 1):
                a, b = nodes[i], nodes[(i + 1) % m]
                arc = (min(a, b), max(a, b))
                if a != b and arc not in self._arc_set:
                    self._arc_set.add(arc)
                    self.arcs.append((a, b))
            return None
        verts = []
        for c, e_in, e_out in piece:
            pos, members = self._clusters[c]
            if len(members) == 1 and members[0].e_in == e_in and members[0].e_out == e_out:
                verts.append(members[0])
            else:
                node = self._node_for(c, t, cluster_nodes)
                verts.append(_Vertex(pos, t, e_in, e_out, node, self.normals))
        return verts

    def run(self) -> None:
        self._clusters: list = []
        self._arc_set: set = set()
        t = 0.0
        guard = 0
        while self.polygons:
            guard += 1
            if guard > 50 * self.k + 100:
                raise SkeletonError("straight skeleton did not terminate")
            te = self.next_event_time(t)
            if te is None:
                raise SkeletonError("wavefront has no further events")
            t = max(t, te)
            self._clusters = []
            self.resolve(t)


def straight_skeleton(polygon) -> SkeletonGraph:
    """Straight skeleton of a simple polygon given as a (k, 2) vertex array.

    Clockwise input is accepted and traversed in reverse; node ``i < k`` is
    always input vertex ``i``.
    """
    p = validate_polygon(polygon)
    k = len(p)
    order = list(range(k)) if signed_area(p) > 0 else list(range(k - 1, -1, -1))
    b = _Builder(p, order)
    b.run()
    return SkeletonGraph(np.array(b.points), np.array(b.times), tuple(b.arcs), k)
