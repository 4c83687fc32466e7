"""Constrained Delaunay triangulation and point location.

Triangles live in a directed-edge dictionary: ``opp[(u, v)] = w`` means the
counter-clockwise triangle (u, v, w) exists.  Every structural change
(Bowyer-Watson cavity retriangulation, edge flip) is a handful of dict
updates, which keeps the bookkeeping small enough to read in one sitting.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from .core import MeshpixError, TriMesh
from .predicates import incircle, orient, orient_value, segments_cross

# Squared distance below which a point counts as lying on an edge.
ON_EDGE_TOL2 = 1e-9


class TriangulationError(MeshpixError, ValueError):
    pass


class ConstraintError(TriangulationError):
    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


def _hilbert_key(ix: int, iy: int, order: int) -> int:
    d = 0
    s = 1 << (order - 1)
    while s:
        rx = 1 if ix & s else 0
        ry = 1 if iy & s else 0
        d += s * s * ((3 * rx) ^ ry)
        if ry == 0:
            if rx == 1:
                ix = s - 1 - ix
                iy = s - 1 - iy
            ix, iy = iy, ix
        s >>= 1
    return d


def insertion_order(points: np.ndarray) -> list[int]:
    """Deterministic Hilbert-curve order so consecutive inserts stay local."""
    pts = np.asarray(points, dtype=np.float64)
    lo = pts.min(axis=0)
    span = max(float((pts.max(axis=0) - lo).max()), 1e-300)
    order = 16
    q = np.floor((pts - lo) / span * ((1 << order) - 1)).astype(np.int64)
    keys = [_hilbert_key(int(x), int(y), order) for x, y in q]
    return sorted(range(len(pts)), key=lambda i: (keys[i], i))


class Triangulation:
    """Mutable planar triangulation used while building a mesh."""

    def __init__(self, points):
        self.pts = [(float(x), float(y)) for x, y in np.asarray(points, dtype=np.float64)]
        self.n = len(self.pts)
        self.opp: dict[tuple[int, int], int] = {}
        self.vedge: dict[int, int] = {}
        self.constrained: set[tuple[int, int]] = set()
        self._last = None

    # -- primitive updates -------------------------------------------------
    def _add(self, a, b, c):
        opp = self.opp
        opp[(a, b)] = c
        opp[(b, c)] = a
        opp[(c, a)] = b
        self.vedge[a] = b
        self.vedge[b] = c
        self.vedge[c] = a
        self._last = (a, b)

    def _remove(self, a, b, c):
        opp = self.opp
        del opp[(a, b)]
        del opp[(b, c)]
        del opp[(c, a)]

    def _orient(self, a, b, c):
        pa, pb, pc = self.pts[a], self.pts[b], self.pts[c]
        return orient(pa[0], pa[1], pb[0], pb[1], pc[0], pc[1])

    def _incircle(self, a, b, c, d):
        pa, pb, pc, pd = self.pts[a], self.pts[b], self.pts[c], self.pts[d]
        return incircle(pa[0], pa[1], pb[0], pb[1], pc[0], pc[1], pd[0], pd[1])

    def flip(self, a, b):
        """Flip the edge shared by (a, b, c) and (b, a, d) to c-d."""
        c = self.opp[(a, b)]
        d = self.opp[(b, a)]
        self._remove(a, b, c)
        self._remove(b, a, d)
        self._add(a, d, c)
        self._add(d, b, c)
        return c, d

    def triangles(self) -> list[tuple[int, int, int]]:
        tris = [(u, v, w) for (u, v), w in self.opp.items() if u < v and u < w]
        tris.sort()
        return tris

    def has_edge(self, a, b) -> bool:
        return (a, b) in self.opp or (b, a) in self.opp

    # -- Delaunay construction --------------------------------------------
    def _walk(self, p, start):
        """Visibility walk to a triangle (a, b, c) that contains p (closed)."""
        px, py = self.pts[p]
        a, b = start
        c = self.opp[(a, b)]
        rot = 0
        for _ in range(4 * len(self.opp) + 16):
            tri = (a, b, c)
            moved = False
            for k in range(3):
                i = (k + rot) % 3
                u, v = tri[i], tri[(i + 1) % 3]
                pu, pv = self.pts[u], self.pts[v]
                if orient(pu[0], pu[1], pv[0], pv[1], px, py) < 0:
                    w = self.opp.get((v, u))
                    if w is None:
                        raise TriangulationError("point outside the triangulated region")
                    a, b, c = v, u, w
                    moved = True
                    break
            if not moved:
                return a, b, c
            rot += 1
        raise TriangulationError("point location did not terminate")

    def insert(self, p):
        """Bowyer-Watson insertion of vertex ``p``."""
        a, b, c = self._walk(p, self._last)
        for v in (a, b, c):
            if self.pts[v] == self.pts[p]:
                raise TriangulationError(f"duplicate point {self.pts[p]} (indices {v}, {p})")
        cavity = {_canon(a, b, c)}
        stack = [(a, b, c)]
        boundary = []
        while stack:
            tri = stack.pop()
            for i in range(3):
                u, v = tri[i], tri[(i + 1) % 3]
                w = self.opp.get((v, u))
                if w is None:
                    boundary.append((u, v))
                    continue
                key = _canon(v, u, w)
                if key in cavity:
                    continue
                if self._incircle(v, u, w, p) > 0:
                    cavity.add(key)
                    stack.append((v, u, w))
                else:
                    boundary.append((u, v))
        for tri in cavity:
            self._remove(*tri)
        for u, v in boundary:
            self._add(u, v, p)

    def _repair_hull(self):
        """Fill concave pockets left after deleting the bounding triangle."""
        while True:
            out_edge = {u: v for (u, v) in self.opp if (v, u) not in self.opp}
            touched = set()
            for u in sorted(out_edge):
                v = out_edge[u]
                w = out_edge.get(v)
                if w is None or w == u or touched & {u, v, w}:
                    continue
                if self._orient(u, v, w) < 0:
                    self._add(v, u, w)
                    touched.update((u, v, w))
            if not touched:
                return

    def legalize(self, edges=None):
        """Lawson flips until every unconstrained edge is locally Delaunay.

        Cocircular quads take the diagonal with the lexicographically
        smaller vertex pair, which makes the result order-independent.
        """
        if edges is None:
            edges = {(min(u, v), max(u, v)) for (u, v) in self.opp if (v, u) in self.opp}
            queue = deque(sorted(edges))
        else:
            queue = deque(edges)
        queued = set(queue)
        while queue:
            e = queue.popleft()
            queued.discard(e)
            a, b = e
            if e in self.constrained:
                continue
            c = self.opp.get((a, b))
            d = self.opp.get((b, a))
            if c is None or d is None:
                continue
            s = self._incircle(a, b, c, d)
            if s < 0:
                continue
            if s == 0 and (min(c, d), max(c, d)) >= e:
                continue
            if self._orient(a, d, c) <= 0 or self._orient(d, b, c) <= 0:
                continue
            self.flip(a, b)
            for u, v in ((a, d), (d, b), (b, c), (c, a)):
                k = (min(u, v), max(u, v))
                if k not in queued and (v, u) in self.opp and (u, v) in self.opp:
                    queue.append(k)
                    queued.add(k)

    @classmethod
    def delaunay(cls, points) -> "Triangulation":
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        n = len(pts)
        if n < 3:
            raise TriangulationError("need at least 3 points")
        if not np.all(np.isfinite(pts)):
            raise TriangulationError("non-finite coordinate")
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        span = float((hi - lo).max())
        if span == 0.0:
            raise TriangulationError("all points coincide")
        centre = (lo + hi) / 2.0
        big = 1000.0 * span
        sup = np.array([[centre[0] - 2 * big, centre[1] - big],
                        [centre[0] + 2 * big, centre[1] - big],
                        [centre[0], centre[1] + 2 * big]])
        tri = cls(np.vstack([pts, sup]))
        tri.n = n
        if all(tri._orient(0, 1, k) == 0 for k in range(2, n)):
            raise TriangulationError("all points collinear")
        tri._add(n, n + 1, n + 2)
        for p in insertion_order(pts):
            tri.insert(p)
        for (u, v, w) in [t for t in tri.triangles() if max(t) >= n]:
            tri._remove(u, v, w)
        del tri.pts[n:]
        for s in (n, n + 1, n + 2):
            tri.vedge.pop(s, None)
        tri._repair_hull()
        used = {u for (u, _v) in tri.opp}
        if len(used) != n:
            missing = sorted(set(range(n)) - used)
            raise TriangulationError(f"vertices left out of the triangulation: {missing[:5]}")
        tri.vedge = {u: v for (u, v) in tri.opp}
        tri._last = next(iter(tri.opp))
        tri.legalize()
        return tri

    # -- constraints ---------------------------------------------------------
    def _around(self, a):
        """Neighbours w of a with an existing directed edge (a, w)."""
        start = self.vedge[a]
        if (a, start) not in self.opp:
            start = next(v for (u, v) in self.opp if u == a)
        # rotate clockwise to the first edge (or full circle)
        w = start
        while True:
            prev = self.opp.get((w, a))
            if prev is None or prev == start:
                break
            w = prev
        first = w
        out = [first]
        while True:
            nxt = self.opp.get((a, out[-1]))
            if nxt is None or nxt == first:
                break
            if (a, nxt) not in self.opp:
                break
            out.append(nxt)
        return out

    def _crossing_edges(self, a, b):
        """Edges properly crossed by segment ab, in order from a to b."""
        pa, pb = self.pts[a], self.pts[b]
        found = None
        for p in self._around(a):
            q = self.opp[(a, p)]
            if p == b or q == b:
                return []
            op = self._orient(a, b, p)
            oq = self._orient(a, b, q)
            if op == 0 and _between(pa, pb, self.pts[p]):
                raise ConstraintError(f"constraint ({a}, {b}) passes through vertex {p}")
            if oq == 0 and _between(pa, pb, self.pts[q]):
                raise ConstraintError(f"constraint ({a}, {b}) passes through vertex {q}")
            if op < 0 and oq > 0:
                found = (p, q)
                break
        if found is None:
            raise ConstraintError(f"could not find the first edge crossed by ({a}, {b})")
        crossings = []
        right, left = found
        while True:
            e = (min(right, left), max(right, left))
            if e in self.constrained:
                raise ConstraintError(
                    f"constraint ({a}, {b}) crosses constraint {e}", pair=((a, b), e))
            crossings.append(e)
            r = self.opp.get((left, right))
            if r is None:
                raise ConstraintError(f"constraint ({a}, {b}) leaves the triangulation")
            if r == b:
                return crossings
            o = self._orient(a, b, r)
            if o == 0:
                raise ConstraintError(f"constraint ({a}, {b}) passes through vertex {r}")
            if o > 0:
                left = r
            else:
                right = r

    def insert_constraint(self, a, b):
        if a == b:
            raise ConstraintError(f"degenerate constraint ({a}, {a})")
        key = (min(a, b), max(a, b))
        crossings = self._crossing_edges(a, b)
        queue = deque(crossings)
        pa, pb = self.pts[a], self.pts[b]
        stall = 0
        while queue:
            u, v = queue.popleft()
            w1 = self.opp[(u, v)]
            w2 = self.opp[(v, u)]
            p1, p2 = self.pts[w1], self.pts[w2]
            pu, pv = self.pts[u], self.pts[v]
            if not segments_cross(pu[0], pu[1], pv[0], pv[1], p1[0], p1[1], p2[0], p2[1]):
                queue.append((u, v))
                stall += 1
                if stall > 2 * len(queue) + 8:
                    raise ConstraintError(f"constraint ({a}, {b}) could not be recovered")
                continue
            stall = 0
            self.flip(u, v)
            if w1 not in (a, b) and w2 not in (a, b) and segments_cross(
                    pa[0], pa[1], pb[0], pb[1], p1[0], p1[1], p2[0], p2[1]):
                queue.append((min(w1, w2), max(w1, w2)))
        self.constrained.add(key)

    def to_mesh(self, width=0, height=0) -> TriMesh:
        tris = np.array(self.triangles(), dtype=np.int64).reshape(-1, 3)
        cons = np.array(sorted(self.constrained), dtype=np.int64).reshape(-1, 2)
        return TriMesh(np.array(self.pts, dtype=np.float64).reshape(-1, 2), tris, cons,
                       np.zeros(0), width, height)


def _canon(a, b, c):
    if a < b and a < c:
        return (a, b, c)
    if b < c:
        return (b, c, a)
    return (c, a, b)


def _between(pa, pb, pq) -> bool:
    """For q collinear with a-b: is q strictly between them?"""
    if pq == pa or pq == pb:
        return False
    lo_x, hi_x = min(pa[0], pb[0]), max(pa[0], pb[0])
    lo_y, hi_y = min(pa[1], pb[1]), max(pa[1], pb[1])
    return lo_x <= pq[0] <= hi_x and lo_y <= pq[1] <= hi_y


def _from_mesh(mesh: TriMesh) -> Triangulation:
    tri = Triangulation(mesh.vertices)
    for a, b, c in mesh.triangles.tolist():
        tri._add(a, b, c)
    tri.constrained = {(min(a, b), max(a, b)) for a, b in mesh.constrained_edges.tolist()}
    return tri


def delaunay(points, width=0, height=0) -> TriMesh:
    """Delaunay triangulation of ``points`` (N x 2 array of x, y)."""
    return Triangulation.delaunay(points).to_mesh(width, height)


def constrain(mesh: TriMesh, constraints, skip_conflicts=False):
    """Force every segment in ``constraints`` to be a mesh edge.

    With ``skip_conflicts`` a segment that crosses an earlier constraint or
    runs through a vertex is dropped instead of raising; the dropped pairs
    are returned alongside the mesh.
    """
    constraints = [tuple(map(int, c)) for c in constraints]
    if not constraints:
        return (mesh, []) if skip_conflicts else mesh
    n = mesh.n_vertices
    for a, b in constraints:
        if not (0 <= a < n and 0 <= b < n):
            raise ConstraintError(f"constraint ({a}, {b}) references a missing vertex")
    tri = _from_mesh(mesh)
    skipped = []
    for a, b in constraints:
        try:
            tri.insert_constraint(a, b)
        except ConstraintError:
            if not skip_conflicts:
                raise
            skipped.append((a, b))
    tri.legalize()
    out = tri.to_mesh(mesh.width, mesh.height)
    return (out, skipped) if skip_conflicts else out


# ---------------------------------------------------------------- location

def _contains(verts, tri, x, y):
    """Closed containment with the on-edge tolerance."""
    for i in range(3):
        ux, uy = verts[tri[i]]
        vx, vy = verts[tri[(i + 1) % 3]]
        o = orient_value(ux, uy, vx, vy, x, y)
        if o < 0:
            ex, ey = vx - ux, vy - uy
            if o * o > ON_EDGE_TOL2 * (ex * ex + ey * ey):
                return False
    return True


def locate(mesh: TriMesh, p, start: int = 0) -> int:
    """Index of the triangle containing ``p``.

    Remembering walk from ``start``; when ``p`` lies on an edge or vertex
    the lowest-index incident triangle is returned.
    """
    x, y = float(p[0]), float(p[1])
    verts = mesh.vertices.tolist()
    tris = mesh.triangles.tolist()
    nbr = mesh_neighbors(mesh)
    t = int(start)
    came_from = -1
    for step in range(len(tris) + 8):
        tri = tris[t]
        moved = False
        for k in range(3):
            i = (k + step) % 3
            u, v = tri[(i + 1) % 3], tri[(i + 2) % 3]
            nb = nbr[t][i]
            if nb == came_from and nb >= 0:
                continue
            ux, uy = verts[u]
            vx, vy = verts[v]
            o = orient_value(ux, uy, vx, vy, x, y)
            ex, ey = vx - ux, vy - uy
            if o < 0 and o * o > ON_EDGE_TOL2 * (ex * ex + ey * ey):
                if nb < 0:
                    raise TriangulationError(f"point ({x}, {y}) is outside the mesh")
                came_from, t = t, nb
                moved = True
                break
        if not moved:
            if not _contains(verts, tri, x, y):
                break
            return _lowest_incident(mesh, verts, tris, t, x, y)
    # walk failed to converge (should not happen on valid meshes): scan
    for t, tri in enumerate(tris):
        if _contains(verts, tri, x, y):
            return t
    raise TriangulationError(f"point ({x}, {y}) is outside the mesh")


def _lowest_incident(mesh, verts, tris, t, x, y):
    best = t
    vt = vertex_triangles(mesh)
    for v in tris[t]:
        for s in vt[v]:
            if s < best and _contains(verts, tris[s], x, y):
                best = s
    return best


def mesh_neighbors(mesh: TriMesh) -> list[list[int]]:
    """``nbr[t][i]`` is the triangle across the edge opposite vertex i (or -1)."""
    cached = mesh.__dict__.get("_neighbors")
    if cached is not None:
        return cached
    owner = {}
    for t, (a, b, c) in enumerate(mesh.triangles.tolist()):
        owner[(a, b)] = (t, 2)
        owner[(b, c)] = (t, 0)
        owner[(c, a)] = (t, 1)
    nbr = [[-1, -1, -1] for _ in range(mesh.n_triangles)]
    for (u, v), (t, i) in owner.items():
        other = owner.get((v, u))
        if other is not None:
            nbr[t][i] = other[0]
    mesh.__dict__["_neighbors"] = nbr
    return nbr


def vertex_triangles(mesh: TriMesh) -> list[list[int]]:
    """Incident triangles of every vertex, ascending."""
    cached = mesh.__dict__.get("_vertex_triangles")
    if cached is not None:
        return cached
    vt = [[] for _ in range(mesh.n_vertices)]
    for t, tri in enumerate(mesh.triangles.tolist()):
        for v in tri:
            vt[v].append(t)
    mesh.__dict__["_vertex_triangles"] = vt
    return vt


def locate_grid(mesh: TriMesh, xs, ys) -> np.ndarray:
    """Triangle index for every grid point ``(xs[j], ys[i])``; -1 outside.

    Same containment tolerance and lowest-index tie rule as :func:`locate`.
    ``xs`` and ``ys`` must be sorted ascending.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    out = np.full(len(ys) * len(xs), np.iinfo(np.int64).max, dtype=np.int64)
    if mesh.n_triangles == 0:
        return np.full((len(ys), len(xs)), -1, dtype=np.int64)
    tv = mesh.vertices[mesh.triangles]  # (T, 3, 2)
    pad = math.sqrt(ON_EDGE_TOL2)
    lo = tv.min(axis=1) - pad
    hi = tv.max(axis=1) + pad
    x0 = np.searchsorted(xs, lo[:, 0], side="left")
    x1 = np.searchsorted(xs, hi[:, 0], side="right")
    y0 = np.searchsorted(ys, lo[:, 1], side="left")
    y1 = np.searchsorted(ys, hi[:, 1], side="right")
    nx = np.maximum(x1 - x0, 0)
    ny = np.maximum(y1 - y0, 0)
    counts = nx * ny
    total = int(counts.sum())
    tri_id = np.repeat(np.arange(mesh.n_triangles), counts)
    local = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    nxr = nx[tri_id]
    ix = x0[tri_id] + local % nxr
    iy = y0[tri_id] + local // nxr
    px, py = xs[ix], ys[iy]
    inside = np.ones(total, dtype=bool)
    for i in range(3):
        u = tv[tri_id, i]
        v = tv[tri_id, (i + 1) % 3]
        ex, ey = v[:, 0] - u[:, 0], v[:, 1] - u[:, 1]
        o = ex * (py - u[:, 1]) - ey * (px - u[:, 0])
        inside &= (o >= 0) | (o * o <= ON_EDGE_TOL2 * (ex * ex + ey * ey))
    flat = iy[inside] * len(xs) + ix[inside]
    np.minimum.at(out, flat, tri_id[inside])
    out[out == np.iinfo(np.int64).max] = -1
    return out.reshape(len(ys), len(xs))
