"""Independent oracles shared by the test modules.

Everything here is deliberately naive (float/Fraction loops, exhaustive
scans) so that it shares no code path with the package under test.
"""

from fractions import Fraction
from itertools import combinations

import numpy as np


def exact_orient(a, b, c):
    ax, ay, bx, by, cx, cy = map(Fraction, (*a, *b, *c))
    d = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    return (d > 0) - (d < 0)


def exact_incircle(a, b, c, d):
    """+1 strictly inside circumcircle of ccw (a, b, c)."""
    rows = []
    for p in (a, b, c):
        px, py = Fraction(p[0]) - Fraction(d[0]), Fraction(p[1]) - Fraction(d[1])
        rows.append((px, py, px * px + py * py))
    (a1, a2, a3), (b1, b2, b3), (c1, c2, c3) = rows
    det = (a1 * (b2 * c3 - b3 * c2) - a2 * (b1 * c3 - b3 * c1) + a3 * (b1 * c2 - b2 * c1))
    return (det > 0) - (det < 0)


def empty_circumcircle_violations(points, triangles):
    """Exhaustive check; returns (triangle, point) pairs that break Delaunay."""
    pts = [tuple(map(float, p)) for p in points]
    bad = []
    # float prefilter by circumcircle, exact confirmation
    P = np.asarray(points, dtype=float)
    for t in triangles:
        a, b, c = (pts[i] for i in t)
        ax, ay = a
        bx, by = b
        cx, cy = c
        d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
        ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay)
              + (cx * cx + cy * cy) * (ay - by)) / d
        uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx)
              + (cx * cx + cy * cy) * (bx - ax)) / d
        r2 = (ax - ux) ** 2 + (ay - uy) ** 2
        dist2 = (P[:, 0] - ux) ** 2 + (P[:, 1] - uy) ** 2
        for k in np.nonzero(dist2 < r2 * (1 + 1e-9))[0]:
            if k in t:
                continue
            if exact_incircle(a, b, c, pts[k]) > 0:
                bad.append((tuple(t), int(k)))
    return bad


def hull_size(points):
    """Number of input points on the convex hull boundary (collinear included)."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float).tolist())))
    if len(pts) <= 2:
        return len(pts)

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and exact_orient(out[-2], out[-1], p) < 0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(reversed(pts))
    return len(lower) + len(upper) - 2


def point_in_triangle(p, a, b, c, tol2=1e-9):
    def side(u, v):
        o = (v[0] - u[0]) * (p[1] - u[1]) - (v[1] - u[1]) * (p[0] - u[0])
        e2 = (v[0] - u[0]) ** 2 + (v[1] - u[1]) ** 2
        return o >= 0 or o * o <= tol2 * e2
    return side(a, b) and side(b, c) and side(c, a)


def brute_locate(vertices, triangles, p):
    for t, (i, j, k) in enumerate(triangles):
        if point_in_triangle(p, vertices[i], vertices[j], vertices[k]):
            return t
    return -1


def grid_mesh(nx, ny):
    """Structured grid of (nx+1) x (ny+1) vertices, each cell split on its
    main diagonal; returns (vertices, triangles) with ccw triangles."""
    verts = [(float(i), float(j)) for j in range(ny + 1) for i in range(nx + 1)]
    idx = lambda i, j: j * (nx + 1) + i
    tris = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    return np.array(verts), np.array(tris)


def _float_orient(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def segments_properly_cross(p1, p2, q1, q2):
    if max(p1[0], p2[0]) < min(q1[0], q2[0]) or max(q1[0], q2[0]) < min(p1[0], p2[0]) \
            or max(p1[1], p2[1]) < min(q1[1], q2[1]) or max(q1[1], q2[1]) < min(p1[1], p2[1]):
        return False
    fo = [_float_orient(p1, p2, q1), _float_orient(p1, p2, q2),
          _float_orient(q1, q2, p1), _float_orient(q1, q2, p2)]
    if min(abs(v) for v in fo) > 1e-6:
        return fo[0] * fo[1] < 0 and fo[2] * fo[3] < 0
    o1 = exact_orient(p1, p2, q1)
    o2 = exact_orient(p1, p2, q2)
    o3 = exact_orient(q1, q2, p1)
    o4 = exact_orient(q1, q2, p2)
    return o1 * o2 < 0 and o3 * o4 < 0


def random_noncrossing_segments(points, count, rng, max_tries=20000):
    """Random segments between input points that neither cross each other
    nor pass through other input points (exact tests)."""
    pts = [tuple(map(float, p)) for p in points]
    chosen = []
    tries = 0
    while len(chosen) < count and tries < max_tries:
        tries += 1
        a, b = (int(v) for v in rng.choice(len(pts), 2, replace=False))
        if (min(a, b), max(a, b)) in {(min(x, y), max(x, y)) for x, y in chosen}:
            continue
        pa, pb = pts[a], pts[b]
        # keep segments short-ish so they are not trivially blocked
        if (pa[0] - pb[0]) ** 2 + (pa[1] - pb[1]) ** 2 > 0.25 ** 2 * 1e4:
            continue
        ok = True
        # float prefilter: only near-collinear points inside the box need the exact test
        P = np.asarray(points, dtype=float)
        cross = (pb[0] - pa[0]) * (P[:, 1] - pa[1]) - (pb[1] - pa[1]) * (P[:, 0] - pa[0])
        inbox = ((P[:, 0] >= min(pa[0], pb[0])) & (P[:, 0] <= max(pa[0], pb[0]))
                 & (P[:, 1] >= min(pa[1], pb[1])) & (P[:, 1] <= max(pa[1], pb[1])))
        scale = np.abs(P).max() + 1.0
        for k in np.nonzero(inbox & (np.abs(cross) <= 1e-9 * scale * scale))[0]:
            if k in (a, b):
                continue
            if exact_orient(pa, pb, pts[k]) == 0:
                ok = False
                break
        if not ok:
            continue
        for x, y in chosen:
            if len({a, b, x, y}) < 4:
                continue
            if segments_properly_cross(pa, pb, pts[x], pts[y]):
                ok = False
                break
        if ok:
            chosen.append((a, b))
    return chosen


def all_triples(n):
    return combinations(range(n), 3)
