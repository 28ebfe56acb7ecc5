"""Planar shape descriptors shared by buildings, cells and blocks."""

from __future__ import annotations

import math

import numpy as np
import shapely

CORNER_TOLERANCE = 10.0  # degrees from straight before a vertex counts as a corner


def fold_cardinal(angle: float) -> float:
    """Deviation of an azimuth (degrees) from the nearest cardinal axis, in [0, 45]."""
    a = math.fmod(angle, 90.0)
    if a < 0:
        a += 90.0
    return min(a, 90.0 - a)


def _mrr_sides(geom) -> tuple[np.ndarray, float, float]:
    """First side vector and both side lengths of the minimum-area rotated rectangle.

    Rotating calipers over the convex hull edges. GEOS collapses the rectangle
    to a segment when the hull has nearly collinear vertices, so it is not used.
    """
    hull = shapely.get_coordinates(shapely.convex_hull(geom))
    edges = np.diff(hull, axis=0)
    length = np.hypot(edges[:, 0], edges[:, 1])
    keep = length > 0
    if not keep.any():
        return np.zeros(2), 0.0, 0.0
    u = edges[keep] / length[keep, None]
    v = np.column_stack([-u[:, 1], u[:, 0]])
    pu, pv = hull @ u.T, hull @ v.T
    w = pu.max(axis=0) - pu.min(axis=0)
    h = pv.max(axis=0) - pv.min(axis=0)
    k = int(np.argmin(w * h))
    return u[k] * w[k], float(w[k]), float(h[k])


def orientation(geom) -> float:
    """Cardinal orientation of the minimum rotated rectangle, in [0, 45] degrees."""
    e1, l1, l2 = _mrr_sides(geom)
    if l1 == 0 and l2 == 0:
        return 0.0
    return fold_cardinal(math.degrees(math.atan2(e1[1], e1[0])))


def line_orientation(line) -> float:
    """Cardinal orientation of the chord joining a line's endpoints."""
    xy = np.asarray(line.coords)
    d = xy[-1] - xy[0]
    return fold_cardinal(math.degrees(math.atan2(d[1], d[0])))


def elongation(geom) -> float:
    _, l1, l2 = _mrr_sides(geom)
    long_, short = max(l1, l2), min(l1, l2)
    return short / long_ if long_ > 0 else float("nan")


def _circle_two(a, b):
    c = (a + b) / 2
    return c, float(np.hypot(*(a - c)))


def _circle_three(a, b, c):
    d = 2 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    scale = max(np.ptp([a[0], b[0], c[0]]), np.ptp([a[1], b[1], c[1]]), 1.0)
    if abs(d) <= 1e-12 * scale * scale:
        # collinear: the widest pair spans the other point
        return max((_circle_two(p, q) for p, q in ((a, b), (a, c), (b, c))), key=lambda t: t[1])
    bb, cc = b - a, c - a
    ux = (cc[1] * (bb @ bb) - bb[1] * (cc @ cc)) / d
    uy = (bb[0] * (cc @ cc) - cc[0] * (bb @ bb)) / d
    return a + np.array([ux, uy]), float(np.hypot(ux, uy))


def bounding_circle(geom) -> tuple[np.ndarray, float]:
    """Centre and radius of the smallest circle enclosing ``geom``.

    Incremental construction over the convex hull vertices, visited in a fixed
    order. Used instead of GEOS, which can return a circle that misses hull
    vertices when several of them are nearly collinear. Points may sit outside
    the circle by up to 1e-9 times the largest coordinate magnitude.
    """
    pts = np.unique(shapely.get_coordinates(shapely.convex_hull(geom)), axis=0)
    if len(pts) == 0:
        return np.full(2, np.nan), float("nan")
    pts = pts[np.random.default_rng(0).permutation(len(pts))]
    eps = 1e-9 * max(1.0, float(np.abs(pts).max()))

    def outside(p, c, r):
        return np.hypot(*(p - c)) > r + eps

    c, r = pts[0], 0.0
    for i in range(1, len(pts)):
        if not outside(pts[i], c, r):
            continue
        c, r = pts[i], 0.0
        for j in range(i):
            if not outside(pts[j], c, r):
                continue
            c, r = _circle_two(pts[i], pts[j])
            for k in range(j):
                if outside(pts[k], c, r):
                    c, r = _circle_three(pts[i], pts[j], pts[k])
    return c, r


def circular_compactness(geom) -> float:
    r = bounding_circle(geom)[1]
    return geom.area / (math.pi * r * r) if r > 0 else float("nan")


def longest_axis(geom) -> float:
    return 2.0 * bounding_circle(geom)[1]


def equivalent_rectangular_index(geom) -> float:
    _, l1, l2 = _mrr_sides(geom)
    a_mrr = l1 * l2
    if a_mrr <= 0 or geom.length <= 0:
        return float("nan")
    return math.sqrt(geom.area / a_mrr) * (2 * (l1 + l2)) / geom.length


def compactness_weighted_axis(geom) -> float:
    p = geom.length
    if p <= 0:
        return float("nan")
    return longest_axis(geom) * (4.0 / math.pi - 16.0 * geom.area / (p * p))


def _exterior(geom):
    if geom.geom_type == "MultiPolygon":
        geom = max(geom.geoms, key=lambda g: g.area)
    return np.asarray(geom.exterior.coords)[:-1, :2]


def corner_angles(geom) -> tuple[np.ndarray, np.ndarray]:
    """Corner vertices of the exterior ring and their unsigned angles (degrees).

    An angle is measured between the two edges meeting at the vertex, in
    [0, 180]; vertices within ``CORNER_TOLERANCE`` of straight are skipped.
    """
    pts = _exterior(geom)
    # drop repeated vertices so edge vectors are never zero
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.any(pts[1:] != pts[:-1], axis=1)
    pts = pts[keep]
    if len(pts) > 1 and np.all(pts[0] == pts[-1]):
        pts = pts[:-1]
    n = len(pts)
    if n < 3:
        return np.empty((0, 2)), np.empty(0)
    prev = np.roll(pts, 1, axis=0) - pts
    nxt = np.roll(pts, -1, axis=0) - pts
    cos = np.einsum("ij,ij->i", prev, nxt) / (np.linalg.norm(prev, axis=1) * np.linalg.norm(nxt, axis=1))
    ang = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    mask = ang <= 180.0 - CORNER_TOLERANCE
    return pts[mask], ang[mask]


def corners(geom) -> int:
    return int(len(corner_angles(geom)[1]))


def squareness(geom) -> float:
    _, ang = corner_angles(geom)
    if not len(ang):
        return float("nan")
    return float(np.mean(np.abs(90.0 - ang)))


def centroid_corner(geom) -> tuple[float, float]:
    """Mean and population standard deviation of centroid-to-corner distances."""
    pts, _ = corner_angles(geom)
    if not len(pts):
        return float("nan"), float("nan")
    c = geom.centroid
    d = np.hypot(pts[:, 0] - c.x, pts[:, 1] - c.y)
    return float(d.mean()), float(d.std())


def courtyard_area(geom) -> float:
    polys = geom.geoms if geom.geom_type == "MultiPolygon" else [geom]
    return float(sum(shapely.Polygon(r).area for p in polys for r in p.interiors))
