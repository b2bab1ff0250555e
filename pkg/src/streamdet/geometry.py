"""Oriented-box geometry: footprints, convex clipping, IoU, hulls, rectangle fits.

Boxes use a 7-parameter layout ``(cx, cy, cz, length, width, height, heading)``
where ``length`` runs along ``heading`` in the x-y plane.  Polygons are
counter-clockwise arrays of shape ``(k, 2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError

MERGE_TOL = 1e-9
AREA_TOL = 1e-12
MIN_EXTENT = 0.05

TWO_PI = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Wrap an angle into ``[-pi, pi)``."""
    t = math.fmod(theta + math.pi, TWO_PI)
    if t < 0.0:
        t += TWO_PI
    t -= math.pi
    # fmod can land exactly on +pi after the shift for inputs like -pi - eps
    if t >= math.pi:
        t -= TWO_PI
    return t


def _half_turn(theta: float) -> float:
    """Wrap an angle into ``[-pi/2, pi/2)`` (direction modulo pi)."""
    t = math.fmod(theta + math.pi / 2, math.pi)
    if t < 0.0:
        t += math.pi
    t -= math.pi / 2
    if t >= math.pi / 2:
        t -= math.pi
    return t


@dataclass(frozen=True)
class OrientedBox:
    cx: float
    cy: float
    cz: float
    length: float
    width: float
    height: float
    heading: float = 0.0

    def __post_init__(self):
        for name in ("length", "width", "height"):
            v = getattr(self, name)
            if not (v > 0.0 and math.isfinite(v)):
                raise InvalidInputError(f"{name} must be positive and finite, got {v!r}")
        object.__setattr__(self, "heading", normalize_angle(float(self.heading)))

    @property
    def area(self) -> float:
        return self.length * self.width

    @property
    def volume(self) -> float:
        return self.length * self.width * self.height

    @property
    def z_min(self) -> float:
        return self.cz - self.height / 2

    @property
    def z_max(self) -> float:
        return self.cz + self.height / 2

    @property
    def radius(self) -> float:
        """Half-diagonal of the footprint; bounds every corner's distance from center."""
        return 0.5 * math.hypot(self.length, self.width)

    def corners(self) -> np.ndarray:
        return np.array(_corner_list(self))

    def params(self) -> tuple:
        return (self.cx, self.cy, self.cz, self.length, self.width, self.height, self.heading)


@dataclass(frozen=True)
class Footprint:
    """Top-down rectangle produced by :func:`min_area_rect` (no vertical extent)."""

    cx: float
    cy: float
    length: float
    width: float
    heading: float

    def to_box(self, cz: float, height: float) -> OrientedBox:
        return OrientedBox(self.cx, self.cy, cz, self.length, self.width, height, self.heading)

    def corners(self) -> np.ndarray:
        return np.array(_rect_corners(self.cx, self.cy, self.length, self.width, self.heading))


@dataclass(frozen=True)
class ConvexPolygon:
    vertices: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "vertices", v)

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def is_empty(self) -> bool:
        return len(self.vertices) == 0

    @property
    def area(self) -> float:
        return polygon_area(self)

    @classmethod
    def from_points(cls, pts: Iterable[Sequence[float]]) -> "ConvexPolygon":
        return cls(np.array(_cleanup(list(pts)), dtype=float).reshape(-1, 2))


def _rect_corners(cx, cy, length, width, heading):
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = length / 2, width / 2
    out = []
    for sl, sw in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
        dx, dy = sl * hl, sw * hw
        out.append((cx + c * dx - s * dy, cy + s * dx + c * dy))
    return out


def _corner_list(box: OrientedBox):
    return _rect_corners(box.cx, box.cy, box.length, box.width, box.heading)


def box_to_polygon(box: OrientedBox) -> ConvexPolygon:
    """Counter-clockwise footprint corners of ``box``."""
    return ConvexPolygon(np.array(_corner_list(box)))


def _shoelace(pts) -> float:
    n = len(pts)
    if n < 3:
        return 0.0
    s = 0.0
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def polygon_area(p: ConvexPolygon | np.ndarray) -> float:
    """Non-negative shoelace area; 0 for fewer than three vertices."""
    v = p.vertices if isinstance(p, ConvexPolygon) else np.asarray(p, dtype=float)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return abs(0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


def _cleanup(pts):
    """Merge near-duplicate consecutive vertices and drop slivers."""
    out = []
    for p in pts:
        if not out or math.hypot(p[0] - out[-1][0], p[1] - out[-1][1]) > MERGE_TOL:
            out.append((float(p[0]), float(p[1])))
    while len(out) > 1 and math.hypot(out[0][0] - out[-1][0], out[0][1] - out[-1][1]) <= MERGE_TOL:
        out.pop()
    if len(out) < 3 or abs(_shoelace(out)) < AREA_TOL:
        return []
    return out


def _clip(subject, clip):
    """Successive half-plane cuts of ``subject`` by each edge of ``clip`` (both CCW)."""
    out = subject
    m = len(clip)
    for i in range(m):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % m]
        ex, ey = bx - ax, by - ay
        inp = out
        out = []
        k = len(inp)
        for j in range(k):
            px, py = inp[j]
            qx, qy = inp[(j + 1) % k]
            sp = ex * (py - ay) - ey * (px - ax)
            sq = ex * (qy - ay) - ey * (qx - ax)
            if sp >= 0.0:
                out.append((px, py))
                if sq < 0.0:
                    t = sp / (sp - sq)
                    out.append((px + t * (qx - px), py + t * (qy - py)))
            elif sq >= 0.0:
                t = sp / (sp - sq)
                out.append((px + t * (qx - px), py + t * (qy - py)))
    return out


def convex_intersect(a: ConvexPolygon, b: ConvexPolygon) -> ConvexPolygon:
    """Intersection of two convex CCW polygons (empty polygon when disjoint)."""
    if len(a) < 3 or len(b) < 3:
        return ConvexPolygon()
    pts = _clip([tuple(p) for p in a.vertices.tolist()], [tuple(p) for p in b.vertices.tolist()])
    return ConvexPolygon.from_points(pts)


def _intersection_area(a: OrientedBox, b: OrientedBox) -> float:
    dx, dy = a.cx - b.cx, a.cy - b.cy
    reach = a.radius + b.radius
    if dx * dx + dy * dy >= reach * reach:
        return 0.0
    area = abs(_shoelace(_cleanup(_clip(_corner_list(a), _corner_list(b)))))
    return area if area >= AREA_TOL else 0.0


def iou_bev(a: OrientedBox, b: OrientedBox) -> float:
    """IoU of the two boxes' top-down footprints."""
    if a.params() == b.params():
        return 1.0
    inter = _intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    union = a.area + b.area - inter
    return min(1.0, max(0.0, inter / union))


def iou_3d(a: OrientedBox, b: OrientedBox) -> float:
    """Volumetric IoU: footprint overlap times vertical overlap."""
    if a.params() == b.params():
        return 1.0
    dz = min(a.z_max, b.z_max) - max(a.z_min, b.z_min)
    if dz <= 0.0:
        return 0.0
    inter = _intersection_area(a, b) * dz
    if inter == 0.0:
        return 0.0
    union = a.volume + b.volume - inter
    return min(1.0, max(0.0, inter / union))


IOU_FUNCS = {"bev": iou_bev, "3d": iou_3d}


def get_iou(kind: str):
    try:
        return IOU_FUNCS[kind]
    except KeyError:
        raise InvalidInputError(f"unknown IoU kind {kind!r}; expected one of {sorted(IOU_FUNCS)}") from None


def convex_hull(points) -> ConvexPolygon:
    """Monotone-chain hull, counter-clockwise, collinear points dropped.

    Degenerate inputs give a 1-vertex (single point) or 2-vertex (collinear)
    polygon.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise InvalidInputError("convex_hull needs at least one point")
    pts = np.unique(pts, axis=0)  # lexicographic sort by (x, y)
    if len(pts) <= 2:
        return ConvexPolygon(pts)
    P = pts.tolist()

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in P:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(P):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) == 2 and hull[0] == hull[1]:
        hull = hull[:1]
    return ConvexPolygon(np.array(hull))


def min_area_rect(hull: ConvexPolygon | np.ndarray, min_extent: float = MIN_EXTENT) -> Footprint:
    """Minimum-area enclosing rectangle of a convex hull.

    Every candidate orientation is a hull edge direction; the winner is the
    smallest bounding rectangle among them.  ``length`` is the longer side and
    the heading is folded into ``[-pi/2, pi/2)``.  Extents are floored at
    ``min_extent`` so single points and segments still yield a valid box.
    """
    v = hull.vertices if isinstance(hull, ConvexPolygon) else np.asarray(hull, dtype=float).reshape(-1, 2)
    if len(v) == 0:
        raise InvalidInputError("min_area_rect needs at least one vertex")
    if len(v) == 1:
        return Footprint(float(v[0, 0]), float(v[0, 1]), min_extent, min_extent, 0.0)
    if len(v) == 2:
        d = v[1] - v[0]
        seg = float(np.hypot(*d))
        mid = (v[0] + v[1]) / 2
        heading = _half_turn(math.atan2(d[1], d[0])) if seg > 0 else 0.0
        return Footprint(float(mid[0]), float(mid[1]), max(seg, min_extent), min_extent, heading)

    edges = np.roll(v, -1, axis=0) - v
    norms = np.hypot(edges[:, 0], edges[:, 1])
    keep = norms > MERGE_TOL
    u = edges[keep] / norms[keep, None]
    nrm = np.stack([-u[:, 1], u[:, 0]], axis=1)
    pu = u @ v.T
    pn = nrm @ v.T
    lo_u, hi_u = pu.min(axis=1), pu.max(axis=1)
    lo_n, hi_n = pn.min(axis=1), pn.max(axis=1)
    areas = (hi_u - lo_u) * (hi_n - lo_n)
    i = int(np.argmin(areas))
    ext_u, ext_n = hi_u[i] - lo_u[i], hi_n[i] - lo_n[i]
    center = u[i] * (lo_u[i] + hi_u[i]) / 2 + nrm[i] * (lo_n[i] + hi_n[i]) / 2
    if ext_u >= ext_n:
        length, width, axis = ext_u, ext_n, u[i]
    else:
        length, width, axis = ext_n, ext_u, nrm[i]
    heading = _half_turn(math.atan2(axis[1], axis[0]))
    return Footprint(float(center[0]), float(center[1]), max(float(length), min_extent),
                     max(float(width), min_extent), heading)


def points_in_box_bev(box: OrientedBox, pts: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Boolean mask of 2-D points inside the footprint (inclusive, with tolerance)."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    c, s = math.cos(box.heading), math.sin(box.heading)
    dx, dy = pts[:, 0] - box.cx, pts[:, 1] - box.cy
    lu = c * dx + s * dy
    lv = -s * dx + c * dy
    return (np.abs(lu) <= box.length / 2 + tol) & (np.abs(lv) <= box.width / 2 + tol)
