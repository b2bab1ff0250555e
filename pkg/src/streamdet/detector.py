"""Per-slice clustering detectors.

Three entry points share one box fitter:

* ``detect_slice(..., mode="stateless")`` sees only the current wedge, so an
  object cut by a wedge edge comes out as several partial boxes.
* ``detect_slice(..., mode="carryover")`` holds clusters touching the upcoming
  wedge edge and re-clusters them with the next wedge's points, emitting one
  box per object.
* ``detect_full`` runs the same fitter on the whole rotation.

Boxes are fit to the visible points, then grown to class-typical extents
(``complete=True``).  Growth goes toward a wedge edge the cluster was cut by,
otherwise away from the sensor, since that is where the unseen part lies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import Delaunay, QhullError, cKDTree

from .errors import ContractViolation, InvalidInputError
from .geometry import Footprint, OrientedBox, convex_hull, min_area_rect, normalize_angle
from .sensor import PointCloud, SliceSpec, Wedge, slice_points, wedge_index

MODES = ("stateless", "carryover")
_DELAUNAY_MIN = 64


@dataclass(frozen=True)
class DetectorConfig:
    eps: float = 0.7
    min_points: int = 5
    boundary_band: float = 0.3
    tau: float = 20.0
    pedestrian_max_dim: float = 1.5
    min_extent: float = 0.05
    complete: bool = True
    orientation: str = "lshape"
    thin_extent: float = 0.5
    vehicle_min: tuple[float, float] = (3.5, 1.6)
    vehicle_typical: tuple[float, float] = (4.6, 2.0)
    pedestrian_typical: float = 0.8
    heading_cell: float = 0.05

    def __post_init__(self):
        if not self.eps > 0:
            raise InvalidInputError("eps must be positive")
        if self.min_points < 1:
            raise InvalidInputError("min_points must be >= 1")
        if self.orientation not in ("lshape", "min_area"):
            raise InvalidInputError(f"unknown orientation method {self.orientation!r}")


@dataclass(frozen=True)
class Detection:
    box: OrientedBox
    score: float
    cls: str
    slice_index: int = -1

    def __post_init__(self):
        if not (0.0 < self.score <= 1.0):
            raise InvalidInputError(f"score must lie in (0, 1], got {self.score!r}")

    def to_dict(self, scan_id=None) -> dict:
        b = self.box
        return {"scan_id": scan_id, "slice": self.slice_index, "class": self.cls, "score": self.score,
                "cx": b.cx, "cy": b.cy, "cz": b.cz, "l": b.length, "w": b.width, "h": b.height,
                "heading": b.heading}

    @classmethod
    def from_dict(cls, d: dict) -> "Detection":
        box = OrientedBox(d["cx"], d["cy"], d["cz"], d["l"], d["w"], d["h"], d["heading"])
        return cls(box, float(d["score"]), d["class"], int(d["slice"]))


@dataclass
class CarryState:
    n: int | None = None
    last_index: int = -1
    open_clusters: list[PointCloud] = field(default_factory=list)


# --- clustering -------------------------------------------------------------

def _kdtree_edges(xy, eps):
    return cKDTree(xy).query_pairs(eps, output_type="ndarray")


def _delaunay_edges(xy, eps):
    """Delaunay edges no longer than ``eps``.

    A Euclidean minimum spanning tree lives inside the Delaunay graph, so these
    edges connect exactly the same components as the full ``eps``-graph.
    """
    tri = Delaunay(xy)
    s = tri.simplices
    e = np.concatenate([s[:, [0, 1]], s[:, [1, 2]], s[:, [2, 0]]])
    e.sort(axis=1)
    d = xy[e[:, 0]] - xy[e[:, 1]]
    e = e[np.einsum("ij,ij->i", d, d) <= eps * eps]
    if len(tri.coplanar):
        # points qhull left out (duplicates): tie each to its nearest vertex
        cp = tri.coplanar[:, [0, 2]]
        d = xy[cp[:, 0]] - xy[cp[:, 1]]
        if np.any(np.einsum("ij,ij->i", d, d) > eps * eps):
            raise QhullError("coplanar point far from its vertex")
        e = np.concatenate([e, cp])
    return e


def _eps_edges(xy, eps):
    if len(xy) < _DELAUNAY_MIN:
        return _kdtree_edges(xy, eps)
    try:
        return _delaunay_edges(xy, eps)
    except QhullError:
        return _kdtree_edges(xy, eps)


def _components(n: int, edges) -> list[np.ndarray]:
    if n == 0:
        return []
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    graph = coo_matrix((np.ones(len(edges), dtype=np.int8), (edges[:, 0], edges[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    order = np.argsort(labels, kind="stable")
    cuts = np.flatnonzero(np.diff(labels[order])) + 1
    comps = np.split(order, cuts)
    comps.sort(key=lambda c: c[0])
    return comps


def cluster_points(points, eps: float) -> list[np.ndarray]:
    """Single-link components of the planar ``distance <= eps`` graph.

    Accepts a :class:`PointCloud` or an ``(N, >=2)`` array.  Components are index
    arrays (ascending), ordered by their smallest member.
    """
    if not eps > 0:
        raise InvalidInputError("eps must be positive")
    xy = points.xy if isinstance(points, PointCloud) else np.asarray(points, dtype=float)[:, :2]
    xy = np.ascontiguousarray(xy, dtype=float)
    return _components(len(xy), _eps_edges(xy, eps) if len(xy) else np.zeros((0, 2), np.int64))


@dataclass(frozen=True)
class ProximityGraph:
    """Short Delaunay edges of a whole scan, reusable for every slicing of it.

    Clustering a wedge with these edges is exact.  Wedges are convex sectors, so
    for two wedge points within ``eps`` where at least one lies farther than
    ``eps`` from the wedge edges, their diametral disk stays inside the wedge
    and the Gabriel-graph argument finds a path of short edges inside it.  The
    components this leaves apart can only be joined by pairs that are both
    near an edge, which are checked directly.
    Edges are stored by ``PointCloud.index`` so any subset can look them up.
    """

    eps: float
    size: int
    edges: np.ndarray
    azimuth: np.ndarray
    _split: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def build(cls, points: PointCloud, eps: float) -> "ProximityGraph":
        if not eps > 0:
            raise InvalidInputError("eps must be positive")
        xy = np.ascontiguousarray(points.xy, dtype=float)
        local = _eps_edges(xy, eps) if len(xy) else np.zeros((0, 2), np.int64)
        size = int(points.index.max()) + 1 if len(points) else 0
        az = np.full(size, np.nan)
        az[points.index] = points.azimuth
        return cls(float(eps), size, points.index[local].reshape(-1, 2), az)

    def _wedges(self, n: int):
        if n not in self._split:
            known = np.flatnonzero(~np.isnan(self.azimuth))
            w = np.full(self.size, -1, dtype=np.int64)
            w[known] = wedge_index(self.azimuth[known], n)
            e = self.edges
            we = w[e[:, 0]]
            keep = we == w[e[:, 1]]
            e, we = e[keep], we[keep]
            order = np.argsort(we, kind="stable")
            e_cuts = np.searchsorted(we[order], np.arange(1, n))
            m_order = np.argsort(w[known], kind="stable")
            m_cuts = np.searchsorted(w[known][m_order], np.arange(1, n))
            self._split[n] = (np.split(e[order], e_cuts), np.split(known[m_order], m_cuts))
        return self._split[n]

    def local_edges(self, pts: PointCloud, spec: SliceSpec | None = None) -> np.ndarray:
        """Stored edges with both ends in ``pts``, renumbered to positions in ``pts``."""
        if spec is not None:
            edges, members = self._wedges(spec.n)
            mine = members[spec.index]
            if len(mine) == len(pts) and np.array_equal(mine, pts.index):
                return np.searchsorted(mine, edges[spec.index])
        lut = np.full(self.size, -1, dtype=np.int64)
        lut[pts.index] = np.arange(len(pts))
        e = lut[self.edges]
        return e[(e >= 0).all(axis=1)]


def _ray_distance(xy: np.ndarray, azimuth: float) -> np.ndarray:
    u = np.array([math.cos(azimuth), math.sin(azimuth)])
    t = np.maximum(xy @ u, 0.0)
    return np.hypot(xy[:, 0] - t * u[0], xy[:, 1] - t * u[1])


def _near_mask(xy: np.ndarray, bounds, eps: float) -> np.ndarray:
    """Points within ``eps`` of either bounding ray (with a small safety margin)."""
    reach = eps + 1e-6
    return (_ray_distance(xy, bounds[0]) <= reach) | (_ray_distance(xy, bounds[1]) <= reach)


def _join_near(groups: list[np.ndarray], xy: np.ndarray, near: np.ndarray, eps: float,
               frozen: int = 0) -> list[np.ndarray]:
    """Merge connected groups that have a pair of near points within ``eps``.

    Each group is already connected, so one close pair joins two groups.  The
    first ``frozen`` groups are known to be mutually apart and are not compared
    with each other.
    """
    cand = []
    for gi, g in enumerate(groups):
        sub = g[near[g]]
        if len(sub):
            p = xy[sub]
            cand.append((gi, p, p.min(axis=0) - eps, p.max(axis=0) + eps))
    parent = list(range(len(groups)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    trees = {}
    for a in range(len(cand)):
        ga, pa, lo_a, hi_a = cand[a]
        for b in range(a + 1, len(cand)):
            gb, pb, lo_b, hi_b = cand[b]
            if gb < frozen or find(ga) == find(gb):
                continue
            if np.any(pa.min(axis=0) > hi_b) or np.any(pa.max(axis=0) < lo_b):
                continue
            small, big, key = (pa, pb, gb) if len(pa) <= len(pb) else (pb, pa, ga)
            if key not in trees:
                trees[key] = cKDTree(big)
            d, _ = trees[key].query(small, k=1, distance_upper_bound=np.nextafter(eps, np.inf))
            if np.any(d <= eps):
                parent[find(gb)] = find(ga)
    merged: dict[int, list] = {}
    for gi, g in enumerate(groups):
        merged.setdefault(find(gi), []).append(g)
    out = [np.sort(np.concatenate(m)) if len(m) > 1 else m[0] for m in merged.values()]
    out.sort(key=lambda c: c[0])
    return out


def _wedge_components(pts: PointCloud, graph: ProximityGraph, spec: SliceSpec) -> list[np.ndarray]:
    comps = _components(len(pts), graph.local_edges(pts, spec))
    if spec.n == 1 or len(comps) < 2:
        return comps
    return _join_near(comps, pts.xy, _near_mask(pts.xy, spec.bounds, graph.eps), graph.eps)


def _carry_components(carried: list[PointCloud], wedge_pts: PointCloud, graph: ProximityGraph,
                      spec: SliceSpec) -> tuple[PointCloud, list[np.ndarray]]:
    """Components of carried clusters plus a wedge's points, numbered in concat order.

    Carried clusters are already connected and mutually apart.  A carried point
    within ``eps`` of a wedge point lies outside the wedge, so both are within
    ``eps`` of a wedge edge and the near-point check finds the pair.
    """
    pts = PointCloud.concat(list(carried) + [wedge_pts])
    offset = sum(len(c) for c in carried)
    groups, start = [], 0
    for c in carried:
        groups.append(np.arange(start, start + len(c)))
        start += len(c)
    groups += [c + offset for c in _components(len(wedge_pts), graph.local_edges(wedge_pts, spec))]
    if spec.n == 1 or len(groups) < 2:
        return pts, sorted(groups, key=lambda c: c[0])
    return pts, _join_near(groups, pts.xy, _near_mask(pts.xy, spec.bounds, graph.eps), graph.eps,
                           frozen=len(carried))


# --- box fitting ------------------------------------------------------------

def classify_footprint(fp: Footprint, config: DetectorConfig = DetectorConfig()) -> str:
    return "pedestrian" if max(fp.length, fp.width) <= config.pedestrian_max_dim else "vehicle"


def cluster_score(count: int, tau: float) -> float:
    return 1.0 - math.exp(-count / tau)


def _rect_at(xy: np.ndarray, theta: float, min_extent: float) -> Footprint:
    u = np.array([math.cos(theta), math.sin(theta)])
    v = np.array([-u[1], u[0]])
    pu, pv = xy @ u, xy @ v
    lo_u, hi_u, lo_v, hi_v = pu.min(), pu.max(), pv.min(), pv.max()
    center = u * (lo_u + hi_u) / 2 + v * (lo_v + hi_v) / 2
    eu, ev = hi_u - lo_u, hi_v - lo_v
    if ev > eu:
        eu, ev, theta = ev, eu, theta + math.pi / 2
    return Footprint(float(center[0]), float(center[1]), max(float(eu), min_extent),
                     max(float(ev), min_extent), _fold(theta))


def _fold(theta: float) -> float:
    t = normalize_angle(theta)
    if t >= math.pi / 2:
        t -= math.pi
    elif t < -math.pi / 2:
        t += math.pi
    return t


def _closeness(xy: np.ndarray, thetas: np.ndarray, d0: float = 0.01) -> np.ndarray:
    c, s = np.cos(thetas)[:, None], np.sin(thetas)[:, None]
    c1 = c * xy[:, 0] + s * xy[:, 1]
    c2 = -s * xy[:, 0] + c * xy[:, 1]
    d1 = np.minimum(c1.max(axis=1, keepdims=True) - c1, c1 - c1.min(axis=1, keepdims=True))
    d2 = np.minimum(c2.max(axis=1, keepdims=True) - c2, c2 - c2.min(axis=1, keepdims=True))
    return (1.0 / np.maximum(np.minimum(d1, d2), d0)).sum(axis=1)


def lshape_heading(xy, step_deg: float = 1.0) -> float:
    """Heading of the rectangle whose edges hug the points best (closeness criterion).

    Orientations are searched on a ``step_deg`` grid over a quarter turn, then
    refined tenfold around the winner.  Robust for L-shaped partial views, where
    the hull's minimum-area rectangle often snaps to a diagonal.
    """
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    xy = xy - xy.mean(axis=0)
    step = math.radians(step_deg)
    coarse = np.arange(0.0, math.pi / 2, step)
    best = coarse[int(np.argmax(_closeness(xy, coarse)))]
    fine = best + np.linspace(-step, step, 21)
    theta = float(fine[int(np.argmax(_closeness(xy, fine)))])
    return theta


def _fit_footprint(xy: np.ndarray, config: DetectorConfig) -> Footprint:
    if config.orientation == "min_area" or len(xy) < 3:
        return min_area_rect(convex_hull(xy), config.min_extent)
    theta = lshape_heading(_thin(xy, config.heading_cell))
    return _rect_at(xy, theta, config.min_extent)


def _thin(xy: np.ndarray, cell: float) -> np.ndarray:
    """One point per occupied ``cell``-sized grid square, first in input order.

    A vertical face returns a stack of nearly identical planar points per
    column; the heading search only needs the footprint outline.
    """
    if cell <= 0 or len(xy) < 64:
        return xy
    keys = np.floor(xy / cell).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return xy[np.sort(first)]


def _grow(fp: Footprint, targets, cut_dirs) -> Footprint:
    """Extend each footprint axis shorter than its target.

    ``cut_dirs`` are unit vectors pointing across wedge edges the cluster was cut
    by.  The axis best aligned with a cut grows toward it; other axes grow away
    from the sensor.
    """
    axes = _axes(fp)
    ext = [fp.length, fp.width]
    center = np.array([fp.cx, fp.cy])
    outward = center / (np.linalg.norm(center) or 1.0)
    cut_axis = {}
    for d in cut_dirs:
        k = _aligned_axis(axes, d)
        cut_axis.setdefault(k, set()).add(float(np.sign(axes[k] @ d)) or 1.0)
    new_center = center.copy()
    for k in (0, 1):
        if ext[k] >= targets[k]:
            continue
        grow = targets[k] - ext[k]
        if k in cut_axis:
            signs = cut_axis[k]
            shift = 0.0 if len(signs) > 1 else next(iter(signs)) * grow / 2
        else:
            shift = (float(np.sign(axes[k] @ outward)) or 1.0) * grow / 2
        new_center = new_center + shift * axes[k]
        ext[k] = targets[k]
    length, width, heading = ext[0], ext[1], fp.heading
    if width > length:
        length, width, heading = width, length, fp.heading + math.pi / 2
    return Footprint(float(new_center[0]), float(new_center[1]), length, width, _fold(heading))


def _axes(fp: Footprint):
    c, s = math.cos(fp.heading), math.sin(fp.heading)
    return np.array([c, s]), np.array([-s, c])


def _aligned_axis(axes, d) -> int:
    return int(abs(axes[1] @ d) > abs(axes[0] @ d))


def complete_footprint(fp: Footprint, cls: str, cut_dirs=(), config: DetectorConfig = DetectorConfig()) -> Footprint:
    """Grow a visible-surface footprint to a plausible full object footprint.

    Pedestrians are squared up.  For vehicles, an axis whose visible extent is
    below ``thin_extent`` (a single face was seen) or that was cut by a wedge
    edge grows to the typical size; other axes only grow to the class minimum.

    A cut axis is only a lower bound, so when a cut is present the uncut axis
    decides the roles: if it is wider than any plausible width it is the
    length, otherwise the cut axis is.  Without a cut, a lone short face (both
    extents small) means the unseen depth is the length.
    """
    axes = _axes(fp)
    cut = {_aligned_axis(axes, d) for d in cut_dirs}
    if cls != "vehicle":
        side = max(fp.length, fp.width)
        if cut:
            side = max(side, config.pedestrian_typical)
        return _grow(fp, (side, side), cut_dirs)
    ext = (fp.length, fp.width)
    unseen = [e < config.thin_extent for e in ext]
    wide = config.vehicle_typical[1] + config.thin_extent
    if len(cut) == 1:
        kc = next(iter(cut))
        length_axis = 1 - kc if ext[1 - kc] > wide else kc
    else:
        length_axis = 1 if (ext[0] <= wide and unseen[1]) else 0
    roles = {length_axis: 0, 1 - length_axis: 1}  # footprint axis -> vehicle dimension
    targets = [0.0, 0.0]
    for k in (0, 1):
        dim = roles[k]
        targets[k] = config.vehicle_typical[dim] if (unseen[k] or k in cut) else config.vehicle_min[dim]
    return _grow(fp, targets, cut_dirs)


def fit_box(points: PointCloud, cls: str | None = None, config: DetectorConfig = DetectorConfig(),
            slice_index: int = -1, cut_dirs=()) -> Detection | None:
    """Fit a scored box to one cluster, or ``None`` below ``min_points``.

    The vertical extent spans the points' z-range and the score is
    ``1 - exp(-count / tau)``.  ``cls`` defaults to a size rule on the raw
    (pre-completion) footprint.
    """
    count = len(points)
    if count < config.min_points:
        return None
    fp = _fit_footprint(points.xy, config)
    if cls is None:
        cls = classify_footprint(fp, config)
    if config.complete:
        fp = complete_footprint(fp, cls, cut_dirs, config)
    z = points.xyz[:, 2]
    zmin, zmax = float(z.min()), float(z.max())
    box = fp.to_box((zmin + zmax) / 2, max(zmax - zmin, config.min_extent))
    return Detection(box, cluster_score(count, config.tau), cls, slice_index)


# --- slice detectors --------------------------------------------------------

def _touches(points: PointCloud, azimuth: float, band: float) -> bool:
    if len(points) == 0:
        return False
    d = np.abs((points.azimuth - azimuth + math.pi) % (2 * math.pi) - math.pi)
    return bool(np.any(points.planar_range * d <= band))


def _across(azimuth: float, increasing: bool) -> np.ndarray:
    """Unit tangent at a wedge edge, pointing toward larger or smaller azimuth."""
    t = np.array([-math.sin(azimuth), math.cos(azimuth)])
    return t if increasing else -t


def detect_slice(wedge: Wedge, state: CarryState | None, config: DetectorConfig = DetectorConfig(),
                 mode: str = "stateless", graph: ProximityGraph | None = None) -> tuple[list[Detection], CarryState]:
    """Detect objects in one wedge, threading ``state`` through a rotation.

    Wedges of one scan must arrive in index order starting at 0.  ``graph``, if
    given, must be built from the whole scan with ``config.eps``; it only makes
    clustering faster.
    """
    if mode not in MODES:
        raise InvalidInputError(f"unknown detector mode {mode!r}")
    if graph is not None and graph.eps != config.eps:
        raise InvalidInputError("proximity graph was built with a different eps")
    n, index = wedge.spec.n, wedge.spec.index
    state = state if state is not None else CarryState()
    if state.n is not None and state.n != n:
        raise ContractViolation(f"slice count changed mid-scan ({state.n} -> {n})")
    if index != state.last_index + 1:
        raise ContractViolation(f"slice {index} presented after slice {state.last_index}")
    lo, hi = wedge.spec.bounds
    band = config.boundary_band
    label = index if n > 1 else -1
    last = index == n - 1

    if mode == "stateless":
        dets = []
        pts = wedge.points
        if graph is None:
            comps = cluster_points(pts, config.eps)
        else:
            comps = _wedge_components(pts, graph, wedge.spec)
        for comp in comps:
            cl = pts[comp]
            cuts = []
            if n > 1:
                if _touches(cl, lo, band):
                    cuts.append(_across(lo, increasing=False))
                if _touches(cl, hi, band):
                    cuts.append(_across(hi, increasing=True))
            det = fit_box(cl, None, config, label, cuts)
            if det is not None:
                dets.append(det)
        return dets, CarryState(n, index, [])

    if len(wedge.points) == 0 and not last:
        return [], CarryState(n, index, list(state.open_clusters))

    if graph is None:
        pts = PointCloud.concat(list(state.open_clusters) + [wedge.points])
        comps = cluster_points(pts, config.eps)
    else:
        pts, comps = _carry_components(state.open_clusters, wedge.points, graph, wedge.spec)
    dets, carry = [], []
    for comp in comps:
        cl = pts[comp]
        if n > 1 and not last and _touches(cl, hi, band):
            carry.append(cl)
            continue
        cuts = []
        # only the scan seam truncates: every other edge was seen past via carry
        if n > 1 and _touches(cl, 0.0, band):
            below = cl.azimuth > math.pi
            if np.any(~below):
                cuts.append(_across(0.0, increasing=False))
            if np.any(below):
                cuts.append(_across(0.0, increasing=True))
        det = fit_box(cl, None, config, label, cuts)
        if det is not None:
            dets.append(det)
    return dets, CarryState(n, index, carry)


def detect_scan(points: PointCloud, n: int, config: DetectorConfig = DetectorConfig(),
                mode: str = "stateless", graph: ProximityGraph | None = None) -> list[list[Detection]]:
    """Run :func:`detect_slice` over every wedge; returns per-slice detection lists.

    Pass a :class:`ProximityGraph` of ``points`` to reuse it across slice counts.
    """
    if graph is None:
        graph = ProximityGraph.build(points, config.eps)
    state = CarryState()
    out = []
    for wedge in slice_points(points, n):
        dets, state = detect_slice(wedge, state, config, mode, graph)
        out.append(dets)
    return out


def detect_full(points: PointCloud, config: DetectorConfig = DetectorConfig()) -> list[Detection]:
    """Whole-rotation baseline: a single wedge covering all azimuths."""
    return detect_scan(points, 1, config)[0]
