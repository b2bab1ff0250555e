"""Synthetic scenes and a ray-cast spinning LiDAR.

Objects stand on a flat ground plane ``ground_z`` below the sensor; the ground
itself returns nothing, so every point in a scan belongs to some object.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, PlacementError
from .geometry import OrientedBox, iou_bev, normalize_angle, points_in_box_bev
from .sensor import RangeImage, column_azimuths

CLASSES = ("vehicle", "pedestrian")
MAX_ATTEMPTS = 1000


@dataclass(frozen=True)
class ObjectTruth:
    id: int
    cls: str
    box: OrientedBox

    def __post_init__(self):
        if self.cls not in CLASSES:
            raise InvalidInputError(f"unknown class {self.cls!r}")

    def to_dict(self) -> dict:
        b = self.box
        return {"id": self.id, "class": self.cls, "cx": b.cx, "cy": b.cy, "cz": b.cz,
                "length": b.length, "width": b.width, "height": b.height, "heading": b.heading}

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectTruth":
        box = OrientedBox(d["cx"], d["cy"], d["cz"], d["length"], d["width"], d["height"], d["heading"])
        return cls(int(d["id"]), d["class"], box)


@dataclass
class Scene:
    objects: list[ObjectTruth]
    seed: int
    bounds: float


@dataclass
class SceneConfig:
    """Object counts and placement ranges (meters, planar distance from the sensor)."""

    n_vehicles: int = 20
    n_pedestrians: int = 20
    vehicle_range: tuple[float, float] = (4.0, 50.0)
    pedestrian_range: tuple[float, float] = (3.0, 35.0)
    bounds: float = 50.0
    ground_z: float = -1.8
    min_gap: float = 1.0
    origin_clearance: float = 1.0
    vehicle_length: tuple[float, float] = (3.5, 6.0)
    vehicle_width: tuple[float, float] = (1.6, 2.4)
    vehicle_height: tuple[float, float] = (1.4, 2.0)
    pedestrian_side: tuple[float, float] = (0.4, 1.2)
    pedestrian_height: tuple[float, float] = (1.5, 1.9)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise InvalidInputError(f"unknown scene config keys: {sorted(extra)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LidarParams:
    rows: int = 32
    cols: int = 1024
    inclination_min: float = math.radians(-15.0)
    inclination_max: float = math.radians(5.0)
    max_range: float = 75.0
    range_noise_sigma: float = 0.02

    def __post_init__(self):
        if self.rows < 1 or self.cols < 4:
            raise InvalidInputError("LidarParams need rows >= 1 and cols >= 4")
        if not self.max_range > 0 or self.range_noise_sigma < 0:
            raise InvalidInputError("LidarParams need max_range > 0 and sigma >= 0")

    @property
    def inclinations(self) -> np.ndarray:
        if self.rows == 1:
            return np.array([(self.inclination_min + self.inclination_max) / 2])
        return np.linspace(self.inclination_min, self.inclination_max, self.rows)

    @classmethod
    def from_dict(cls, d: dict) -> "LidarParams":
        d = dict(d)
        for key in ("inclination_min", "inclination_max"):
            deg = key + "_deg"
            if deg in d:
                d[key] = math.radians(d.pop(deg))
        return cls(**d)


def _sample_object(rng: np.random.Generator, cls: str, cfg: SceneConfig, oid: int) -> ObjectTruth:
    lo, hi = cfg.vehicle_range if cls == "vehicle" else cfg.pedestrian_range
    r = rng.uniform(max(lo, 2.0), min(hi, cfg.bounds))
    phi = rng.uniform(0.0, 2 * math.pi)
    heading = rng.uniform(-math.pi, math.pi)
    if cls == "vehicle":
        length = rng.uniform(*cfg.vehicle_length)
        width = rng.uniform(*cfg.vehicle_width)
        height = rng.uniform(*cfg.vehicle_height)
    else:
        length = width = rng.uniform(*cfg.pedestrian_side)
        height = rng.uniform(*cfg.pedestrian_height)
    box = OrientedBox(r * math.cos(phi), r * math.sin(phi), cfg.ground_z + height / 2,
                      length, width, height, heading)
    return ObjectTruth(oid, cls, box)


def _inflate(box: OrientedBox, margin: float) -> OrientedBox:
    return OrientedBox(box.cx, box.cy, box.cz, box.length + 2 * margin, box.width + 2 * margin,
                       box.height, box.heading)


def generate_scene(config: SceneConfig, seed: int) -> Scene:
    """Rejection-sample non-overlapping objects; vehicles first, then pedestrians.

    Footprints keep at least ``min_gap`` of clearance from each other (tested on
    rectangles inflated by half the gap) and ``origin_clearance`` from the sensor.
    """
    rng = np.random.default_rng(seed)
    placed: list[ObjectTruth] = []
    inflated: list[OrientedBox] = []
    plan = ["vehicle"] * config.n_vehicles + ["pedestrian"] * config.n_pedestrians
    origin = np.zeros((1, 2))
    for cls in plan:
        for _ in range(MAX_ATTEMPTS):
            obj = _sample_object(rng, cls, config, len(placed))
            if points_in_box_bev(obj.box, origin, tol=config.origin_clearance)[0]:
                continue
            fat = _inflate(obj.box, config.min_gap / 2)
            if any(iou_bev(fat, other) > 0.0 for other in inflated):
                continue
            placed.append(obj)
            inflated.append(fat)
            break
        else:
            raise PlacementError(f"could not place {cls} #{len(placed)} after {MAX_ATTEMPTS} attempts")
    return Scene(placed, seed, config.bounds)


def ray_box_distance(box: OrientedBox, dirs: np.ndarray):
    """Slab-method entry distance of unit rays from the origin into ``box``.

    Returns ``(t, axis)``: ``t`` is ``inf`` where the ray misses (or starts
    inside), ``axis`` the local axis (0=length, 1=width, 2=height) of the entry face.
    """
    c, s = math.cos(box.heading), math.sin(box.heading)
    # box-local ray origin and directions
    ox = -(c * box.cx + s * box.cy)
    oy = -(-s * box.cx + c * box.cy)
    oz = -box.cz
    dx = c * dirs[:, 0] + s * dirs[:, 1]
    dy = -s * dirs[:, 0] + c * dirs[:, 1]
    dz = dirs[:, 2]
    half = (box.length / 2, box.width / 2, box.height / 2)
    tmin = np.full(len(dirs), -np.inf)
    tmax = np.full(len(dirs), np.inf)
    axis = np.zeros(len(dirs), dtype=np.int64)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for k, (o, d, h) in enumerate(((ox, dx, half[0]), (oy, dy, half[1]), (oz, dz, half[2]))):
            parallel = np.abs(d) < 1e-15
            t1 = (-h - o) / d
            t2 = (h - o) / d
            near = np.where(parallel, np.where(abs(o) <= h, -np.inf, np.inf), np.minimum(t1, t2))
            far = np.where(parallel, np.where(abs(o) <= h, np.inf, -np.inf), np.maximum(t1, t2))
            better = near > tmin
            axis = np.where(better, k, axis)
            tmin = np.maximum(tmin, near)
            tmax = np.minimum(tmax, far)
    hit = (tmax >= tmin) & (tmin > 0)
    return np.where(hit, tmin, np.inf), axis


def ray_directions(params: LidarParams) -> np.ndarray:
    """Unit ray directions of shape ``(rows, cols, 3)``."""
    inc = params.inclinations[:, None]
    az = column_azimuths(params.cols)[None, :]
    return np.stack(np.broadcast_arrays(np.cos(inc) * np.cos(az), np.cos(inc) * np.sin(az), np.sin(inc)), axis=-1)


def _face_normal_cos(box: OrientedBox, dirs: np.ndarray, axis: np.ndarray) -> np.ndarray:
    c, s = math.cos(box.heading), math.sin(box.heading)
    local = np.stack([c * dirs[:, 0] + s * dirs[:, 1], -s * dirs[:, 0] + c * dirs[:, 1], dirs[:, 2]], axis=1)
    return np.abs(local[np.arange(len(dirs)), axis])


def _angular_reach(box: OrientedBox) -> tuple[float, float]:
    """Center azimuth and a conservative half-width of the box's azimuth cover."""
    r = math.hypot(box.cx, box.cy)
    center = math.atan2(box.cy, box.cx)
    if r <= box.radius:
        return center, math.pi
    return center, math.asin(min(1.0, box.radius / r)) + 1e-9


def simulate_scan(scene: Scene, params: LidarParams = LidarParams(), seed: int = 0) -> RangeImage:
    """Cast one ray per (laser, column); nearest hit wins, then Gaussian range noise.

    Noise is clamped to at least 0.1 m; cells with no hit inside ``max_range``
    get range -1 (no return).
    """
    dirs = ray_directions(params).reshape(-1, 3)
    cols = params.cols
    best = np.full(len(dirs), np.inf)
    inten = np.zeros(len(dirs))
    col_az = column_azimuths(cols)
    for obj in scene.objects:
        center, half = _angular_reach(obj.box)
        dphi = np.abs((col_az - center + math.pi) % (2 * math.pi) - math.pi)
        cand_cols = np.flatnonzero(dphi <= half + math.pi / cols)
        if len(cand_cols) == 0:
            continue
        ray_ids = (np.arange(params.rows)[:, None] * cols + cand_cols[None, :]).ravel()
        t, axis = ray_box_distance(obj.box, dirs[ray_ids])
        closer = t < best[ray_ids]
        if not closer.any():
            continue
        ids = ray_ids[closer]
        best[ids] = t[closer]
        inten[ids] = _face_normal_cos(obj.box, dirs[ids], axis[closer])
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, params.range_noise_sigma, size=len(dirs)) if params.range_noise_sigma > 0 else 0.0
    valid = best <= params.max_range
    ranges = np.where(valid, np.maximum(best + noise, 0.1), -1.0)
    inten = np.where(valid, inten, 0.0)
    return RangeImage(ranges.reshape(params.rows, cols), inten.reshape(params.rows, cols), params.inclinations)


def subtended_angle(obj: ObjectTruth | OrientedBox) -> float:
    """Width in degrees of the smallest azimuth interval covering the footprint corners."""
    box = obj.box if isinstance(obj, ObjectTruth) else obj
    if box.cx == 0.0 and box.cy == 0.0:
        raise InvalidInputError("subtended angle is undefined for an origin-centered object")
    center = math.atan2(box.cy, box.cx)
    rel = [normalize_angle(math.atan2(y, x) - center) for x, y in box.corners()]
    return math.degrees(max(rel) - min(rel))


def save_scene(path, scene: Scene) -> None:
    Path(path).write_text(json.dumps([o.to_dict() for o in scene.objects], indent=1) + "\n")


def load_truths(path) -> list[ObjectTruth]:
    try:
        data = json.loads(Path(path).read_text())
        return [ObjectTruth.from_dict(d) for d in data]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"{path}: bad scene file ({exc})") from exc
