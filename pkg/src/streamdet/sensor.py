"""Range images, their point-cloud form, and angular slicing into wedges.

A full rotation is carved into ``n`` half-open wedges ``[2*pi*i/n, 2*pi*(i+1)/n)``.
Points keep the column-major (azimuth, then laser) order in which a spinning
sensor produces them, and each wedge preserves that order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

TWO_PI = 2.0 * math.pi


@dataclass
class RangeImage:
    """``rows`` lasers x ``cols`` azimuth bins; non-positive range means no return."""

    ranges: np.ndarray
    intensities: np.ndarray
    inclinations: np.ndarray

    def __post_init__(self):
        self.ranges = np.asarray(self.ranges, dtype=float)
        self.intensities = np.asarray(self.intensities, dtype=float)
        self.inclinations = np.asarray(self.inclinations, dtype=float).reshape(-1)
        if self.ranges.ndim != 2 or self.ranges.shape[0] < 1 or self.ranges.shape[1] < 1:
            raise InvalidInputError(f"ranges must be a non-empty 2-D array, got shape {self.ranges.shape}")
        if self.intensities.shape != self.ranges.shape:
            raise InvalidInputError("intensities must match ranges in shape")
        if self.inclinations.shape[0] != self.rows:
            raise InvalidInputError("need one inclination per row")
        hit = self.ranges > 0
        if not np.all(np.isfinite(self.ranges[hit])):
            raise InvalidInputError("ranges must be finite where a return exists")

    @property
    def rows(self) -> int:
        return self.ranges.shape[0]

    @property
    def cols(self) -> int:
        return self.ranges.shape[1]

    def azimuth_of_col(self, col) -> np.ndarray | float:
        """Ray azimuth at the center of column ``col``'s bin."""
        return column_azimuths(self.cols)[col]


def column_azimuths(cols: int) -> np.ndarray:
    return TWO_PI * (np.arange(cols) + 0.5) / cols


def wrap_azimuth(az) -> np.ndarray:
    """Map angles into ``[0, 2*pi)``; exactly 2*pi (after rounding) becomes 0."""
    a = np.mod(np.asarray(az, dtype=float), TWO_PI)
    a = np.where(a >= TWO_PI, 0.0, a)
    return a


@dataclass
class PointCloud:
    """Columnar point storage in streaming order.

    ``col`` is the source range-image column (-1 when unknown) and ``index`` the
    position in the originating scan, which survives slicing.
    """

    xyz: np.ndarray
    intensity: np.ndarray
    azimuth: np.ndarray
    col: np.ndarray
    index: np.ndarray

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros(0), np.zeros(0), np.zeros(0, dtype=np.int64),
                   np.zeros(0, dtype=np.int64))

    @classmethod
    def from_xyz(cls, xyz, intensity=None, col=None) -> "PointCloud":
        xyz = np.asarray(xyz, dtype=float).reshape(-1, 3)
        n = len(xyz)
        intensity = np.zeros(n) if intensity is None else np.asarray(intensity, dtype=float).reshape(-1)
        col = np.full(n, -1, dtype=np.int64) if col is None else np.asarray(col, dtype=np.int64).reshape(-1)
        az = wrap_azimuth(np.arctan2(xyz[:, 1], xyz[:, 0]))
        return cls(xyz, intensity, az, col, np.arange(n, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.xyz)

    def __getitem__(self, sel) -> "PointCloud":
        return PointCloud(self.xyz[sel], self.intensity[sel], self.azimuth[sel], self.col[sel], self.index[sel])

    @property
    def xy(self) -> np.ndarray:
        return self.xyz[:, :2]

    @property
    def planar_range(self) -> np.ndarray:
        return np.hypot(self.xyz[:, 0], self.xyz[:, 1])

    @staticmethod
    def concat(clouds) -> "PointCloud":
        clouds = list(clouds)
        if not clouds:
            return PointCloud.empty()
        return PointCloud(
            np.concatenate([c.xyz for c in clouds]),
            np.concatenate([c.intensity for c in clouds]),
            np.concatenate([c.azimuth for c in clouds]),
            np.concatenate([c.col for c in clouds]),
            np.concatenate([c.index for c in clouds]),
        )


@dataclass(frozen=True)
class SliceSpec:
    n: int
    index: int

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInputError(f"slice count must be >= 1, got {self.n}")
        if not 0 <= self.index < self.n:
            raise InvalidInputError(f"slice index {self.index} outside [0, {self.n})")

    @property
    def bounds(self) -> tuple[float, float]:
        return wedge_bounds(self.n, self.index)


@dataclass
class Wedge:
    spec: SliceSpec
    points: PointCloud

    def __len__(self) -> int:
        return len(self.points)


def range_image_to_points(img: RangeImage) -> PointCloud:
    """One point per returning cell, ordered by column then row."""
    az_col = column_azimuths(img.cols)
    r = img.ranges.T  # (cols, rows): column-major streaming order
    hit = r > 0
    cols_idx, rows_idx = np.nonzero(hit)
    rng = r[hit]
    inc = img.inclinations[rows_idx]
    az = az_col[cols_idx]
    ci = np.cos(inc)
    xyz = np.stack([rng * ci * np.cos(az), rng * ci * np.sin(az), rng * np.sin(inc)], axis=1)
    cloud = PointCloud.from_xyz(xyz, img.intensities.T[hit], cols_idx)
    return cloud


def wedge_bounds(n: int, index: int) -> tuple[float, float]:
    """Half-open azimuth interval ``[lo, hi)`` of wedge ``index`` out of ``n``."""
    if n < 1:
        raise InvalidInputError(f"slice count must be >= 1, got {n}")
    if not 0 <= index < n:
        raise InvalidInputError(f"slice index {index} outside [0, {n})")
    return TWO_PI * index / n, TWO_PI * (index + 1) / n


def wedge_index(azimuth, n: int) -> np.ndarray:
    """Wedge id of each azimuth, consistent with :func:`wedge_bounds` at exact edges."""
    if n < 1:
        raise InvalidInputError(f"slice count must be >= 1, got {n}")
    az = wrap_azimuth(azimuth)
    idx = np.floor(az * n / TWO_PI).astype(np.int64)
    idx = np.clip(idx, 0, n - 1)
    # the product above can round across an edge; re-check against the exact bounds
    lo = TWO_PI * idx / n
    hi = TWO_PI * (idx + 1) / n
    idx = np.where(az < lo, idx - 1, idx)
    idx = np.where(az >= hi, idx + 1, idx)
    return np.clip(idx, 0, n - 1)


def slice_points(points: PointCloud, n: int) -> list[Wedge]:
    """Partition a cloud into ``n`` wedges in streaming order (stable within wedges)."""
    idx = wedge_index(points.azimuth, n)
    order = np.argsort(idx, kind="stable")
    cuts = np.searchsorted(idx[order], np.arange(1, n))
    return [Wedge(SliceSpec(n, i), points[part]) for i, part in enumerate(np.split(order, cuts))]


# --- file formats -----------------------------------------------------------

def write_point_cloud(path, cloud: PointCloud) -> None:
    """Headerless little-endian float32 records of (x, y, z, intensity)."""
    rec = np.empty((len(cloud), 4), dtype="<f4")
    rec[:, :3] = cloud.xyz
    rec[:, 3] = cloud.intensity
    Path(path).write_bytes(rec.tobytes())


def read_point_cloud(path) -> PointCloud:
    raw = Path(path).read_bytes()
    if len(raw) % 16:
        raise InvalidInputError(f"{path}: byte length {len(raw)} is not a multiple of 16")
    rec = np.frombuffer(raw, dtype="<f4").reshape(-1, 4).astype(float)
    return PointCloud.from_xyz(rec[:, :3], rec[:, 3])


def write_range_image(path, img: RangeImage) -> None:
    """JSON header at ``path`` plus a sibling ``.bin`` with ranges then intensities."""
    path = Path(path)
    data = path.with_suffix(".bin")
    header = {"rows": img.rows, "cols": img.cols,
              "inclinations": [float(x) for x in img.inclinations], "data": data.name}
    path.write_text(json.dumps(header, indent=1) + "\n")
    blob = np.concatenate([img.ranges.ravel(), img.intensities.ravel()]).astype("<f4")
    data.write_bytes(blob.tobytes())


def read_range_image(path) -> RangeImage:
    path = Path(path)
    try:
        header = json.loads(path.read_text())
        rows, cols = int(header["rows"]), int(header["cols"])
        incl = np.asarray(header["inclinations"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"{path}: bad range-image header ({exc})") from exc
    data = path.parent / header.get("data", path.with_suffix(".bin").name)
    raw = data.read_bytes()
    if len(raw) != 2 * rows * cols * 4:
        raise InvalidInputError(f"{data}: expected {2 * rows * cols * 4} bytes, got {len(raw)}")
    blob = np.frombuffer(raw, dtype="<f4").astype(float)
    return RangeImage(blob[: rows * cols].reshape(rows, cols), blob[rows * cols:].reshape(rows, cols), incl)
