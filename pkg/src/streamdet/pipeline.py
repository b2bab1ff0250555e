"""Experiment orchestration: scene -> scan -> slices -> detector -> NMS -> metrics.

Four named variants mirror the streaming meta-architecture ladder:

``baseline``
    whole rotation, one detector call, greedy NMS over everything.
``localized``
    per-wedge stateless detector, NMS inside each wedge only.
``localized+statefulNMS``
    as above, plus suppression against the previous ``window_k`` wedges.
``localized+statefulNMS+carry``
    carry-over detector (clusters cross wedge edges) plus stateful NMS.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .detector import DetectorConfig, Detection, ProximityGraph, detect_scan
from .errors import InvalidInputError
from .latency import LatencyModel, expected_latency, peak_flops_fraction, worst_case_latency
from .metrics import BIN_LABELS, DEFAULT_THRESHOLDS, Accumulator, EvalReport, match_detections
from .nms import NmsConfig, global_nms, per_slice_nms, run_stateful
from .scene import CLASSES, LidarParams, ObjectTruth, SceneConfig, generate_scene, simulate_scan
from .sensor import PointCloud, RangeImage, range_image_to_points

log = logging.getLogger(__name__)

VARIANTS = ("baseline", "localized", "localized+statefulNMS", "localized+statefulNMS+carry")
NMS_MODES = ("global", "per_slice", "stateful")


@dataclass(frozen=True)
class Variant:
    name: str
    n: int = 1
    detector_mode: str = "stateless"
    nms_mode: str = "global"
    nms: NmsConfig = NmsConfig()

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInputError("slice count must be >= 1")
        if self.nms_mode not in NMS_MODES:
            raise InvalidInputError(f"unknown NMS mode {self.nms_mode!r}")
        if self.name == "baseline" and (self.n != 1 or self.nms_mode != "global"
                                        or self.detector_mode != "stateless"):
            raise InvalidInputError("baseline runs the whole rotation with global NMS")

    @classmethod
    def named(cls, name: str, n: int = 1, window_k: int | None = None,
              iou_threshold: float | None = None, iou_kind: str = "bev",
              class_aware: bool = True, wrap_seam: bool = False) -> "Variant":
        """Build one of :data:`VARIANTS`; ``window_k`` defaults to 1 for stateful NMS."""
        thr = NmsConfig().iou_threshold if iou_threshold is None else iou_threshold

        def nms(k):
            return NmsConfig(thr, k, iou_kind, class_aware, wrap_seam)

        if name == "baseline":
            if n != 1:
                raise InvalidInputError("baseline processes the whole rotation; use n=1")
            return cls(name, 1, "stateless", "global", nms(0))
        if name == "localized":
            k = 0 if window_k is None else window_k
            return cls(name, n, "stateless", "per_slice" if k == 0 else "stateful", nms(k))
        k = 1 if window_k is None else window_k
        if name == "localized+statefulNMS":
            return cls(name, n, "stateless", "stateful", nms(k))
        if name == "localized+statefulNMS+carry":
            return cls(name, n, "carryover", "stateful", nms(k))
        raise InvalidInputError(f"unknown variant {name!r}; expected one of {VARIANTS}")


def _as_points(scan) -> PointCloud:
    if isinstance(scan, PointCloud):
        return scan
    if isinstance(scan, RangeImage):
        return range_image_to_points(scan)
    raise InvalidInputError(f"expected RangeImage or PointCloud, got {type(scan).__name__}")


def detect_variant(scan, variant: Variant, detector: DetectorConfig = DetectorConfig()) -> list[Detection]:
    """Final detections of one scan under ``variant``, in emission order."""
    points = _as_points(scan)
    return _dets_from_slices(detect_scan(points, variant.n, detector, variant.detector_mode), variant)


def run_variant(scan, truths, variant: Variant, detector: DetectorConfig = DetectorConfig(),
                thresholds=None, iou_kind: str = "bev") -> tuple[list[Detection], EvalReport]:
    dets = detect_variant(scan, variant, detector)
    acc = Accumulator()
    acc.add(match_detections(dets, truths, thresholds, iou_kind), truths)
    return dets, acc.report()


def _dets_from_slices(slices, variant: Variant) -> list[Detection]:
    if variant.nms_mode == "global":
        return global_nms([d for s in slices for d in s], variant.nms)
    if variant.nms_mode == "per_slice":
        return per_slice_nms(slices, variant.nms)
    return run_stateful(slices, variant.nms)


# --- experiment configuration ------------------------------------------------

def _build(cls, d, what: str):
    """Dataclass from a JSON mapping; lists become tuples, unknown keys are errors."""
    if not isinstance(d, dict):
        raise InvalidInputError(f"{what} must be a JSON object")
    known = {f.name for f in fields(cls)}
    extra = set(d) - known
    if extra:
        raise InvalidInputError(f"unknown {what} keys: {sorted(extra)}")
    try:
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})
    except TypeError as exc:
        raise InvalidInputError(f"bad {what}: {exc}") from exc


@dataclass
class ExperimentConfig:
    """Everything a sweep needs.  ``seeds`` are repeats; each seed draws ``n_scenes`` scenes."""

    scene: SceneConfig = field(default_factory=SceneConfig)
    lidar: LidarParams = field(default_factory=LidarParams)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    latency: LatencyModel = field(default_factory=LatencyModel)
    ns: tuple[int, ...] = (4, 8, 16, 32, 64)
    variants: tuple[str, ...] = VARIANTS
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    n_scenes: int = 50
    window_k: int = 1
    iou_threshold: float = 0.5
    iou_kind: str = "bev"
    nms_class_aware: bool = True
    nms_wrap_seam: bool = False
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    out_dir: str | None = None

    def __post_init__(self):
        self.ns = tuple(int(n) for n in self.ns)
        self.variants = tuple(self.variants)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise InvalidInputError("need at least one seed")
        if not self.ns or any(n < 1 for n in self.ns):
            raise InvalidInputError("slice counts must each be >= 1")
        if self.n_scenes < 1:
            raise InvalidInputError("n_scenes must be >= 1")
        for v in self.variants:
            if v not in VARIANTS:
                raise InvalidInputError(f"unknown variant {v!r}; expected one of {VARIANTS}")
        if set(self.thresholds) != set(CLASSES):
            raise InvalidInputError(f"thresholds must cover exactly {CLASSES}")
        NmsConfig(self.iou_threshold, self.window_k, self.iou_kind, self.nms_class_aware, self.nms_wrap_seam)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise InvalidInputError("experiment config must be a JSON object")
        d = dict(d)
        kw = {}
        if "scene" in d:
            kw["scene"] = SceneConfig.from_dict(d.pop("scene"))
        if "lidar" in d:
            try:
                kw["lidar"] = LidarParams.from_dict(d.pop("lidar"))
            except TypeError as exc:
                raise InvalidInputError(f"bad lidar params: {exc}") from exc
        if "detector" in d:
            kw["detector"] = _build(DetectorConfig, d.pop("detector"), "detector config")
        if "latency" in d:
            kw["latency"] = _build(LatencyModel, d.pop("latency"), "latency model")
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise InvalidInputError(f"unknown experiment config keys: {sorted(extra)}")
        kw.update(d)
        try:
            return cls(**kw)
        except TypeError as exc:
            raise InvalidInputError(f"bad experiment config: {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise InvalidInputError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lidar"] = asdict(self.lidar)
        return json.loads(json.dumps(d))

    def variant(self, name: str, n: int) -> Variant:
        k = self.window_k if "statefulNMS" in name else None
        return Variant.named(name, 1 if name == "baseline" else n, k, self.iou_threshold, self.iou_kind,
                             self.nms_class_aware, self.nms_wrap_seam)

    def cells(self) -> list[tuple[str, int, int]]:
        """``(variant, n, seed)`` for the full factorial; the baseline only exists at n=1."""
        out = []
        for seed in self.seeds:
            for name in self.variants:
                for n in ([1] if name == "baseline" else self.ns):
                    if (name, n, seed) not in out:
                        out.append((name, n, seed))
        return out


def scene_seed(seed: int, j: int) -> int:
    """Seed of scene ``j`` within repeat ``seed``; independent streams per pair."""
    return int(np.random.SeedSequence([seed, j]).generate_state(1)[0])


def benchmark_scene(config: ExperimentConfig, seed: int, j: int):
    """``(scene, range_image)`` for one benchmark scene."""
    s = scene_seed(seed, j)
    scene = generate_scene(config.scene, s)
    return scene, simulate_scan(scene, config.lidar, s)


def benchmark_scans(config: ExperimentConfig, seed: int) -> list[tuple[PointCloud, list[ObjectTruth]]]:
    out = []
    for j in range(config.n_scenes):
        scene, img = benchmark_scene(config, seed, j)
        out.append((range_image_to_points(img), scene.objects))
    return out


# --- sweep ------------------------------------------------------------------

@dataclass
class CellResult:
    variant: str
    n: int
    seed: int
    status: str = "ok"
    report: EvalReport | None = None
    reason: str = ""

    def to_dict(self) -> dict:
        return {"variant": self.variant, "n": self.n, "seed": self.seed, "status": self.status,
                "reason": self.reason, "report": None if self.report is None else self.report.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "CellResult":
        rep = d.get("report")
        return cls(d["variant"], int(d["n"]), int(d["seed"]), d["status"],
                   None if rep is None else EvalReport.from_dict(rep), d.get("reason", ""))


REPORT_COLUMNS = ("variant", "n", "seed", "status", "mAP", "ap_vehicle", "ap_pedestrian",
                  "tp", "fp", "fn", "worst_case_ms", "expected_ms", "flops_fraction", "speedup", "reason")


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    cells: dict = field(default_factory=dict)   # (variant, n, seed) -> CellResult

    def cell(self, variant: str, n: int, seed: int) -> CellResult:
        return self.cells[(variant, n, seed)]

    def ok_cells(self, variant: str, n: int) -> list[CellResult]:
        return [c for (v, m, _), c in sorted(self.cells.items()) if v == variant and m == n and c.status == "ok"]

    def mean_map(self, variant: str, n: int) -> float:
        """Mean over successful seeds; NaN when none succeeded."""
        vals = [c.report.mAP for c in self.ok_cells(variant, n)]
        return float(np.mean(vals)) if vals else math.nan

    def aggregates(self) -> list[dict]:
        seen = sorted({(v, n) for v, n, _ in self.cells}, key=lambda k: (VARIANTS.index(k[0]), k[1]))
        rows = []
        for v, n in seen:
            ok = self.ok_cells(v, n)
            row = {"variant": v, "n": n, "seeds_ok": len(ok), "mAP": self.mean_map(v, n) if ok else None}
            for cls in CLASSES:
                vals = [c.report.ap[cls] for c in ok if c.report.ap[cls] is not None]
                row[f"ap_{cls}"] = float(np.mean(vals)) if vals else None
            row["fp"] = int(sum(sum(c.report.fp.values()) for c in ok))
            rows.append(row)
        return rows

    def _latency(self, variant: str, n: int):
        m = self.config.latency
        wc = worst_case_latency(m, n)
        return (wc, expected_latency(m, n),
                peak_flops_fraction(n, variant.endswith("+carry") and n > 1, m),
                worst_case_latency(m, 1) / wc)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for key in self.config.cells():
            c = self.cells.get(key)
            if c is None:
                continue
            r = c.report
            row = [c.variant, c.n, c.seed, c.status]
            if r is None:
                row += ["", "", "", "", "", ""]
            else:
                row += [_num(r.mAP), _num(r.ap["vehicle"]), _num(r.ap["pedestrian"]),
                        sum(r.tp.values()), sum(r.fp.values()), sum(r.fn.values())]
            row += [_num(x) for x in self._latency(c.variant, c.n)]
            row.append(c.reason)
            w.writerow(row)
        return buf.getvalue()

    def bins_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variant", "n", "seed", "class", "bin", "ap"])
        for key in self.config.cells():
            c = self.cells.get(key)
            if c is None or c.report is None:
                continue
            for row in c.report.csv_rows(c.variant, c.n):
                w.writerow(row[:2] + [c.seed] + row[2:])
        return buf.getvalue()

    def to_json(self) -> str:
        body = {"config": self.config.to_dict(),
                "bins": list(BIN_LABELS),
                "cells": [self.cells[k].to_dict() for k in self.config.cells() if k in self.cells],
                "aggregates": self.aggregates()}
        return json.dumps(body, indent=1, sort_keys=True, allow_nan=False, default=_json_default) + "\n"

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(self.to_csv())
        (out / "eval_bins.csv").write_text(self.bins_csv())
        (out / "report.json").write_text(self.to_json())


def _num(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def _json_default(o):
    raise TypeError(f"not serializable: {type(o).__name__}")


def _cell_path(out: Path, key) -> Path:
    v, n, seed = key
    return out / "cells" / f"{v.replace('+', '_')}__n{n}__s{seed}.json"


def _load_cell(path: Path) -> CellResult | None:
    try:
        return CellResult.from_dict(json.loads(path.read_text()))
    except (OSError, ValueError, KeyError, TypeError):
        log.warning("ignoring unreadable cell file %s", path)
        return None


def sweep(config: ExperimentConfig, out_dir=None, resume: bool = True) -> ExperimentReport:
    """Run every ``(variant, n, seed)`` cell and write the reports.

    With an output directory each finished cell is stored under ``cells/`` and,
    when ``resume`` is set, cells already on disk are reused rather than rerun.
    A cell that raises is recorded as failed; the sweep carries on.
    Scans are simulated once per seed, and one stateless slice pass per ``n``
    feeds every variant that uses it.
    """
    out_dir = out_dir if out_dir is not None else config.out_dir
    out = Path(out_dir) if out_dir is not None else None
    report = ExperimentReport(config)
    todo: dict[int, list] = {}
    for key in config.cells():
        done = _load_cell(_cell_path(out, key)) if (out is not None and resume
                                                    and _cell_path(out, key).exists()) else None
        if done is not None and done.status == "ok":
            report.cells[key] = done
        else:
            todo.setdefault(key[2], []).append(key)

    for seed, keys in todo.items():
        log.info("seed %d: %d cells", seed, len(keys))
        try:
            scans = benchmark_scans(config, seed)
        except Exception as exc:  # noqa: BLE001 - a broken seed must not end the sweep
            for key in keys:
                _record(report, out, CellResult(*key, status="failed", reason=f"scene generation: {exc}"))
            continue
        slices_cache: dict = {}
        for key in keys:
            _record(report, out, _run_cell(config, key, scans, slices_cache))

    if out is not None:
        report.write(out)
    return report


def _record(report: ExperimentReport, out: Path | None, cell: CellResult) -> None:
    report.cells[(cell.variant, cell.n, cell.seed)] = cell
    if out is not None:
        path = _cell_path(out, (cell.variant, cell.n, cell.seed))
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(cell.to_dict(), indent=1, sort_keys=True) + "\n")


def _run_cell(config: ExperimentConfig, key, scans, cache) -> CellResult:
    name, n, seed = key
    try:
        variant = config.variant(name, n)
        acc = Accumulator()
        for j, (points, truths) in enumerate(scans):
            ck = (j, variant.n, variant.detector_mode)
            if ck not in cache:
                if (j, "graph") not in cache:
                    cache[(j, "graph")] = ProximityGraph.build(points, config.detector.eps)
                cache[ck] = detect_scan(points, variant.n, config.detector, variant.detector_mode,
                                        cache[(j, "graph")])
            dets = _dets_from_slices(cache[ck], variant)
            acc.add(match_detections(dets, truths, config.thresholds, config.iou_kind), truths)
        return CellResult(name, n, seed, "ok", acc.report())
    except Exception as exc:  # noqa: BLE001 - recorded per cell by contract
        log.warning("cell %s failed: %s", key, exc)
        return CellResult(name, n, seed, "failed", None, f"{type(exc).__name__}: {exc}")
