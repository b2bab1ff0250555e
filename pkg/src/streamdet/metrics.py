"""Detection metrics: greedy IoU matching, all-point AP, mAP and AP by subtended angle."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UndefinedMetricError
from .geometry import get_iou
from .scene import CLASSES, subtended_angle

DEFAULT_THRESHOLDS = {"vehicle": 0.7, "pedestrian": 0.5}
ANGLE_BINS = ((0.0, 5.0), (5.0, 15.0), (15.0, 25.0), (25.0, 35.0), (35.0, math.inf))
BIN_LABELS = ("0-5", "5-15", "15-25", "25-35", ">35")


@dataclass
class MatchResult:
    """Per-detection TP flags and matched truth positions (``None`` for FPs)."""

    scores: list[float]
    classes: list[str]
    tp: list[bool]
    matched: list[int | None]
    truth_matched: list[bool]
    truth_classes: list[str]

    @property
    def fn(self) -> int:
        return sum(not m for m in self.truth_matched)


def match_detections(dets, truths, thresholds=None, iou_kind: str = "bev") -> MatchResult:
    """Greedy matching in descending score (ties by input order).

    A detection is a TP when its best-IoU unmatched same-class truth reaches the
    class threshold; that truth is then consumed.
    """
    thresholds = DEFAULT_THRESHOLDS if thresholds is None else thresholds
    iou = get_iou(iou_kind)
    n = len(dets)
    tp = [False] * n
    matched: list[int | None] = [None] * n
    used = [False] * len(truths)
    for i in sorted(range(n), key=lambda i: (-dets[i].score, i)):
        d = dets[i]
        best, best_j = -1.0, None
        for j, t in enumerate(truths):
            if used[j] or t.cls != d.cls:
                continue
            v = iou(d.box, t.box)
            if v > best:
                best, best_j = v, j
        if best_j is not None and best >= thresholds[d.cls]:
            tp[i] = True
            matched[i] = best_j
            used[best_j] = True
    return MatchResult([d.score for d in dets], [d.cls for d in dets], tp, matched, used,
                       [t.cls for t in truths])


def average_precision(scores, tp, n_truths: int) -> float:
    """Area under the precision envelope over all recall steps.

    ``scores``/``tp`` are pooled over a dataset; ties keep their given order.
    """
    if n_truths <= 0:
        raise UndefinedMetricError("average precision needs at least one ground truth")
    scores = np.asarray(scores, dtype=float)
    if len(scores) == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    hits = np.asarray(tp, dtype=bool)[order]
    ctp = np.cumsum(hits)
    precision = ctp / np.arange(1, len(hits) + 1)
    recall = ctp / n_truths
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.concatenate([[0.0], recall]))
    return float(np.sum(steps * envelope))


def angle_bin(deg: float) -> int:
    for b, (lo, hi) in enumerate(ANGLE_BINS):
        if lo <= deg < hi:
            return b
    raise ValueError(deg)


@dataclass
class EvalReport:
    ap: dict[str, float | None]
    mAP: float
    bin_ap: dict[str, list[float | None]]
    tp: dict[str, int]
    fp: dict[str, int]
    fn: dict[str, int]
    n_truths: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"mAP": self.mAP, "ap": self.ap, "bin_ap": self.bin_ap, "bins": list(BIN_LABELS),
                "tp": self.tp, "fp": self.fp, "fn": self.fn, "n_truths": self.n_truths}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(dict(d["ap"]), float(d["mAP"]), {k: list(v) for k, v in d["bin_ap"].items()},
                   dict(d["tp"]), dict(d["fp"]), dict(d["fn"]), dict(d.get("n_truths", {})))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def csv_rows(self, variant: str, n: int):
        """One row per (class, bin) plus an ``all`` bin with the class AP."""
        for cls in sorted(self.ap):
            yield [variant, n, cls, "all", _fmt(self.ap[cls])]
            for label, v in zip(BIN_LABELS, self.bin_ap[cls]):
                yield [variant, n, cls, label, _fmt(v)]

    def to_csv(self, variant: str, n: int) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variant", "n", "class", "bin", "ap"])
        w.writerows(self.csv_rows(variant, n))
        return buf.getvalue()


def _fmt(v):
    return "" if v is None else repr(float(v))


class Accumulator:
    """Pools match results over many scans for dataset-level AP."""

    def __init__(self):
        self.det = {c: [] for c in CLASSES}   # (score, tp, truth_bin or None)
        self.truth_bins = {c: [0] * len(ANGLE_BINS) for c in CLASSES}

    def add(self, match: MatchResult, truths) -> None:
        bins = [angle_bin(subtended_angle(t)) for t in truths]
        for t, b in zip(truths, bins):
            self.truth_bins[t.cls][b] += 1
        for s, c, hit, j in zip(match.scores, match.classes, match.tp, match.matched):
            self.det[c].append((s, hit, bins[j] if hit else None))

    def merge(self, other: "Accumulator") -> None:
        for c in CLASSES:
            self.det[c].extend(other.det[c])
            self.truth_bins[c] = [a + b for a, b in zip(self.truth_bins[c], other.truth_bins[c])]

    def report(self) -> EvalReport:
        ap, bin_ap, tp, fp, fn, nt = {}, {}, {}, {}, {}, {}
        for c in CLASSES:
            rows = self.det[c]
            scores = [r[0] for r in rows]
            hits = [r[1] for r in rows]
            total = sum(self.truth_bins[c])
            nt[c] = total
            tp[c] = sum(hits)
            fp[c] = len(hits) - tp[c]
            fn[c] = total - tp[c]
            ap[c] = average_precision(scores, hits, total) if total else None
            per_bin = []
            for b in range(len(ANGLE_BINS)):
                nb = self.truth_bins[c][b]
                if nb == 0:
                    per_bin.append(None)
                    continue
                keep = [r for r in rows if not r[1] or r[2] == b]
                per_bin.append(average_precision([r[0] for r in keep], [r[1] for r in keep], nb))
            bin_ap[c] = per_bin
        defined = [v for v in ap.values() if v is not None]
        if not defined:
            raise UndefinedMetricError("no ground truth in any class")
        return EvalReport(ap, float(np.mean(defined)), bin_ap, tp, fp, fn, nt)


def evaluate(pairs, thresholds=None, iou_kind: str = "bev") -> EvalReport:
    """Evaluate ``(detections, truths)`` pairs, one per scan."""
    acc = Accumulator()
    for dets, truths in pairs:
        acc.add(match_detections(dets, truths, thresholds, iou_kind), truths)
    return acc.report()


def ap_by_angle_bin(matches, truths_per_scan) -> list[float | None]:
    """Per-bin AP pooled over scans, all classes together.

    Detections count toward the bin of their matched truth; unmatched detections
    are false positives in every bin.  Empty bins give ``None``.
    """
    rows, counts = [], [0] * len(ANGLE_BINS)
    for m, truths in zip(matches, truths_per_scan):
        bins = [angle_bin(subtended_angle(t)) for t in truths]
        for b in bins:
            counts[b] += 1
        for s, hit, j in zip(m.scores, m.tp, m.matched):
            rows.append((s, hit, bins[j] if hit else None))
    out = []
    for b, nb in enumerate(counts):
        if nb == 0:
            out.append(None)
            continue
        keep = [r for r in rows if not r[1] or r[2] == b]
        out.append(average_precision([r[0] for r in keep], [r[1] for r in keep], nb))
    return out
