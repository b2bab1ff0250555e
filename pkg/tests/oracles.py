"""Independent reference implementations used only by tests.

Each oracle takes a different route from the library code (sampling,
brute-force enumeration, exact fractions) so agreement is meaningful.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


def rect_corners_oracle(cx, cy, length, width, heading):
    """Rotate the axis-aligned corners with an explicit matrix, then translate."""
    r = np.array([[math.cos(heading), -math.sin(heading)], [math.sin(heading), math.cos(heading)]])
    local = np.array([[length / 2, width / 2], [-length / 2, width / 2],
                      [-length / 2, -width / 2], [length / 2, -width / 2]])
    return local @ r.T + [cx, cy]


def signed_area(v) -> float:
    v = np.asarray(v, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _inside(box, pts):
    c, s = math.cos(box.heading), math.sin(box.heading)
    rel = pts - [box.cx, box.cy]
    return (np.abs(rel @ [c, s]) <= box.length / 2) & (np.abs(rel @ [-s, c]) <= box.width / 2)


def mc_iou_bev(a, b, samples: int, seed: int = 0, chunk: int = 250_000) -> float:
    """Uniform samples over the joint bounding box of both footprints."""
    corners = np.vstack([rect_corners_oracle(a.cx, a.cy, a.length, a.width, a.heading),
                         rect_corners_oracle(b.cx, b.cy, b.length, b.width, b.heading)])
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    rng = np.random.default_rng(seed)
    inter = union = 0
    left = samples
    while left > 0:
        m = min(chunk, left)
        pts = rng.uniform(lo, hi, size=(m, 2))
        ia, ib = _inside(a, pts), _inside(b, pts)
        inter += int(np.count_nonzero(ia & ib))
        union += int(np.count_nonzero(ia | ib))
        left -= m
    return inter / union if union else 0.0


def union_find_components(xy, eps):
    """Connected components of the planar ``distance <= eps`` graph, all pairs."""
    xy = np.asarray(xy, dtype=float)
    n = len(xy)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    d2 = ((xy[:, None, :] - xy[None, :, :]) ** 2).sum(-1)
    for i in range(n):
        for j in range(i + 1, n):
            if d2[i, j] <= eps * eps:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])


def greedy_nms_oracle(dets, threshold, iou):
    """Literal greedy definition: walk in (score desc, position asc) order."""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    kept = []
    for i in order:
        if all(dets[j].cls != dets[i].cls or iou(dets[i].box, dets[j].box) <= threshold for j in kept):
            kept.append(i)
    return kept


def greedy_match_oracle(dets, truths, thresholds, iou):
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    used, tp = set(), [False] * len(dets)
    for i in order:
        cands = [(iou(dets[i].box, t.box), j) for j, t in enumerate(truths)
                 if j not in used and t.cls == dets[i].cls]
        if not cands:
            continue
        best = max(c[0] for c in cands)
        j = min(j for v, j in cands if v == best)
        if best >= thresholds[dets[i].cls]:
            used.add(j)
            tp[i] = True
    return tp


def ap_oracle(scores, tp, n_truths) -> Fraction:
    """Exact-fraction all-point AP: sum over recall steps of the best precision at or beyond it."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits = [tp[i] for i in order]
    prec, rec = [], []
    c = 0
    for k, h in enumerate(hits, 1):
        c += h
        prec.append(Fraction(c, k))
        rec.append(Fraction(c, n_truths))
    total, prev = Fraction(0), Fraction(0)
    for k in range(len(hits)):
        if rec[k] > prev:
            total += (rec[k] - prev) * max(prec[k:])
            prev = rec[k]
    return total


def all_subsets(xs):
    for r in range(len(xs) + 1):
        yield from itertools.combinations(xs, r)


def stratified_mc_iou_bev(a, b, per_side: int = 1000, seed: int = 0, chunk_rows: int = 100) -> float:
    """Jittered-grid Monte Carlo: one uniform sample per cell of the smaller footprint.

    The intersection area is the smaller area times the fraction of its samples
    inside the other box; both areas are exact.
    """
    small, big = (a, b) if a.length * a.width <= b.length * b.width else (b, a)
    rng = np.random.default_rng(seed)
    c, s = math.cos(small.heading), math.sin(small.heading)
    hits = 0
    for r0 in range(0, per_side, chunk_rows):
        rows = min(chunk_rows, per_side - r0)
        i, j = np.meshgrid(np.arange(r0, r0 + rows), np.arange(per_side), indexing="ij")
        u = (i + rng.uniform(size=i.shape)) / per_side - 0.5
        v = (j + rng.uniform(size=j.shape)) / per_side - 0.5
        lx, ly = (u * small.length).ravel(), (v * small.width).ravel()
        pts = np.c_[small.cx + c * lx - s * ly, small.cy + s * lx + c * ly]
        hits += int(np.count_nonzero(_inside(big, pts)))
    area_s, area_b = small.length * small.width, big.length * big.width
    inter = area_s * hits / per_side**2
    return inter / (area_s + area_b - inter)
