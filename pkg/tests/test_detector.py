import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamdet.detector import (
    CarryState,
    DetectorConfig,
    ProximityGraph,
    cluster_points,
    cluster_score,
    detect_full,
    detect_scan,
    detect_slice,
    fit_box,
)
from streamdet.errors import ContractViolation, InvalidInputError
from streamdet.geometry import OrientedBox, iou_bev
from streamdet.scene import LidarParams, ObjectTruth, Scene, SceneConfig, generate_scene, simulate_scan
from streamdet.sensor import PointCloud, Wedge, range_image_to_points, slice_points

from .oracles import union_find_components

LIDAR = LidarParams(rows=16, cols=512)


def scan_of(*boxes, seed=0, lidar=LIDAR):
    scene = Scene([ObjectTruth(i, "vehicle", b) for i, b in enumerate(boxes)], seed, 50.0)
    return range_image_to_points(simulate_scan(scene, lidar, seed))


def car(cx, cy, heading=0.0, l=4.4, w=1.9):
    return OrientedBox(cx, cy, -1.8 + 0.8, l, w, 1.6, heading)


def test_cluster_example():
    xy = np.array([[0, 0, 0], [0.5, 0, 0], [1.0, 0, 0], [5, 5, 0], [5.6, 5, 0]], float)
    comps = cluster_points(PointCloud.from_xyz(xy), 0.6)
    assert [c.tolist() for c in comps] == [[0, 1, 2], [3, 4]]
    assert cluster_points(PointCloud.empty(), 0.6) == []


def test_cluster_matches_union_find_on_200_points():
    rng = np.random.default_rng(11)
    xyz = np.c_[rng.uniform(0, 12, (200, 2)), np.zeros(200)]
    comps = cluster_points(PointCloud.from_xyz(xyz), 0.7)
    assert [c.tolist() for c in comps] == union_find_components(xyz[:, :2], 0.7)


@settings(max_examples=40)
@given(st.integers(0, 2**31), st.integers(2, 120), st.floats(0.2, 2.0))
def test_cluster_property(seed, n, eps):
    rng = np.random.default_rng(seed)
    xyz = np.c_[rng.uniform(-5, 5, (n, 2)), np.zeros(n)]
    if n > 3:
        xyz[1] = xyz[0]          # duplicate point
        xyz[2, 0] = xyz[0, 0] + eps   # exactly eps away
        xyz[2, 1] = xyz[0, 1]
    comps = cluster_points(PointCloud.from_xyz(xyz), eps)
    assert [c.tolist() for c in comps] == union_find_components(xyz[:, :2], eps)


@settings(max_examples=25)
@given(st.integers(0, 2**31), st.sampled_from([2, 3, 5, 8, 16, 64]), st.sampled_from(["stateless", "carryover"]))
def test_proximity_graph_matches_plain_clustering(seed, n, mode):
    rng = np.random.default_rng(seed)
    m = 300
    r, a = rng.uniform(1, 8, m), rng.uniform(0, 2 * math.pi, m)
    pts = PointCloud.from_xyz(np.c_[r * np.cos(a), r * np.sin(a), rng.uniform(-1, 1, m)])
    cfg = DetectorConfig(eps=0.6, min_points=1)
    graph = ProximityGraph.build(pts, cfg.eps)
    fast, plain = [], []
    s1 = s2 = CarryState()
    for w in slice_points(pts, n):
        d1, s1 = detect_slice(w, s1, cfg, mode, graph)
        d2, s2 = detect_slice(w, s2, cfg, mode)
        fast.append(d1)
        plain.append(d2)
    assert fast == plain


def test_graph_eps_must_match():
    pts = scan_of(car(10, 0))
    graph = ProximityGraph.build(pts, 0.5)
    with pytest.raises(InvalidInputError):
        detect_scan(pts, 4, DetectorConfig(eps=0.7), graph=graph)


def test_fit_box_rectangle_perimeter():
    t = np.linspace(-1, 1, 60)
    side = np.r_[t * 2, t * 2, np.full(60, 2.0), np.full(60, -2.0)]
    other = np.r_[np.full(60, 1.0), np.full(60, -1.0), t, t]
    c, s = math.cos(0.4), math.sin(0.4)
    xy = np.c_[c * side - s * other + 10, s * side + c * other + 3]
    pts = PointCloud.from_xyz(np.c_[xy, np.linspace(-1.8, -0.3, len(xy))])
    det = fit_box(pts, config=DetectorConfig(complete=False))
    b = det.box
    assert (b.length, b.width) == pytest.approx((4, 2), abs=0.01)
    assert abs(math.remainder(b.heading - 0.4, math.pi)) < math.radians(1)
    assert (b.cx, b.cy) == pytest.approx((10, 3), abs=0.01)
    assert b.height == pytest.approx(1.5)
    assert det.cls == "vehicle"


def test_fit_box_min_points_and_score():
    few = PointCloud.from_xyz(np.zeros((4, 3)) + [5, 0, 0])
    assert fit_box(few) is None
    assert cluster_score(20, 20.0) == pytest.approx(1 - math.exp(-1))
    scores = [cluster_score(k, 20.0) for k in range(1, 200)]
    assert all(a < b for a, b in zip(scores, scores[1:]))


def test_full_scan_finds_cars():
    boxes = [car(12, 0, 0.3), car(-8, 9, 1.2), car(3, -15, -0.5)]
    dets = [d for d in detect_full(scan_of(*boxes)) if d.cls == "vehicle"]
    assert len(dets) == 3
    for b in boxes:
        assert max(iou_bev(b, d.box) for d in dets) > 0.5


def test_single_slice_equals_full():
    pts = scan_of(car(12, 0, 0.3), car(-8, 9, 1.2))
    assert detect_scan(pts, 1)[0] == detect_full(pts)
    assert detect_scan(pts, 1, mode="carryover")[0] == detect_full(pts)


def test_carryover_rejoins_split_object():
    b = car(0.3, 12, 0.2)             # straddles the pi/2 edge at n=4
    pts = scan_of(b)
    stateless = [d for s in detect_scan(pts, 4) for d in s]
    carried = [d for s in detect_scan(pts, 4, mode="carryover") for d in s]
    assert len(stateless) == 2
    assert len(carried) == 1
    assert iou_bev(carried[0].box, b) > 0.6


def test_seam_is_a_hard_cut_for_carryover():
    b = car(12, -0.2, 1.4)             # crosses the 0 / 2*pi seam
    per = detect_scan(scan_of(b), 16, mode="carryover")
    flat = [d for s in per for d in s]
    assert sorted(d.slice_index for d in flat) == [0, 15]
    assert all(iou_bev(d.box, b) > 0.25 for d in flat)


def test_empty_wedge_keeps_carry():
    pts = scan_of(car(0.3, 12, 0.2))
    wedges = slice_points(pts, 4)
    state = CarryState()
    _, state = detect_slice(wedges[0], state, mode="carryover")
    _, state = detect_slice(wedges[1], state, mode="carryover")
    empty = Wedge(wedges[2].spec, PointCloud.empty())
    dets, after = detect_slice(empty, state, mode="carryover")
    assert dets == [] and len(after.open_clusters) == len(state.open_clusters)


def test_order_contract():
    wedges = slice_points(scan_of(car(10, 0)), 4)
    _, state = detect_slice(wedges[0], None)
    with pytest.raises(ContractViolation):
        detect_slice(wedges[2], state)
    with pytest.raises(ContractViolation):
        detect_slice(slice_points(PointCloud.empty(), 8)[1], state)
    with pytest.raises(InvalidInputError):
        detect_slice(wedges[0], None, mode="psychic")


def test_scene_detection_is_deterministic():
    scene = generate_scene(SceneConfig(n_vehicles=6, n_pedestrians=6), 4)
    pts = range_image_to_points(simulate_scan(scene, LIDAR, 4))
    assert detect_scan(pts, 8, mode="carryover") == detect_scan(pts, 8, mode="carryover")


def test_config_validation():
    with pytest.raises(InvalidInputError):
        DetectorConfig(eps=0)
    with pytest.raises(InvalidInputError):
        DetectorConfig(orientation="hough")
