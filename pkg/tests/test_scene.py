import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamdet.errors import InvalidInputError, PlacementError
from streamdet.geometry import OrientedBox, iou_bev, points_in_box_bev
from streamdet.scene import (
    LidarParams,
    ObjectTruth,
    SceneConfig,
    generate_scene,
    load_truths,
    ray_box_distance,
    save_scene,
    simulate_scan,
    subtended_angle,
)
from streamdet.sensor import range_image_to_points

SMALL = LidarParams(rows=8, cols=256)


def test_scene_deterministic_and_counts():
    cfg = SceneConfig(n_vehicles=6, n_pedestrians=5)
    a, b = generate_scene(cfg, 7), generate_scene(cfg, 7)
    assert a.objects == b.objects
    assert [o.cls for o in a.objects] == ["vehicle"] * 6 + ["pedestrian"] * 5
    assert generate_scene(cfg, 8).objects != a.objects


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_scene_objects_keep_gap(seed):
    cfg = SceneConfig(n_vehicles=8, n_pedestrians=8)
    objs = generate_scene(cfg, seed).objects
    for o in objs:
        assert not points_in_box_bev(o.box, np.zeros((1, 2)), tol=cfg.origin_clearance)[0]
        assert abs(o.box.z_min - cfg.ground_z) < 1e-12
    for i, a in enumerate(objs):
        for b in objs[i + 1:]:
            assert iou_bev(a.box, b.box) == 0.0


def test_crowded_scene_fails_cleanly():
    cfg = SceneConfig(n_vehicles=400, n_pedestrians=0, vehicle_range=(4, 8), bounds=8)
    with pytest.raises(PlacementError):
        generate_scene(cfg, 0)


def test_ray_box_slab_examples():
    box = OrientedBox(10, 0, 0, 2, 2, 2, 0)
    dirs = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [math.cos(0.05), math.sin(0.05), 0]])
    t, axis = ray_box_distance(box, dirs)
    assert t[0] == pytest.approx(9.0) and axis[0] == 0
    assert math.isinf(t[1]) and math.isinf(t[2])
    assert t[3] == pytest.approx(9.0 / math.cos(0.05))


@settings(max_examples=50)
@given(st.floats(3, 30), st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi), st.floats(-0.3, 0.3))
def test_ray_hit_lies_on_box_surface(r, phi, heading, dz):
    box = OrientedBox(r * math.cos(phi), r * math.sin(phi), 0, 3, 1.5, 2, heading)
    d = np.array([[math.cos(phi), math.sin(phi), dz]])
    d /= np.linalg.norm(d)
    t, _ = ray_box_distance(box, d)
    if math.isinf(t[0]):
        return
    p = t[0] * d[0]
    c, s = math.cos(heading), math.sin(heading)
    rel = p[:2] - [box.cx, box.cy]
    local = np.abs([rel @ [c, s], rel @ [-s, c], p[2] - box.cz])
    slack = local - [1.5, 0.75, 1.0]
    assert np.all(slack <= 1e-9) and np.max(slack) >= -1e-9


def test_scan_points_come_from_objects():
    cfg = SceneConfig(n_vehicles=4, n_pedestrians=4)
    scene = generate_scene(cfg, 3)
    img = simulate_scan(scene, SMALL, seed=3)
    assert img.ranges.shape == (8, 256)
    pts = range_image_to_points(img)
    assert len(pts) > 0
    inside = np.zeros(len(pts), bool)
    for o in scene.objects:
        inside |= points_in_box_bev(o.box, pts.xy, tol=0.15)
    assert inside.all()
    assert np.array_equal(simulate_scan(scene, SMALL, seed=3).ranges, img.ranges)


def test_scan_without_noise_is_exact():
    scene = generate_scene(SceneConfig(n_vehicles=2, n_pedestrians=0), 1)
    img = simulate_scan(scene, LidarParams(rows=4, cols=128, range_noise_sigma=0.0))
    hit = img.ranges > 0
    assert hit.any() and np.all(img.ranges[~hit] == -1.0)


def test_subtended_angle_examples():
    car = ObjectTruth(0, "vehicle", OrientedBox(10, 0, 0, 4, 2, 1.5, 0))
    assert subtended_angle(car) == pytest.approx(2 * math.degrees(math.atan(1 / 8)), abs=1e-9)
    assert subtended_angle(OrientedBox(0, 20, 0, 2, 2, 1, 0)) == pytest.approx(
        2 * math.degrees(math.atan(1 / 19)), abs=1e-9)
    assert subtended_angle(OrientedBox(20, 0, 0, 4, 2, 1.5, math.pi / 2)) == pytest.approx(
        2 * math.degrees(math.atan(2 / 19)), abs=1e-9)
    with pytest.raises(InvalidInputError):
        subtended_angle(OrientedBox(0, 0, 0, 1, 1, 1, 0))


def test_scene_file_round_trip(tmp_path):
    scene = generate_scene(SceneConfig(n_vehicles=3, n_pedestrians=2), 5)
    save_scene(tmp_path / "s.json", scene)
    assert load_truths(tmp_path / "s.json") == scene.objects
    (tmp_path / "bad.json").write_text('[{"id": 1}]')
    with pytest.raises(InvalidInputError):
        load_truths(tmp_path / "bad.json")


def test_config_validation():
    with pytest.raises(InvalidInputError):
        SceneConfig.from_dict({"n_trucks": 3})
    with pytest.raises(InvalidInputError):
        LidarParams(rows=0)
    assert LidarParams.from_dict({"inclination_min_deg": -10}).inclination_min == pytest.approx(math.radians(-10))
