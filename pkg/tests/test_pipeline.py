import json
import math

import numpy as np
import pytest

from markerfind.errors import ParameterError
from markerfind.geometry import CameraIntrinsics
from markerfind.image_core import ColorImage, GrayImage
from markerfind.matching import PatternRegistry
from markerfind.pipeline import DetectConfig, ThresholdMode, detect, detections_json, refine_quad_edges
from markerfind.synth import (
    DEFAULT_CAMERA,
    Distractor,
    SyntheticScene,
    gradient_background,
    marker_pose,
    placement_from_pose,
    random_marker_scene,
    render_synthetic,
    score_detections,
)

CFG = DetectConfig(intrinsics=DEFAULT_CAMERA)


def render(placements, reg, noise=0.0, seed=0, distractors=(), bg=None):
    bg = bg if bg is not None else GrayImage.filled(640, 480, 140)
    scene = SyntheticScene(bg, list(placements), list(distractors), DEFAULT_CAMERA)
    return scene, render_synthetic(scene, reg, noise, seed)


def rotation_error_deg(Ra, Rb) -> float:
    c = (np.trace(Ra.T @ Rb) - 1) / 2
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def test_blank_frame_has_no_detections(registry):
    assert detect(GrayImage.filled(320, 240, 128), CFG, registry) == []
    assert detect(ColorImage(np.full((48, 64, 3), (200, 10, 10), np.uint8)), CFG, registry) == []


def test_two_markers_among_distractors(registry):
    a = placement_from_pose("A", marker_pose((170, 220), 110, 0, 0, 0))
    b = placement_from_pose("B", marker_pose((450, 230), 110, 30, 60, 20))
    blobs = [
        Distractor("circle", dict(cx=80, cy=400, r=30, value=20)),
        Distractor("lshape", dict(cx=560, cy=80, r=35, angle=0.4, value=10)),
        Distractor("circle", dict(cx=320, cy=60, r=25, value=30, hole=10)),
    ]
    scene, img = render([a, b], registry, noise=2.0, distractors=blobs)
    found = detect(img, CFG, registry)
    assert sorted(d.id for d in found) == ["A", "B"]
    score = score_detections(scene, found)
    assert score.ok and max(score.corner_rms) < 1.0
    for d in found:
        truth = {p.id: p for p in scene.placements}[d.id]
        marker_order = np.roll(d.corners, -(d.rotation // 90), axis=0)
        assert np.hypot(*(marker_order - truth.corners).T).max() < 1.0


def test_unregistered_pattern_is_rejected(registry, unregistered):
    reg = PatternRegistry((("X", unregistered[0]),) + registry.entries)
    p = placement_from_pose("X", marker_pose((320, 240), 120, 10, 30, 15))
    _, img = render([p], reg, noise=1.0)
    assert [d.id for d in detect(img, CFG, reg)] == ["X"]
    assert detect(img, CFG, registry) == []


def test_frontal_noise_free_marker_within_half_pixel(registry):
    p = placement_from_pose("C", marker_pose((300.3, 250.8), 90, 0, 0, 0))
    _, img = render([p], registry)
    (d,) = detect(img, CFG, registry)
    assert d.id == "C" and d.rotation == 0
    assert np.hypot(*(d.corners - p.corners).T).max() < 0.5


def test_steep_tilt_still_identified(registry):
    p = placement_from_pose("E", marker_pose((320, 240), 150, 60, 0, 10))
    _, img = render([p], registry)
    found = detect(img, CFG, registry)
    assert [d.id for d in found] == ["E"]
    assert CFG.acceptance_threshold <= found[0].score < 1.0


@pytest.mark.parametrize("seed", range(6))
def test_pose_accuracy_on_large_markers(registry, seed):
    rng = np.random.default_rng(seed)
    pose = marker_pose(
        (rng.uniform(220, 420), rng.uniform(180, 300)), rng.uniform(140, 180),
        rng.uniform(10, 45), rng.uniform(0, 360), rng.uniform(0, 360),
    )
    p = placement_from_pose(registry.ids[seed], pose)
    _, img = render([p], registry, noise=rng.uniform(0, 4), seed=seed)
    (d,) = detect(img, CFG, registry)
    assert rotation_error_deg(d.pose.R, pose.R) < 2.0
    assert np.linalg.norm(d.pose.T - pose.T) / np.linalg.norm(pose.T) < 0.02


def test_pose_absent_without_intrinsics(registry):
    p = placement_from_pose("A", marker_pose((320, 240), 100, 0, 0, 0))
    _, img = render([p], registry)
    (d,) = detect(img, DetectConfig(), registry)
    assert d.pose is None and d.to_dict()["pose"] is None


def test_rotated_marker_reports_rotation_and_marker_frame(registry):
    for k in range(4):
        # turning the marker on screen by -90k degrees moves its origin to canonical corner k
        p = placement_from_pose("F", marker_pose((320, 240), 100, 0, 0, -90 * k + 5))
        scene, img = render([p], registry)
        (d,) = detect(img, CFG, registry)
        assert score_detections(scene, [d]).ok
        np.testing.assert_allclose(d.homography.map(np.array([[0.0, 0.0]])), p.corners[:1], atol=0.5)


def test_gradient_background_and_global_threshold(registry):
    rng = np.random.default_rng(2)
    p = placement_from_pose("G", marker_pose((320, 240), 100, 20, 10, 40))
    bg = gradient_background(640, 480, rng)
    _, img = render([p], registry, bg=bg)
    assert [d.id for d in detect(img, CFG, registry)] == ["G"]
    flat_scene, flat = render([p], registry)
    cfg = DetectConfig(threshold=ThresholdMode("global", level=100))
    assert [d.id for d in detect(flat, cfg, registry)] == ["G"]


def test_detection_is_deterministic_and_json_canonical(registry):
    scene, noise = random_marker_scene(np.random.default_rng(11), registry.ids)
    img = render_synthetic(scene, registry, noise, 11)
    a = detections_json("f.pgm", detect(img, CFG, registry))
    b = detections_json("f.pgm", detect(img, CFG, registry))
    assert a == b and a.endswith("\n")
    doc = json.loads(a)
    assert list(doc) == ["frame", "detections"]
    for det in doc["detections"]:
        assert list(det) == ["id", "score", "rotation_deg", "corners", "homography", "pose"]
    scores = [d["score"] for d in doc["detections"]]
    assert scores == sorted(scores, reverse=True)


def test_threads_do_not_change_results(registry, monkeypatch):
    scene, noise = random_marker_scene(np.random.default_rng(5), registry.ids, n_markers=(3, 3))
    img = render_synthetic(scene, registry, noise, 5)
    serial = detections_json(None, detect(img, CFG, registry))
    monkeypatch.setenv("MF_THREADS", "4")
    assert detections_json(None, detect(img, CFG, registry)) == serial


def test_refine_quad_edges_pulls_corners_onto_edges():
    img = np.full((100, 100), 220, np.uint8)
    img[30:70, 25:75] = 20
    truth = np.array([[25, 30], [25, 70], [75, 70], [75, 30]], float)
    rough = truth + np.array([[0.8, -0.6], [-0.7, 0.5], [0.6, 0.9], [-0.9, -0.4]])
    out = refine_quad_edges(GrayImage(img), rough)
    assert np.abs(out - truth).max() < 0.1
    # a corner that would jump farther than max_shift keeps its input
    far = truth + np.array([[3.0, 0], [0, 0], [0, 0], [0, 0]])
    np.testing.assert_allclose(refine_quad_edges(GrayImage(img), far, max_shift=2.0)[0], far[0])


def test_config_validation(registry):
    with pytest.raises(ParameterError):
        detect(GrayImage.filled(10, 10, 0), CFG)
    with pytest.raises(ParameterError):
        detect(GrayImage.filled(10, 10, 0), DetectConfig(pattern_size=16), registry)
    for bad in (dict(epsilon_frac=0.0), dict(min_area=0), dict(pattern_size=1), dict(acceptance_threshold=0)):
        with pytest.raises(ParameterError):
            DetectConfig(**bad)
    assert DetectConfig(gray_method="g").gray_method.value == "g"


def test_threshold_mode_parse():
    assert ThresholdMode.parse("global:90") == ThresholdMode("global", level=90)
    assert ThresholdMode.parse("adaptive:15,4.5") == ThresholdMode("adaptive", window=15, C=4.5)
    assert str(ThresholdMode.parse("adaptive:31,7")) == "adaptive:31,7"
    for bad in ("global", "global:300", "adaptive:30,7", "adaptive:31", "otsu:1"):
        with pytest.raises(ParameterError):
            ThresholdMode.parse(bad)


def test_custom_camera_pose(registry):
    cam = CameraIntrinsics(600, 620, 300, 250)
    pose = marker_pose((320, 240), 160, 25, 40, 30, cam)
    p = placement_from_pose("H", pose, cam)
    _, img = render([p], registry)
    (d,) = detect(img, DetectConfig(intrinsics=cam), registry)
    assert rotation_error_deg(d.pose.R, pose.R) < 2.0
