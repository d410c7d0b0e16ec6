"""Synthetic scene generation and its planted ground truth."""

import warnings

import pytest

from projcluster.boxes import BBox, FrameGeometry
from projcluster.streams import load_stream, write_stream
from projcluster.synth import (
    DistractorSpec,
    HandSpec,
    SceneSpec,
    demo_scene,
    generate,
)

G = FrameGeometry(858, 480)


def test_empty_scene_gives_empty_stream():
    stream, gt = generate(SceneSpec(G, duration_s=12))
    assert len(stream) == 0
    assert gt.total_boxes == 0


def test_single_steady_hand_emits_constant_boxes():
    spec = SceneSpec(G, 12, hands=(HandSpec(BBox(100, 100, 80, 60)),))
    stream, gt = generate(spec)
    assert len(stream) == 12
    assert [d.frame_index for d in stream.detections] == list(range(12))
    # no jitter: the box never moves (scores still vary per second)
    assert {d.box for d in stream.detections} == {BBox(100, 100, 80, 60)}
    assert all(0.6 <= d.score < 1.0 for d in stream.detections)
    assert gt.frames[0] == (BBox(100, 100, 80, 60),)


def test_jitter_stays_within_bounds():
    spec = SceneSpec(G, 50, hands=(HandSpec(BBox(0, 0, 80, 60), jitter=5),))
    stream, _ = generate(spec)
    for d in stream.detections:
        assert 0 <= d.box.x <= 5
        assert 0 <= d.box.y <= 5
        assert d.box.w == 80 and d.box.h == 60


def test_occlusion_suppresses_detection_but_not_gt():
    spec = SceneSpec(
        G, 12,
        hands=(HandSpec(BBox(100, 100, 80, 60), occluded=frozenset({3, 4})),),
    )
    stream, gt = generate(spec)
    frames_seen = {d.frame_index for d in stream.detections}
    assert frames_seen == set(range(12)) - {3, 4}
    # ground truth covers every second regardless
    assert sorted(gt.frames) == list(range(12))


def test_distractor_scores_subceed_hand_scores():
    spec = SceneSpec(
        G, 200,
        hands=(HandSpec(BBox(100, 100, 80, 60)),),
        distractors=(DistractorSpec(BBox(10, 10, 16, 12), flicker_p=0.5),),
        rng_seed=3,
    )
    stream, _ = generate(spec)
    small = [d for d in stream.detections if d.box.w == 16]
    big = [d for d in stream.detections if d.box.w == 80]
    assert small and big
    assert all(0.5 <= d.score < 0.8 for d in small)
    assert all(0.6 <= d.score < 1.0 for d in big)
    # flicker: present in some but not all seconds
    assert 0 < len(small) < 200


def test_determinism_and_byte_identical_files(tmp_path):
    a, _ = generate(demo_scene(seed=42))
    b, _ = generate(demo_scene(seed=42))
    assert a == b
    pa, pb = tmp_path / "a.tsv", tmp_path / "b.tsv"
    write_stream(a, pa)
    write_stream(b, pb)
    assert pa.read_bytes() == pb.read_bytes()
    # ingest round trip preserves everything written
    back = load_stream(pa, G)
    assert [d.box for d in back.detections] == [d.box for d in a.detections]


def test_different_seed_changes_stream():
    a, _ = generate(demo_scene(seed=42))
    b, _ = generate(demo_scene(seed=43))
    assert a != b


def test_gt_coverage_invariant():
    spec = demo_scene(seed=42)
    stream, gt = generate(spec)
    for hand in spec.hands:
        emitted = sum(
            1 for d in stream.detections
            if d.box.w == hand.box.w and d.box.h == hand.box.h
        )
        assert emitted >= spec.duration_s - len(hand.occluded)


def test_area_ratio_invariant_enforced():
    with pytest.raises(ValueError):
        SceneSpec(
            G, 12,
            hands=(HandSpec(BBox(0, 0, 20, 20)),),          # area 400
            distractors=(DistractorSpec(BBox(50, 50, 15, 10)),),  # 4x150=600
        )


def test_boxes_must_fit_frame():
    with pytest.raises(ValueError):
        SceneSpec(G, 12, hands=(HandSpec(BBox(800, 400, 100, 100)),))


def test_total_occlusion_warns():
    spec = SceneSpec(
        G, 12,
        hands=(HandSpec(BBox(100, 100, 80, 60), occluded=frozenset(range(12))),),
    )
    with pytest.warns(UserWarning, match="nothing detectable"):
        stream, gt = generate(spec)
    assert len(stream) == 0
    assert gt.total_boxes == 12


def test_demo_scene_layout():
    spec = demo_scene(seed=42)
    assert len(spec.hands) == 3
    assert len(spec.distractors) == 5
    assert sum(len(h.occluded) for h in spec.hands) == 4
    for h in spec.hands:
        for d in spec.distractors:
            assert h.box.area >= 4 * d.box.area
