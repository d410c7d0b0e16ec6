"""Transforms, descriptors, and the separable hyperparameter search."""

import math
import sys

import numpy as np
import pytest

from projcluster.augment import (
    AugPlan,
    AugSetDescriptor,
    LabeledImage,
    RANGE_CANDIDATES_DEG,
    SubprocessOracle,
    TRANSLATE_CANDIDATES_PX,
    apply_transform,
    build_descriptor,
    evaluate_candidates,
    map_box,
    materialize,
    pick_widest_within_delta,
    probability_sweep,
    range_search,
    transform_matrix,
    translate_search,
)
from projcluster.boxes import BBox
from projcluster.errors import MagnitudeRangeError, OracleError


def make_image(seed=0, w=64, h=48, boxes=((10, 8, 20, 16),)):
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, size=(h, w), dtype=np.uint8)
    return LabeledImage(pixels, tuple(BBox(*b) for b in boxes))


def test_labeled_image_validates_boxes():
    with pytest.raises(ValueError):
        LabeledImage(np.zeros((10, 10), dtype=np.uint8), (BBox(5, 5, 10, 10),))


def test_magnitude_zero_is_identity_every_kind():
    img = make_image(1)
    for kind in ("flip", "scale", "shear", "rotate", "translate"):
        out = apply_transform(img, kind, 0)
        assert np.array_equal(out.pixels, img.pixels), kind
        assert out.boxes == img.boxes, kind


def test_flip_box_formula():
    img = make_image(2, w=100, h=60, boxes=((12, 7, 30, 20),))
    out = apply_transform(img, "flip", 1)
    assert out.boxes == (BBox(100 - 12 - 30, 7, 30, 20),)


def test_flip_pixels_mirror():
    img = make_image(3)
    out = apply_transform(img, "flip", 1)
    assert np.array_equal(out.pixels, img.pixels[:, ::-1])


def test_flip_twice_restores():
    img = make_image(4)
    out = apply_transform(apply_transform(img, "flip", 1), "flip", 1)
    assert np.array_equal(out.pixels, img.pixels)
    assert out.boxes == img.boxes


def test_flip_rejects_other_magnitudes():
    with pytest.raises(MagnitudeRangeError):
        apply_transform(make_image(), "flip", 0.5)


def test_translate_box_example():
    img = make_image(5, w=200, h=120, boxes=((100, 50, 30, 30),))
    out = apply_transform(img, "translate", 20)
    assert out.boxes == (BBox(120, 50, 30, 30),)


def test_translate_moves_pixels_horizontally():
    img = make_image(6)
    out = apply_transform(img, "translate", 10)
    assert np.array_equal(out.pixels[:, 10:], img.pixels[:, :-10])
    assert np.all(out.pixels[:, :10] == 0)


def test_translate_drops_box_pushed_offscreen():
    img = make_image(7, w=64, h=48, boxes=((50, 10, 12, 10),))
    out = apply_transform(img, "translate", 60)
    assert out.boxes == ()


def test_drop_rule_keeps_box_holding_quarter():
    # 10 wide at x=50: shifting +9 leaves 5 of 10 columns (50% >= 25%)
    img = make_image(8, w=64, h=48, boxes=((50, 10, 10, 10),))
    out = apply_transform(img, "translate", 9)
    assert out.boxes == (BBox(59, 10, 5, 10),)
    # shifting +12 leaves 2 of 10 columns (20% < 25%): dropped
    out = apply_transform(img, "translate", 12)
    assert out.boxes == ()


def test_scale_encodes_factor_minus_one():
    img = make_image(9, w=100, h=100, boxes=((40, 40, 20, 20),))
    out = apply_transform(img, "scale", 0.2)    # factor 1.2 about center
    (b,) = out.boxes
    assert b.w == 24 and b.h == 24
    out = apply_transform(img, "scale", -0.2)   # factor 0.8
    (b,) = out.boxes
    assert b.w == 16 and b.h == 16


def test_rotate_180_reverses_both_axes():
    # pixel centers sit half a cell from floor boundaries, so the exact
    # 180-degree map stays numerically safe under nearest neighbor
    img = make_image(10, w=50, h=50, boxes=())
    out = apply_transform(img, "rotate", 180)
    assert np.array_equal(out.pixels, img.pixels[::-1, ::-1])


def test_magnitude_range_enforced():
    img = make_image(11)
    with pytest.raises(MagnitudeRangeError):
        apply_transform(img, "rotate", 20, max_magnitude=10)
    # inside the range passes
    apply_transform(img, "rotate", 10, max_magnitude=10)


def test_box_maps_as_corner_aabb():
    rng = np.random.default_rng(12)
    for _ in range(50):
        b = BBox(int(rng.integers(0, 100)), int(rng.integers(0, 80)),
                 int(rng.integers(5, 60)), int(rng.integers(5, 40)))
        kind = str(rng.choice(["rotate", "shear", "scale", "translate"]))
        magnitude = float(rng.uniform(-15, 15)) if kind != "scale" else \
            float(rng.choice([-0.2, 0.2]))
        m = transform_matrix(kind, magnitude, 200, 140)
        got = map_box(b, m, 200, 140)
        # independent corner mapping
        pts = [(b.x, b.y), (b.x + b.w, b.y), (b.x, b.y + b.h), (b.x + b.w, b.y + b.h)]
        mx = [m[0, 0] * x + m[0, 1] * y + m[0, 2] for x, y in pts]
        my = [m[1, 0] * x + m[1, 1] * y + m[1, 2] for x, y in pts]
        x0 = max(0, math.floor(min(mx) + 1e-9))
        y0 = max(0, math.floor(min(my) + 1e-9))
        x1 = min(200, math.ceil(max(mx) - 1e-9))
        y1 = min(140, math.ceil(max(my) - 1e-9))
        if x1 <= x0 or y1 <= y0 or (x1 - x0) * (y1 - y0) < 0.25 * b.area:
            assert got is None
        else:
            assert got == BBox(x0, y0, x1 - x0, y1 - y0)


def test_plan_validation():
    with pytest.raises(ValueError):
        AugPlan(shear_max_deg=-1)
    with pytest.raises(ValueError):
        AugPlan(probability=1.5)
    with pytest.raises(ValueError):
        AugPlan(scale_choices=(0.0, 1.2))


def test_descriptor_determinism():
    plan = AugPlan(shear_max_deg=3, rotate_max_deg=7, translate_max_px=20,
                   probability=0.5)
    a = build_descriptor(plan, 32, rng_seed=9)
    b = build_descriptor(plan, 32, rng_seed=9)
    assert a == b
    c = build_descriptor(plan, 32, rng_seed=10)
    assert a != c


def test_descriptor_p0_is_unaugmented():
    plan = AugPlan(shear_max_deg=3, rotate_max_deg=7, translate_max_px=20,
                   probability=0.0)
    for seed in range(5):
        d = build_descriptor(plan, 16, rng_seed=seed)
        assert d.is_unaugmented


def test_descriptor_p1_applies_every_available_kind():
    plan = AugPlan(shear_max_deg=3, rotate_max_deg=7, translate_max_px=20,
                   probability=1.0)
    d = build_descriptor(plan, 8, rng_seed=0)
    for per_image in d.assignments:
        assert [k for k, _ in per_image] == \
            ["flip", "scale", "shear", "rotate", "translate"]
        for kind, mag in per_image:
            if kind == "shear":
                assert abs(mag) <= 3
            if kind == "rotate":
                assert abs(mag) <= 7
            if kind == "translate":
                assert abs(mag) <= 20
            if kind == "scale":
                assert mag in (pytest.approx(-0.2), pytest.approx(0.2))


def test_materialize_runs_assignments():
    plan = AugPlan(rotate_max_deg=7, scale_choices=(), flip=False,
                   probability=1.0)
    d = build_descriptor(plan, 3, rng_seed=1)
    imgs = [make_image(s) for s in range(3)]
    out = materialize(d, imgs)
    assert len(out) == 3
    with pytest.raises(ValueError):
        materialize(d, imgs[:2])


def step_oracle(kind_attr, knee, hi=0.9, lo=0.7):
    def oracle(desc):
        return hi if getattr(desc.plan, kind_attr) <= knee else lo
    return oracle


def test_range_search_planted_knee():
    oracle = step_oracle("rotate_max_deg", 8)
    assert range_search("rotate", RANGE_CANDIDATES_DEG, oracle, 0.01) == 8


def test_range_search_constant_returns_widest():
    assert range_search("shear", RANGE_CANDIDATES_DEG, lambda d: 0.8, 0.01) == 32


def test_translate_search():
    oracle = step_oracle("translate_max_px", 16)
    assert translate_search(TRANSLATE_CANDIDATES_PX, oracle, 0.01) == 16
    assert translate_search(TRANSLATE_CANDIDATES_PX, lambda d: 0.5, 0.01) == 800


def test_delta_widens_choice_monotonically():
    def oracle(desc):
        # gentle decay past 4 degrees
        table = {1: 0.90, 2: 0.90, 4: 0.90, 8: 0.885, 16: 0.87, 32: 0.84}
        return table[int(desc.plan.rotate_max_deg)]
    prev = 0
    for delta in (0.0, 0.01, 0.02, 0.04, 0.07):
        got = range_search("rotate", RANGE_CANDIDATES_DEG, oracle, delta)
        assert got >= prev
        prev = got


def test_pick_widest_within_delta():
    scores = {1: 0.9, 2: 0.9, 4: 0.7}
    assert pick_widest_within_delta(scores, 0.01) == 2
    assert pick_widest_within_delta(scores, 0.3) == 4
    with pytest.raises(ValueError):
        pick_widest_within_delta(scores, -0.1)


def test_probability_sweep_peak():
    def oracle(desc):
        return {0.0: 0.5, 0.25: 0.7, 0.5: 0.9, 0.75: 0.6, 1.0: 0.4}[
            desc.plan.probability]
    plan = AugPlan(shear_max_deg=3, rotate_max_deg=7, translate_max_px=20)
    p_star, scores = probability_sweep(plan, oracle, rng_seed=0)
    assert p_star == 0.5
    assert set(scores) == {0.0, 0.25, 0.5, 0.75, 1.0}


def test_probability_sweep_tie_breaks_low():
    plan = AugPlan(shear_max_deg=3, rotate_max_deg=7, translate_max_px=20)
    p_star, _ = probability_sweep(plan, lambda d: 0.8, rng_seed=0)
    assert p_star == 0.0


def test_oracle_failure_carries_candidate():
    def bad(desc):
        raise RuntimeError("trainer crashed")
    with pytest.raises(OracleError) as ei:
        range_search("rotate", RANGE_CANDIDATES_DEG, bad, 0.01)
    assert ei.value.kind == "rotate"
    assert ei.value.candidate == 1
    assert "trainer crashed" in str(ei.value)


def test_evaluate_candidates_validates_order():
    with pytest.raises(ValueError):
        evaluate_candidates("rotate", [4, 2, 1], lambda d: 0.5)
    with pytest.raises(ValueError):
        evaluate_candidates("rotate", [], lambda d: 0.5)


def test_subprocess_oracle_round_trip():
    script = (
        "import json,sys;"
        "d=json.load(open(sys.argv[1]));"
        "print(0.9 if d['plan']['rotate_max_deg']<=8 else 0.7)"
    )
    oracle = SubprocessOracle([sys.executable, "-c", script])
    assert range_search("rotate", RANGE_CANDIDATES_DEG, oracle, 0.01) == 8


def test_subprocess_oracle_failure_surfaces_stderr():
    script = "import sys; sys.stderr.write('no gpu found'); sys.exit(3)"
    oracle = SubprocessOracle([sys.executable, "-c", script])
    with pytest.raises(OracleError) as ei:
        translate_search(TRANSLATE_CANDIDATES_PX, oracle, 0.01)
    assert "no gpu found" in str(ei.value)
    assert ei.value.candidate == 1


def test_subprocess_oracle_garbage_output():
    script = "print('not a number')"
    oracle = SubprocessOracle([sys.executable, "-c", script])
    with pytest.raises(OracleError):
        translate_search(TRANSLATE_CANDIDATES_PX, oracle, 0.01)


def test_descriptor_json_shape():
    plan = AugPlan(shear_max_deg=3, rotate_max_deg=7, translate_max_px=20,
                   probability=0.5)
    d = build_descriptor(plan, 4, rng_seed=2)
    import json

    doc = json.loads(d.to_json())
    assert doc["n_images"] == 4
    assert doc["plan"]["rotate_max_deg"] == 7
    assert len(doc["assignments"]) == 4
