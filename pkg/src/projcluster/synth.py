"""Deterministic synthetic scene generator with planted ground truth.

Scenes model the target setting: a few large persistent hands near the
camera (optionally occluded for stretches of seconds, with integer
jitter), plus small far-away distractor boxes that flicker in and out.
The generator emits a detection stream and the matching ground truth,
so pipeline output can be scored against a known answer.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from projcluster.boxes import BBox, Detection, FrameGeometry
from projcluster.metrics import GroundTruthSet
from projcluster.streams import DetectionStream


@dataclass(frozen=True)
class HandSpec:
    """A persistent target: base box, jitter half-range, occluded seconds."""

    box: BBox
    jitter: int = 0
    occluded: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.jitter < 0:
            raise ValueError(f"jitter must be >= 0, got {self.jitter}")
        object.__setattr__(self, "occluded", frozenset(self.occluded))


@dataclass(frozen=True)
class DistractorSpec:
    """A small transient box that appears with the given probability."""

    box: BBox
    flicker_p: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.flicker_p <= 1.0:
            raise ValueError(f"flicker_p must be in [0, 1], got {self.flicker_p}")


@dataclass(frozen=True)
class SceneSpec:
    """Full description of one synthetic session.

    Hand boxes must be at least 4x the area of every distractor box,
    keeping the two populations separable by size.
    """

    geometry: FrameGeometry
    duration_s: int
    hands: tuple[HandSpec, ...] = ()
    distractors: tuple[DistractorSpec, ...] = ()
    rng_seed: int = 0
    session_id: str = "synth"

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")
        object.__setattr__(self, "hands", tuple(self.hands))
        object.__setattr__(self, "distractors", tuple(self.distractors))
        for h in self.hands:
            self._check_inside(h.box)
            for d in self.distractors:
                if h.box.area < 4 * d.box.area:
                    raise ValueError(
                        f"hand box {h.box} is under 4x distractor area {d.box.area}"
                    )
        for d in self.distractors:
            self._check_inside(d.box)

    def _check_inside(self, b: BBox) -> None:
        if b.x < 0 or b.y < 0 or b.x2 > self.geometry.width or b.y2 > self.geometry.height:
            raise ValueError(f"box {b} outside {self.geometry.width}x{self.geometry.height}")


def _jittered(box: BBox, dx: int, dy: int, geometry: FrameGeometry) -> BBox:
    # clamp the offset so the full box stays inside the frame
    x = min(max(box.x + dx, 0), geometry.width - box.w)
    y = min(max(box.y + dy, 0), geometry.height - box.h)
    return BBox(x, y, box.w, box.h)


def generate(spec: SceneSpec) -> tuple[DetectionStream, GroundTruthSet]:
    """Roll the scene forward one second at a time.

    Per second, every non-occluded hand emits its base box under an
    integer jitter offset with score ~ U[0.6, 1.0); every distractor
    emits with probability flicker_p and score ~ U[0.5, 0.8).  Ground
    truth lists the true hand boxes for every second, occluded or not.
    Identical seeds give identical output.
    """
    rng = np.random.Generator(np.random.PCG64(spec.rng_seed))
    detections: list[Detection] = []
    gt_frames: dict[int, tuple[BBox, ...]] = {}
    hand_emissions = 0
    for s in range(spec.duration_s):
        for hand in spec.hands:
            if s in hand.occluded:
                continue
            dx = int(rng.integers(-hand.jitter, hand.jitter + 1))
            dy = int(rng.integers(-hand.jitter, hand.jitter + 1))
            score = float(rng.uniform(0.6, 1.0))
            detections.append(
                Detection(s, _jittered(hand.box, dx, dy, spec.geometry), score)
            )
            hand_emissions += 1
        for d in spec.distractors:
            if rng.random() < d.flicker_p:
                score = float(rng.uniform(0.5, 0.8))
                detections.append(Detection(s, d.box, score))
        if spec.hands:
            gt_frames[s] = tuple(h.box for h in spec.hands)
    if spec.hands and hand_emissions == 0:
        warnings.warn(
            "occlusion covers every second; the stream holds nothing detectable",
            stacklevel=2,
        )
    stream = DetectionStream(spec.session_id, spec.geometry, tuple(detections))
    return stream, GroundTruthSet(spec.session_id, gt_frames)


def demo_scene(
    seed: int = 42,
    duration_s: int = 12,
    geometry: FrameGeometry | None = None,
) -> SceneSpec:
    """The reference scene: 3 hands (one occluded 4 of 12 s), 5 distractors.

    Distractor boxes are small enough for the default area threshold to
    remove every region they could form.
    """
    g = geometry or FrameGeometry(858, 480)
    hands = (
        HandSpec(BBox(80, 120, 96, 72), jitter=2),
        HandSpec(BBox(380, 260, 90, 70), jitter=2, occluded=frozenset({3, 4, 5, 6})),
        HandSpec(BBox(640, 100, 84, 66), jitter=2),
    )
    distractors = tuple(
        DistractorSpec(BBox(x, y, 16, 12), flicker_p=0.35)
        for x, y in ((30, 20), (200, 10), (430, 30), (610, 420), (820, 240))
    )
    return SceneSpec(g, duration_s, hands, distractors, rng_seed=seed)


def long_scene(seed: int = 7, duration_s: int = 3600) -> SceneSpec:
    """An hour-equivalent stream for throughput measurements."""
    return demo_scene(seed=seed, duration_s=duration_s)
