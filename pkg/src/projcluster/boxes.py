"""Geometry primitives: boxes, overlap ratio, non-maximum suppression.

Boxes use integer pixel coordinates with half-open extents
[x, x+w) x [y, y+h).  Overlap is computed in exact integer arithmetic
with a single final division, so results are bit-identical across
platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, top-left corner plus positive width/height."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box dimensions must be positive, got w={self.w} h={self.h}")

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h


@dataclass(frozen=True)
class Detection:
    """One scored box on one sampled frame (frame_index counts seconds)."""

    frame_index: int
    box: BBox
    score: float

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be >= 0, got {self.frame_index}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


@dataclass(frozen=True)
class FrameGeometry:
    """Pixel dimensions of the source video frames."""

    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"geometry must be positive, got {self.width}x{self.height}")

    def clip(self, x: int, y: int, w: int, h: int) -> BBox | None:
        """Clip a raw box to the frame; None when nothing is left."""
        x0 = max(x, 0)
        y0 = max(y, 0)
        x1 = min(x + w, self.width)
        y1 = min(y + h, self.height)
        if x1 - x0 <= 0 or y1 - y0 <= 0:
            return None
        return BBox(x0, y0, x1 - x0, y1 - y0)


def intersection_area(a: BBox, b: BBox) -> int:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0
    return iw * ih


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0.0 when disjoint."""
    inter = intersection_area(a, b)
    if inter == 0:
        return 0.0
    union = a.area + b.area - inter
    return inter / union


def nms(dets: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy non-maximum suppression over one frame's detections.

    Repeatedly keeps the highest-scoring survivor and discards every other
    box whose overlap with it exceeds ``iou_threshold``.  Score ties break
    toward the earlier detection in the input, so output is deterministic.
    Returns the kept detections sorted by descending score.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1), got {iou_threshold}")
    if not dets:
        return []
    frames = {d.frame_index for d in dets}
    if len(frames) > 1:
        raise ValueError(f"nms expects one frame, got frame indices {sorted(frames)}")

    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    kept: list[Detection] = []
    suppressed = [False] * len(dets)
    for rank, i in enumerate(order):
        if suppressed[i]:
            continue
        kept.append(dets[i])
        for j in order[rank + 1:]:
            if not suppressed[j] and iou(dets[i].box, dets[j].box) > iou_threshold:
                suppressed[j] = True
    return kept
