"""Detection-quality metrics: matched IoU medians, AP@IoU, count reduction.

AP follows the all-points interpolated convention (area under the
precision-recall curve with the precision envelope), with greedy
confidence-ordered matching and at most one match per ground-truth box.
Windowed regions are compared against per-frame ground truth by
replicating each region across every second of its window.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from projcluster.boxes import BBox, Detection, FrameGeometry, iou
from projcluster.errors import StreamParseError, StreamValidationError, UndefinedMetricError
from projcluster.regions import Region
from projcluster.streams import read_tsv_rows

FramedBox = tuple[int, BBox]
FramedPrediction = tuple[int, BBox, float]


@dataclass(frozen=True)
class GroundTruthSet:
    """Ground-truth boxes grouped by frame index."""

    session_id: str
    frames: Mapping[int, tuple[BBox, ...]]

    @property
    def total_boxes(self) -> int:
        return sum(len(v) for v in self.frames.values())


@dataclass(frozen=True)
class SessionReport:
    """Per-session comparison of the raw detector against the pipeline."""

    session_id: str
    baseline_count: int
    ours_count: int
    reduction_pct: float
    median_iou_baseline: float
    median_iou_ours: float
    ap_05: float


def load_ground_truth(path: str | os.PathLike, geometry: FrameGeometry) -> GroundTruthSet:
    """Read a ground-truth file (detection wire format without the score)."""
    session_id = ""
    frames: dict[int, list[BBox]] = {}
    for line_no, fields in read_tsv_rows(path, 6):
        sid = fields[0]
        try:
            frame_index = int(fields[1])
            x, y, w, h = (int(v) for v in fields[2:6])
        except ValueError as exc:
            raise StreamParseError(line_no, str(exc)) from exc
        if w <= 0 or h <= 0:
            raise StreamValidationError(
                f"line {line_no}: box dimensions must be positive, got w={w} h={h}"
            )
        if frame_index < 0:
            raise StreamValidationError(f"line {line_no}: negative frame_index {frame_index}")
        if not session_id:
            session_id = sid
        elif sid != session_id:
            raise StreamValidationError(
                f"line {line_no}: mixed session ids ({sid!r} after {session_id!r})"
            )
        box = geometry.clip(x, y, w, h)
        if box is None:
            raise StreamValidationError(f"line {line_no}: box lies outside the frame")
        frames.setdefault(frame_index, []).append(box)
    return GroundTruthSet(session_id, {k: tuple(v) for k, v in frames.items()})


def write_ground_truth(gt: GroundTruthSet, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for frame_index in sorted(gt.frames):
            for b in gt.frames[frame_index]:
                fh.write(f"{gt.session_id}\t{frame_index}\t{b.x}\t{b.y}\t{b.w}\t{b.h}\n")


def _greedy_frame_match(preds: Sequence[BBox], gts: Sequence[BBox]) -> list[float]:
    """Per-prediction matched IoU for one frame; unmatched predictions get 0.

    Pairs are taken greedily by descending IoU; each ground-truth box
    matches at most once.  Ties break toward earlier prediction, then
    earlier ground truth, keeping the outcome deterministic.
    """
    pairs = []
    for pi, p in enumerate(preds):
        for gi, g in enumerate(gts):
            v = iou(p, g)
            if v > 0.0:
                pairs.append((v, pi, gi))
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    matched_iou = [0.0] * len(preds)
    pred_used = [False] * len(preds)
    gt_used = [False] * len(gts)
    for v, pi, gi in pairs:
        if pred_used[pi] or gt_used[gi]:
            continue
        pred_used[pi] = True
        gt_used[gi] = True
        matched_iou[pi] = v
    return matched_iou


def match_and_median_iou(preds: Sequence[FramedBox], gt: GroundTruthSet) -> float:
    """Median of per-prediction matched IoUs (lower median for even counts)."""
    if not preds:
        raise UndefinedMetricError("median IoU undefined for an empty prediction set")
    by_frame: dict[int, list[BBox]] = {}
    for frame_index, box in preds:
        by_frame.setdefault(frame_index, []).append(box)
    values: list[float] = []
    for frame_index, boxes in by_frame.items():
        gts = gt.frames.get(frame_index, ())
        values.extend(_greedy_frame_match(boxes, gts))
    values.sort()
    return values[(len(values) - 1) // 2]


def pr_curve(
    preds: Sequence[FramedPrediction],
    gt: GroundTruthSet,
    iou_min: float = 0.5,
) -> tuple[list[float], list[float]]:
    """(recalls, precisions) after each prediction in confidence order."""
    n_gt = gt.total_boxes
    if n_gt == 0:
        raise UndefinedMetricError("AP undefined without ground-truth boxes")
    order = sorted(range(len(preds)), key=lambda i: (-preds[i][2], i))
    gt_used: dict[int, list[bool]] = {
        f: [False] * len(boxes) for f, boxes in gt.frames.items()
    }
    tp = fp = 0
    recalls: list[float] = []
    precisions: list[float] = []
    for i in order:
        frame_index, box, _conf = preds[i]
        gts = gt.frames.get(frame_index, ())
        used = gt_used.get(frame_index, [])
        best_iou, best_gi = 0.0, -1
        for gi, g in enumerate(gts):
            if used[gi]:
                continue
            v = iou(box, g)
            if v > best_iou:
                best_iou, best_gi = v, gi
        if best_gi >= 0 and best_iou >= iou_min:
            used[best_gi] = True
            tp += 1
        else:
            fp += 1
        recalls.append(tp / n_gt)
        precisions.append(tp / (tp + fp))
    return recalls, precisions


def average_precision(
    preds: Sequence[FramedPrediction],
    gt: GroundTruthSet,
    iou_min: float = 0.5,
) -> float:
    """All-points interpolated AP at the given IoU threshold."""
    recalls, precisions = pr_curve(preds, gt, iou_min)
    if not recalls:
        return 0.0
    mrec = [0.0] + recalls + [1.0]
    mpre = [0.0] + precisions + [0.0]
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    ap = 0.0
    for i in range(1, len(mrec)):
        ap += (mrec[i] - mrec[i - 1]) * mpre[i]
    return ap


def reduction_pct(baseline_count: int, ours_count: int) -> float:
    if baseline_count == 0:
        raise UndefinedMetricError("reduction undefined for zero baseline detections")
    return 100.0 * (baseline_count - ours_count) / baseline_count


def replicate_regions(
    regions: Iterable[Region], window_length_s: int
) -> list[FramedPrediction]:
    """Spread each window region over every second of its window."""
    out = []
    for r in regions:
        start = r.window_index * window_length_s
        for s in range(start, start + window_length_s):
            out.append((s, r.box, r.confidence))
    return out


def session_report(
    baseline: Sequence[Detection],
    ours: Sequence[Region],
    gt: GroundTruthSet,
    session_id: str = "",
    window_length_s: int = 12,
) -> SessionReport:
    """Fill every report field for one session."""
    base_preds = [(d.frame_index, d.box) for d in baseline]
    ours_framed = replicate_regions(ours, window_length_s)
    return SessionReport(
        session_id=session_id or gt.session_id,
        baseline_count=len(baseline),
        ours_count=len(ours),
        reduction_pct=reduction_pct(len(baseline), len(ours)),
        median_iou_baseline=match_and_median_iou(base_preds, gt),
        median_iou_ours=match_and_median_iou([(f, b) for f, b, _ in ours_framed], gt),
        ap_05=average_precision(ours_framed, gt, 0.5),
    )


_COLUMNS = ("Session", "# Detections", "# Regions", "Median IoU (det)",
            "Median IoU (ours)", "AP@0.5", "Reduction")


def format_report_table(reports: Sequence[SessionReport]) -> str:
    """Aligned plain-text table, one row per session plus a mean row."""
    rows = [
        (
            r.session_id,
            f"{r.baseline_count:,}",
            f"{r.ours_count:,}",
            f"{r.median_iou_baseline:.2f}",
            f"{r.median_iou_ours:.2f}",
            f"{r.ap_05:.2f}",
            f"{r.reduction_pct:.1f}%",
        )
        for r in reports
    ]
    if len(reports) > 1:
        mean_red = sum(r.reduction_pct for r in reports) / len(reports)
        rows.append(("mean", "", "", "", "", "", f"{mean_red:.1f}%"))
    widths = [max(len(_COLUMNS[i]), *(len(row[i]) for row in rows)) for i in range(len(_COLUMNS))]
    lines = ["  ".join(c.ljust(widths[i]) for i, c in enumerate(_COLUMNS)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)).rstrip())
    return "\n".join(lines)


def write_report(reports: Sequence[SessionReport], path: str | os.PathLike) -> None:
    """Machine-readable report: one tab-separated record per session."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# session_id\tbaseline_count\tours_count\treduction_pct\t"
                 "median_iou_baseline\tmedian_iou_ours\tap_05\n")
        for r in reports:
            fh.write(
                f"{r.session_id}\t{r.baseline_count}\t{r.ours_count}\t"
                f"{r.reduction_pct:.6f}\t{r.median_iou_baseline:.6f}\t"
                f"{r.median_iou_ours:.6f}\t{r.ap_05:.6f}\n"
            )
