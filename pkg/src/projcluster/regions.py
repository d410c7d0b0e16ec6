"""From projection image to hand regions: threshold, label, filter.

The clustering step is intermeans (ISODATA) thresholding realized as
Ridler-Calvard iteration on the integer count histogram, followed by
8-connected component labeling and removal of components smaller than
the area threshold.  All arithmetic on the threshold side is exact
integer arithmetic so results are reproducible bit-for-bit.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from projcluster.boxes import BBox, FrameGeometry, iou, nms
from projcluster.errors import NoContrastError
from projcluster.pgm import write_pgm
from projcluster.projection import (
    BinaryGrid,
    ProjectionImage,
    cell_box_to_pixels,
    grid_shape,
    project,
    rasterize,
)
from projcluster.streams import DetectionStream, Window, windows

# Fraction of grid cells below which a component counts as a far-group blip.
DEFAULT_AREA_FRACTION = 0.002

_EIGHT_CONNECTED = np.ones((3, 3), dtype=np.uint8)


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for the window pipeline.

    ``area_threshold_cells`` of None resolves at run time to 0.2% of the
    grid's cell count (at least 1).  ``merge_iou`` of None leaves
    overlapping regions unmerged.
    """

    window_length_s: int = 12
    area_threshold_cells: int | None = None
    nms_iou: float = 0.5
    score_threshold: float = 0.5
    scale: float = 1.0
    include_partial_window: bool = False
    merge_iou: float | None = None

    def __post_init__(self):
        if self.window_length_s < 1:
            raise ValueError(f"window_length_s must be >= 1, got {self.window_length_s}")
        if self.area_threshold_cells is not None and self.area_threshold_cells < 1:
            raise ValueError("area_threshold_cells must be >= 1 when given")
        if not 0.0 < self.scale <= 1.0:
            raise ValueError(f"scale must lie in (0, 1], got {self.scale}")
        if not 0.0 < self.nms_iou < 1.0:
            raise ValueError(f"nms_iou must lie in (0, 1), got {self.nms_iou}")
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ValueError(f"score_threshold must lie in [0, 1], got {self.score_threshold}")
        if self.merge_iou is not None and not 0.0 < self.merge_iou < 1.0:
            raise ValueError(f"merge_iou must lie in (0, 1), got {self.merge_iou}")

    def resolve_area_threshold(self, rows: int, cols: int) -> int:
        if self.area_threshold_cells is not None:
            return self.area_threshold_cells
        return max(1, round(DEFAULT_AREA_FRACTION * rows * cols))


@dataclass(frozen=True, eq=False)
class ClusterImage:
    """Labeled foreground components of one window's projection.

    Labels are dense 1..K in raster-scan discovery order, 0 is
    background.  ``counts`` keeps the source projection so downstream
    stats (mean count per component) stay available.
    """

    geometry: FrameGeometry
    scale: float
    labels: np.ndarray  # int32, shape (rows, cols)
    n_labels: int
    threshold_used: int
    counts: np.ndarray  # source projection counts


@dataclass(frozen=True)
class Region:
    """One kept component: tight pixel box plus component statistics."""

    window_index: int
    box: BBox
    area_cells: int
    mean_count: float
    confidence: float


@dataclass(frozen=True)
class RegionSet:
    """All regions of one window."""

    session_id: str
    window_index: int
    start_s: int
    length_s: int
    regions: tuple[Region, ...]


def _round_half_even_ratio(num: int, den: int) -> int:
    """Exact round-half-to-even of num/den for non-negative integers."""
    q, r = divmod(num, den)
    twice = 2 * r
    if twice > den:
        return q + 1
    if twice < den:
        return q
    return q if q % 2 == 0 else q + 1


def intermeans_threshold(hist: Sequence[int]) -> int:
    """Intermeans threshold of an integer-value histogram.

    Runs the Ridler-Calvard iteration from the rounded global mean: the
    next threshold is the rounded midpoint of the means of the two
    classes the current one induces (low class: values <= t), until the
    value stabilizes.  When several fixpoints exist the smallest wins.
    The degenerate two-adjacent-value histogram whose midpoint rounds
    upward has no fixpoint at all; the highest valid candidate is
    returned for it.
    """
    counts = [int(c) for c in hist]
    if any(c < 0 for c in counts):
        raise ValueError("histogram counts must be non-negative")
    present = [v for v, c in enumerate(counts) if c > 0]
    if len(present) < 2:
        raise NoContrastError(
            f"need at least two distinct values, got {len(present)}"
        )
    lo, hi = present[0], present[-1]
    total = sum(counts)
    wsum = sum(v * c for v, c in enumerate(counts))

    # Prefix sums over values <= t, for O(1) class means.
    n_le = [0] * (hi + 1)
    s_le = [0] * (hi + 1)
    acc_n = acc_s = 0
    for v in range(hi + 1):
        acc_n += counts[v]
        acc_s += v * counts[v]
        n_le[v] = acc_n
        s_le[v] = acc_s

    def step(t: int) -> int:
        nl, sl = n_le[t], s_le[t]
        nh, sh = total - nl, wsum - sl
        # midpoint of the class means, rounded: (sl/nl + sh/nh) / 2
        return _round_half_even_ratio(sl * nh + sh * nl, 2 * nl * nh)

    def clamp(t: int) -> int:
        return min(max(t, lo), hi - 1)

    t = clamp(_round_half_even_ratio(wsum, total))
    for _ in range(hi - lo + 2):
        t_next = clamp(step(t))
        if t_next == t:
            break
        t = t_next

    for cand in range(lo, t):
        if step(cand) == cand:
            return cand
    return t


def isodata_threshold(pi: ProjectionImage) -> int:
    """Threshold a projection image; foreground is counts strictly above it."""
    hist = np.bincount(pi.counts.ravel())
    return intermeans_threshold(hist.tolist())


def connected_components(pi: ProjectionImage, t: int) -> ClusterImage:
    """8-connected labeling of cells with count > t.

    Label ids are dense and follow raster-scan discovery order: the
    component whose first cell appears earliest in row-major order gets
    label 1, and so on.
    """
    foreground = pi.counts > t
    raw, n = ndimage.label(foreground, structure=_EIGHT_CONNECTED)
    if n == 0:
        labels = np.zeros(pi.counts.shape, dtype=np.int32)
        return ClusterImage(pi.geometry, pi.scale, labels, 0, t, pi.counts)

    flat = raw.ravel()
    uniq, first_idx = np.unique(flat, return_index=True)
    mask = uniq > 0
    order = np.argsort(first_idx[mask], kind="stable")
    lut = np.zeros(n + 1, dtype=np.int32)
    lut[uniq[mask][order]] = np.arange(1, n + 1, dtype=np.int32)
    labels = lut[raw]
    return ClusterImage(pi.geometry, pi.scale, labels, n, t, pi.counts)


def area_filter(
    ci: ClusterImage,
    a_th: int,
    window_index: int = 0,
    window_length: int = 12,
) -> list[Region]:
    """Keep components with at least ``a_th`` cells, as Region records.

    The boundary is inclusive: a component of exactly ``a_th`` cells
    survives.  Regions come out in label order (raster discovery order).
    """
    if a_th < 1:
        raise ValueError(f"a_th must be >= 1, got {a_th}")
    if ci.n_labels == 0:
        return []
    flat = ci.labels.ravel()
    areas = np.bincount(flat, minlength=ci.n_labels + 1)[1:]
    wsums = np.bincount(flat, weights=ci.counts.ravel().astype(np.float64),
                        minlength=ci.n_labels + 1)[1:]
    slices = ndimage.find_objects(ci.labels)

    out = []
    for k in range(ci.n_labels):
        area = int(areas[k])
        if area < a_th:
            continue
        rs, cs = slices[k]
        box = cell_box_to_pixels(rs.start, cs.start, rs.stop, cs.stop,
                                 ci.scale, ci.geometry)
        mean_count = float(wsums[k]) / area
        out.append(Region(
            window_index=window_index,
            box=box,
            area_cells=area,
            mean_count=mean_count,
            confidence=mean_count / window_length,
        ))
    return out


def merge_overlapping(regions: list[Region], merge_iou: float,
                      window_length: int) -> list[Region]:
    """Union-find merge of regions whose pairwise IoU exceeds the threshold."""
    n = len(regions)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if iou(regions[i].box, regions[j].box) > merge_iou:
                parent[find(i)] = find(j)

    groups: dict[int, list[Region]] = {}
    for i, r in enumerate(regions):
        groups.setdefault(find(i), []).append(r)

    merged = []
    for group in groups.values():
        if len(group) == 1:
            merged.append(group[0])
            continue
        x0 = min(r.box.x for r in group)
        y0 = min(r.box.y for r in group)
        x1 = max(r.box.x + r.box.w for r in group)
        y1 = max(r.box.y + r.box.h for r in group)
        area = sum(r.area_cells for r in group)
        mean = sum(r.mean_count * r.area_cells for r in group) / area
        merged.append(Region(
            window_index=group[0].window_index,
            box=BBox(x0, y0, x1 - x0, y1 - y0),
            area_cells=area,
            mean_count=mean,
            confidence=mean / window_length,
        ))
    merged.sort(key=lambda r: (r.box.y, r.box.x))
    return merged


@dataclass(frozen=True)
class DumpDirs:
    """Optional debug-dump locations; any of the three may be None."""

    binary_grids: str | os.PathLike | None = None
    projections: str | os.PathLike | None = None
    clusters: str | os.PathLike | None = None


def process_window(
    session_id: str,
    win: Window,
    geometry,
    cfg: PipelineConfig,
    dumps: DumpDirs | None = None,
) -> RegionSet:
    """Run one window through NMS, projection, threshold, label, filter."""
    grids: list[BinaryGrid] = []
    for offset, frame_dets in enumerate(win.frames):
        kept = nms(frame_dets, cfg.nms_iou) if len(frame_dets) > 1 else list(frame_dets)
        grid = rasterize(kept, geometry, cfg.scale)
        grids.append(grid)
        if dumps and dumps.binary_grids:
            write_pgm(Path(dumps.binary_grids) / f"bi_{win.start_s + offset:06d}.pgm",
                      grid.cells, maxval=1)

    pi = project(grids)
    if dumps and dumps.projections:
        write_pgm(Path(dumps.projections) / f"pi_{win.index:04d}.pgm",
                  pi.counts, maxval=win.length_s)

    empty = RegionSet(session_id, win.index, win.start_s, win.length_s, ())
    try:
        t = isodata_threshold(pi)
    except NoContrastError:
        return empty

    ci = connected_components(pi, t)
    if dumps and dumps.clusters:
        write_pgm(Path(dumps.clusters) / f"ci_{win.index:04d}.pgm",
                  (ci.labels > 0).astype(np.uint8), maxval=1)

    rows, cols = grid_shape(geometry, cfg.scale)
    a_th = cfg.resolve_area_threshold(rows, cols)
    regs = area_filter(ci, a_th, window_index=win.index,
                       window_length=cfg.window_length_s)
    if cfg.merge_iou is not None:
        regs = merge_overlapping(regs, cfg.merge_iou, cfg.window_length_s)
    return RegionSet(session_id, win.index, win.start_s, win.length_s, tuple(regs))


def detect_hands(
    stream: DetectionStream,
    cfg: PipelineConfig | None = None,
    threads: int | None = None,
    dumps: DumpDirs | None = None,
) -> list[RegionSet]:
    """Full pipeline over every window of a stream, in window order.

    Windows are independent, so they run on a worker pool; results are
    collected in deterministic window order regardless of completion
    order.  Degenerate windows (no contrast) come back empty rather than
    raising, so batch runs over hour-long sessions never abort midway.
    """
    cfg = cfg or PipelineConfig()
    wins = windows(stream, cfg.window_length_s, cfg.include_partial_window)

    def run(win: Window) -> RegionSet:
        return process_window(stream.session_id, win, stream.geometry, cfg, dumps)

    if threads == 1 or len(wins) <= 1:
        return [run(w) for w in wins]
    max_workers = threads if threads else min(32, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(run, wins))


def write_regions(region_sets: Sequence[RegionSet], path: str | os.PathLike) -> None:
    """Serialize regions, one record per line (empty windows emit nothing)."""
    with open(path, "w", encoding="utf-8") as fh:
        for rs in region_sets:
            for r in rs.regions:
                b = r.box
                fh.write(
                    f"{rs.session_id}\t{rs.window_index}\t{rs.start_s}\t"
                    f"{b.x}\t{b.y}\t{b.w}\t{b.h}\t{r.area_cells}\t{r.confidence:.6f}\n"
                )


def read_regions(path: str | os.PathLike, window_length_s: int = 12) -> list[RegionSet]:
    """Read a region file back into RegionSets grouped by window."""
    from projcluster.streams import read_tsv_rows
    from projcluster.errors import StreamParseError

    grouped: dict[tuple[str, int, int], list[Region]] = {}
    for line_no, fields in read_tsv_rows(path, 9):
        sid = fields[0]
        try:
            window_index = int(fields[1])
            start_s = int(fields[2])
            x, y, w, h = (int(v) for v in fields[3:7])
            area_cells = int(fields[7])
            confidence = float(fields[8])
        except ValueError as exc:
            raise StreamParseError(line_no, str(exc)) from exc
        region = Region(
            window_index=window_index,
            box=BBox(x, y, w, h),
            area_cells=area_cells,
            mean_count=confidence * window_length_s,
            confidence=confidence,
        )
        grouped.setdefault((sid, window_index, start_s), []).append(region)

    return [
        RegionSet(sid, wi, start, window_length_s, tuple(regs))
        for (sid, wi, start), regs in sorted(grouped.items())
    ]
