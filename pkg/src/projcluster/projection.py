"""Rasterizing per-second detections and accumulating them over a window.

Each second's post-NMS boxes become a binary occupancy grid; a window's
grids sum elementwise into a projection image whose cell values count
the seconds during which that cell was covered (0..window length).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from projcluster.boxes import BBox, Detection, FrameGeometry
from projcluster.errors import GeometryMismatchError

# Guard against float droop in scale products (e.g. 0.1 * 470 = 47.000...004).
_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class BinaryGrid:
    """Occupancy mask for one second: 1 where any detection box covers the cell."""

    geometry: FrameGeometry
    scale: float
    cells: np.ndarray  # uint8, shape (rows, cols)


@dataclass(frozen=True, eq=False)
class ProjectionImage:
    """Per-cell count of covering seconds inside one window."""

    geometry: FrameGeometry
    scale: float
    counts: np.ndarray  # int32, shape (rows, cols)


def grid_shape(geometry: FrameGeometry, scale: float) -> tuple[int, int]:
    """(rows, cols) of the occupancy grid at a given scale."""
    if not 0.0 < scale <= 1.0:
        raise ValueError(f"scale must lie in (0, 1], got {scale}")
    rows = max(1, math.ceil(geometry.height * scale - _EPS))
    cols = max(1, math.ceil(geometry.width * scale - _EPS))
    return rows, cols


def scaled_cell_span(lo: int, size: int, scale: float, n_cells: int) -> tuple[int, int]:
    """Half-open cell index range touched by the interval [lo, lo+size).

    Any partially covered cell counts as covered, so downscaling dilates
    rather than erodes thin regions.
    """
    first = math.floor(lo * scale + _EPS)
    last = math.ceil((lo + size) * scale - _EPS)
    return max(0, first), min(n_cells, last)


def rasterize(
    frame_dets: Sequence[Detection],
    geometry: FrameGeometry,
    scale: float = 1.0,
) -> BinaryGrid:
    """Burn a frame's (already NMS-filtered) boxes into an occupancy grid."""
    rows, cols = grid_shape(geometry, scale)
    cells = np.zeros((rows, cols), dtype=np.uint8)
    for det in frame_dets:
        b = det.box
        r0, r1 = scaled_cell_span(b.y, b.h, scale, rows)
        c0, c1 = scaled_cell_span(b.x, b.w, scale, cols)
        cells[r0:r1, c0:c1] = 1
    return BinaryGrid(geometry=geometry, scale=scale, cells=cells)


def project(grids: Sequence[BinaryGrid]) -> ProjectionImage:
    """Elementwise sum of a window's binary grids."""
    if not grids:
        raise ValueError("project needs at least one grid")
    shape = grids[0].cells.shape
    for g in grids[1:]:
        if g.cells.shape != shape:
            raise GeometryMismatchError(
                f"grid shapes differ: {shape} vs {g.cells.shape}"
            )
    counts = np.zeros(shape, dtype=np.int32)
    for g in grids:
        counts += g.cells
    return ProjectionImage(geometry=grids[0].geometry, scale=grids[0].scale, counts=counts)


def cell_box_to_pixels(
    r0: int, c0: int, r1: int, c1: int, scale: float, geometry: FrameGeometry
) -> BBox:
    """Map a half-open cell rectangle back to pixel coordinates.

    At scale 1 this is the identity; below 1 the pixel box covers the
    cells' full extent, clipped to the frame.
    """
    x0 = max(0, math.floor(c0 / scale + _EPS))
    y0 = max(0, math.floor(r0 / scale + _EPS))
    x1 = min(geometry.width, math.ceil(c1 / scale - _EPS))
    y1 = min(geometry.height, math.ceil(r1 / scale - _EPS))
    return BBox(x0, y0, x1 - x0, y1 - y0)
