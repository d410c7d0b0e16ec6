"""Minimal netpbm I/O: PGM (P2/P5) and PPM (P3/P6) plus box overlays.

Debug dumps are written as ASCII P2 by default so they stay diffable in
tests; binary variants exist for bulk output.  Dumps carry raw values
with a true maxval (e.g. projection counts with maxval = window length);
rendering to display range happens separately.
"""

from __future__ import annotations

import os

import numpy as np

from projcluster.boxes import BBox


def write_pgm(path: str | os.PathLike, cells: np.ndarray, maxval: int | None = None,
              binary: bool = False) -> None:
    if cells.ndim != 2:
        raise ValueError(f"PGM needs a 2-D array, got shape {cells.shape}")
    if maxval is None:
        maxval = max(1, int(cells.max()))
    if int(cells.max(initial=0)) > maxval:
        raise ValueError(f"cell value {int(cells.max())} exceeds maxval {maxval}")
    h, w = cells.shape
    if binary:
        if maxval > 255:
            raise ValueError("binary (P5) output supports maxval <= 255 only")
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
            fh.write(cells.astype(np.uint8).tobytes())
    else:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"P2\n{w} {h}\n{maxval}\n")
            for row in cells:
                fh.write(" ".join(str(int(v)) for v in row))
                fh.write("\n")


def read_pgm(path: str | os.PathLike) -> tuple[np.ndarray, int]:
    """Read a P2 or P5 file; returns (cells, maxval)."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    if magic == b"P2":
        tokens = data.decode("ascii").split()
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
        values = np.array([int(t) for t in tokens[4 : 4 + w * h]], dtype=np.int32)
        return values.reshape(h, w), maxval
    if magic == b"P5":
        # header: magic, width, height, maxval, single whitespace, raster
        pos = 2
        fields = []
        while len(fields) < 3:
            while pos < len(data) and data[pos : pos + 1].isspace():
                pos += 1
            if data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos] != 0x0A:
                    pos += 1
                continue
            start = pos
            while pos < len(data) and not data[pos : pos + 1].isspace():
                pos += 1
            fields.append(int(data[start:pos]))
        pos += 1
        w, h, maxval = fields
        raster = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
        return raster.reshape(h, w).astype(np.int32), maxval
    raise ValueError(f"unsupported netpbm magic {magic!r} in {path}")


def write_ppm(path: str | os.PathLike, pixels: np.ndarray, binary: bool = True) -> None:
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"PPM needs an HxWx3 array, got shape {pixels.shape}")
    h, w, _ = pixels.shape
    if binary:
        with open(path, "wb") as fh:
            fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
            fh.write(pixels.astype(np.uint8).tobytes())
    else:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"P3\n{w} {h}\n255\n")
            for row in pixels:
                fh.write(" ".join(str(int(v)) for px in row for v in px))
                fh.write("\n")


def scale_to_display(cells: np.ndarray, maxval: int) -> np.ndarray:
    """Map raw values 0..maxval linearly onto 0..255 (uint8)."""
    if maxval < 1:
        raise ValueError(f"maxval must be >= 1, got {maxval}")
    return np.rint(cells.astype(np.float64) * (255.0 / maxval)).astype(np.uint8)


def draw_box_outline(pixels: np.ndarray, box: BBox, color, thickness: int = 1) -> None:
    """Burn a rectangle outline into an HxW or HxWx3 array, in place."""
    h, w = pixels.shape[:2]
    x0, y0 = max(0, box.x), max(0, box.y)
    x1, y1 = min(w, box.x + box.w), min(h, box.y + box.h)
    if x1 <= x0 or y1 <= y0:
        return
    t = max(1, thickness)
    pixels[y0 : min(y0 + t, y1), x0:x1] = color
    pixels[max(y1 - t, y0) : y1, x0:x1] = color
    pixels[y0:y1, x0 : min(x0 + t, x1)] = color
    pixels[y0:y1, max(x1 - t, x0) : x1] = color
