"""Reading, validating, and windowing detection streams.

Wire format: UTF-8 text, one detection per line, tab-separated
``session_id  frame_index  x  y  w  h  score``.  Lines starting with
``#`` are comments.  Frame geometry travels out-of-band (CLI flags), and
``frame_index`` counts seconds: upstream tooling is expected to have
sampled the detector at one frame per second.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterator, Sequence

from projcluster.boxes import BBox, Detection, FrameGeometry
from projcluster.errors import StreamParseError, StreamValidationError

DEFAULT_SCORE_THRESHOLD = 0.5
DEFAULT_WINDOW_LENGTH_S = 12


@dataclass(frozen=True)
class DetectionStream:
    """A validated, frame-sorted stream of detections for one session."""

    session_id: str
    geometry: FrameGeometry
    detections: tuple[Detection, ...]

    def __len__(self) -> int:
        return len(self.detections)

    @property
    def duration_s(self) -> int:
        """Seconds spanned: highest frame index + 1, or 0 when empty."""
        if not self.detections:
            return 0
        return max(d.frame_index for d in self.detections) + 1


@dataclass(frozen=True)
class Window:
    """A fixed-length span of consecutive seconds with per-second groups.

    ``frames`` always holds exactly ``length_s`` slots; a slot is empty
    when that second produced no detections.
    """

    index: int
    start_s: int
    length_s: int
    frames: tuple[tuple[Detection, ...], ...]


def read_tsv_rows(path: str | os.PathLike, n_fields: int) -> Iterator[tuple[int, list[str]]]:
    """Yield (line_no, fields) for every record line, skipping comments."""
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != n_fields:
                raise StreamParseError(
                    line_no, f"expected {n_fields} tab-separated fields, got {len(fields)}"
                )
            yield line_no, fields


def load_stream(
    path: str | os.PathLike,
    geometry: FrameGeometry,
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
) -> DetectionStream:
    """Load and validate a detection file.

    Detections scoring below ``score_threshold`` are dropped.  Boxes are
    clipped to the frame; boxes with no area left after clipping are
    dropped.  Records with non-positive dimensions, out-of-range scores,
    or negative frame indices are rejected outright.
    """
    session_id = ""
    dets: list[Detection] = []
    for line_no, fields in read_tsv_rows(path, 7):
        sid = fields[0]
        try:
            frame_index = int(fields[1])
            x, y, w, h = (int(v) for v in fields[2:6])
            score = float(fields[6])
        except ValueError as exc:
            raise StreamParseError(line_no, str(exc)) from exc
        if w <= 0 or h <= 0:
            raise StreamValidationError(
                f"line {line_no}: box dimensions must be positive, got w={w} h={h}"
            )
        if frame_index < 0:
            raise StreamValidationError(f"line {line_no}: negative frame_index {frame_index}")
        if not 0.0 <= score <= 1.0:
            raise StreamValidationError(f"line {line_no}: score {score} outside [0, 1]")
        if not session_id:
            session_id = sid
        elif sid != session_id:
            raise StreamValidationError(
                f"line {line_no}: mixed session ids ({sid!r} after {session_id!r})"
            )
        if score < score_threshold:
            continue
        box = geometry.clip(x, y, w, h)
        if box is None:
            continue
        dets.append(Detection(frame_index, box, score))

    dets.sort(key=lambda d: d.frame_index)  # stable: file order kept within a frame
    return DetectionStream(session_id, geometry, tuple(dets))


def write_stream(stream: DetectionStream, path: str | os.PathLike) -> None:
    """Serialize a stream back to the wire format (scores to 6 decimals)."""
    with open(path, "w", encoding="utf-8") as fh:
        for d in stream.detections:
            b = d.box
            fh.write(
                f"{stream.session_id}\t{d.frame_index}\t{b.x}\t{b.y}\t{b.w}\t{b.h}\t{d.score:.6f}\n"
            )


def windows(
    stream: DetectionStream,
    length_s: int = DEFAULT_WINDOW_LENGTH_S,
    include_partial: bool = False,
) -> list[Window]:
    """Partition a stream into fixed-length windows of per-second groups.

    A stream spanning n seconds yields floor(n / length_s) complete
    windows; the trailing partial window is dropped unless
    ``include_partial`` is set.
    """
    if length_s < 1:
        raise ValueError(f"length_s must be >= 1, got {length_s}")
    n = stream.duration_s
    count = n // length_s
    if include_partial and n % length_s:
        count += 1

    by_second: dict[int, list[Detection]] = {}
    for d in stream.detections:
        by_second.setdefault(d.frame_index, []).append(d)

    out = []
    for i in range(count):
        start = i * length_s
        frames = tuple(
            tuple(by_second.get(start + k, ())) for k in range(length_s)
        )
        out.append(Window(index=i, start_s=start, length_s=length_s, frames=frames))
    return out


def frame_groups(stream: DetectionStream) -> dict[int, Sequence[Detection]]:
    """Detections grouped by frame index (insertion order preserved)."""
    groups: dict[int, list[Detection]] = {}
    for d in stream.detections:
        groups.setdefault(d.frame_index, []).append(d)
    return {k: tuple(v) for k, v in groups.items()}
