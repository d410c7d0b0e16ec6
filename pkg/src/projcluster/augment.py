"""Affine augmentation transforms and hyperparameter search.

Five transform kinds operate on a labeled image: horizontal flip,
scaling, shear, rotation, and horizontal translation.  Pixels are
resampled with an inverse-mapped nearest-neighbor lookup; boxes are
mapped by transforming their four corners and taking the axis-aligned
bounding box of the result.

The search half finds per-transform magnitude ranges one at a time
(keep the widest range whose score stays within delta of the best) and
then sweeps the shared application probability over a fixed grid.
Scoring is delegated to a pluggable oracle; an adapter that shells out
to an external command is included.
"""

from __future__ import annotations

import json
import math
import os
import subprocess
import tempfile
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from projcluster.boxes import BBox
from projcluster.errors import MagnitudeRangeError, OracleError

TRANSFORM_KINDS = ("flip", "scale", "shear", "rotate", "translate")

# candidate grids for the separable searches
RANGE_CANDIDATES_DEG = (1, 2, 4, 8, 16, 32)
TRANSLATE_CANDIDATES_PX = (1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 800)
PROBABILITY_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)

DEFAULT_DELTA = 0.01
DEFAULT_SET_SIZE = 64

_EPS = 1e-9

ScoreOracle = Callable[["AugSetDescriptor"], float]


@dataclass(frozen=True, eq=False)
class LabeledImage:
    """A 2-D intensity image with axis-aligned box annotations."""

    pixels: np.ndarray
    boxes: tuple[BBox, ...] = ()

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ValueError(f"pixels must be 2-D, got shape {px.shape}")
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "boxes", tuple(self.boxes))
        h, w = px.shape
        for b in self.boxes:
            if b.x < 0 or b.y < 0 or b.x2 > w or b.y2 > h:
                raise ValueError(f"box {b} outside {w}x{h} image")

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


@dataclass(frozen=True)
class AugPlan:
    """Augmentation ranges plus the shared application probability."""

    shear_max_deg: float = 0.0
    rotate_max_deg: float = 0.0
    translate_max_px: float = 0.0
    scale_choices: tuple[float, ...] = (0.8, 1.2)
    flip: bool = True
    probability: float = 0.0

    def __post_init__(self):
        if self.shear_max_deg < 0 or self.rotate_max_deg < 0 or self.translate_max_px < 0:
            raise ValueError("transform maxima must be >= 0")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability must be in [0, 1], got {self.probability}")
        for s in self.scale_choices:
            if s <= 0:
                raise ValueError(f"scale factors must be positive, got {s}")

    def kind_available(self, kind: str) -> bool:
        """Whether this plan can apply the given transform at all."""
        if kind == "flip":
            return self.flip
        if kind == "scale":
            return len(self.scale_choices) > 0
        if kind == "shear":
            return self.shear_max_deg > 0
        if kind == "rotate":
            return self.rotate_max_deg > 0
        if kind == "translate":
            return self.translate_max_px > 0
        raise ValueError(f"unknown transform kind {kind!r}")


Assignment = tuple[str, float]


@dataclass(frozen=True)
class AugSetDescriptor:
    """Concrete per-image transform assignments drawn from a plan.

    This is what a score oracle receives: enough to materialize the
    augmented training set exactly, without shipping pixels around.
    """

    plan: AugPlan
    n_images: int
    rng_seed: int
    assignments: tuple[tuple[Assignment, ...], ...]

    @property
    def is_unaugmented(self) -> bool:
        return all(len(a) == 0 for a in self.assignments)

    def to_json(self) -> str:
        doc = {
            "plan": {
                "shear_max_deg": self.plan.shear_max_deg,
                "rotate_max_deg": self.plan.rotate_max_deg,
                "translate_max_px": self.plan.translate_max_px,
                "scale_choices": list(self.plan.scale_choices),
                "flip": self.plan.flip,
                "probability": self.plan.probability,
            },
            "n_images": self.n_images,
            "rng_seed": self.rng_seed,
            "assignments": [
                [[kind, magnitude] for kind, magnitude in per_image]
                for per_image in self.assignments
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def transform_matrix(kind: str, magnitude: float, width: int, height: int) -> np.ndarray:
    """Forward 3x3 affine matrix for one transform about the image center."""
    cx, cy = width / 2.0, height / 2.0
    to_origin = np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1]], dtype=float)
    back = np.array([[1, 0, cx], [0, 1, cy], [0, 0, 1]], dtype=float)
    if kind == "flip":
        core = np.array([[-1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
        if magnitude == 0:
            core = np.eye(3)
    elif kind == "scale":
        # magnitude is the factor minus one, so magnitude 0 is the identity
        f = 1.0 + magnitude
        if f <= 0:
            raise MagnitudeRangeError(f"scale factor must stay positive, got {f}")
        core = np.array([[f, 0, 0], [0, f, 0], [0, 0, 1]], dtype=float)
    elif kind == "shear":
        t = math.tan(math.radians(magnitude))
        core = np.array([[1, t, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    elif kind == "rotate":
        a = math.radians(magnitude)
        c, s = math.cos(a), math.sin(a)
        core = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)
    elif kind == "translate":
        return np.array([[1, 0, magnitude], [0, 1, 0], [0, 0, 1]], dtype=float)
    else:
        raise ValueError(f"unknown transform kind {kind!r}")
    return back @ core @ to_origin


def map_box(box: BBox, matrix: np.ndarray, width: int, height: int) -> BBox | None:
    """Map a box corner-wise, clip, and drop it if too little survives.

    Returns None when the clipped box keeps less than 25% of the
    original area.
    """
    corners = np.array(
        [
            [box.x, box.y, 1],
            [box.x2, box.y, 1],
            [box.x, box.y2, 1],
            [box.x2, box.y2, 1],
        ],
        dtype=float,
    )
    mapped = corners @ matrix.T
    xs, ys = mapped[:, 0], mapped[:, 1]
    x0 = math.floor(xs.min() + _EPS)
    x1 = math.ceil(xs.max() - _EPS)
    y0 = math.floor(ys.min() + _EPS)
    y1 = math.ceil(ys.max() - _EPS)
    cx0, cy0 = max(0, x0), max(0, y0)
    cx1, cy1 = min(width, x1), min(height, y1)
    if cx1 - cx0 <= 0 or cy1 - cy0 <= 0:
        return None
    if (cx1 - cx0) * (cy1 - cy0) < 0.25 * box.area:
        return None
    return BBox(cx0, cy0, cx1 - cx0, cy1 - cy0)


def _resample(pixels: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Inverse-map nearest-neighbor warp; anything off-frame becomes 0."""
    h, w = pixels.shape
    inv = np.linalg.inv(matrix)
    cols, rows = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    xs = cols + 0.5
    ys = rows + 0.5
    sx = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    sy = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    ci = np.floor(sx).astype(np.int64)
    ri = np.floor(sy).astype(np.int64)
    valid = (ci >= 0) & (ci < w) & (ri >= 0) & (ri < h)
    out = np.zeros_like(pixels)
    out[valid] = pixels[ri[valid], ci[valid]]
    return out


def apply_transform(
    img: LabeledImage,
    kind: str,
    magnitude: float,
    rng_seed: int = 0,
    max_magnitude: float | None = None,
) -> LabeledImage:
    """Apply one transform to pixels and boxes.

    The rng_seed parameter is accepted for signature stability; every
    transform here is deterministic once the magnitude is fixed.
    """
    del rng_seed
    if kind not in TRANSFORM_KINDS:
        raise ValueError(f"unknown transform kind {kind!r}")
    if max_magnitude is not None and abs(magnitude) > max_magnitude + _EPS:
        raise MagnitudeRangeError(
            f"{kind} magnitude {magnitude} exceeds declared range {max_magnitude}"
        )
    if kind == "flip" and magnitude not in (0, 1):
        raise MagnitudeRangeError(f"flip magnitude must be 0 or 1, got {magnitude}")
    if magnitude == 0:
        return LabeledImage(img.pixels.copy(), img.boxes)
    m = transform_matrix(kind, magnitude, img.width, img.height)
    pixels = _resample(img.pixels, m)
    boxes = []
    for b in img.boxes:
        mapped = map_box(b, m, img.width, img.height)
        if mapped is not None:
            boxes.append(mapped)
    return LabeledImage(pixels, tuple(boxes))


def _draw_magnitude(plan: AugPlan, kind: str, rng: np.random.Generator) -> float:
    if kind == "flip":
        return 1.0
    if kind == "scale":
        idx = int(rng.integers(len(plan.scale_choices)))
        return plan.scale_choices[idx] - 1.0
    if kind == "shear":
        return float(rng.uniform(-plan.shear_max_deg, plan.shear_max_deg))
    if kind == "rotate":
        return float(rng.uniform(-plan.rotate_max_deg, plan.rotate_max_deg))
    return float(rng.uniform(-plan.translate_max_px, plan.translate_max_px))


def build_descriptor(plan: AugPlan, n_images: int, rng_seed: int) -> AugSetDescriptor:
    """Draw per-image assignments: each available transform applies
    independently with the plan's probability, uniform magnitude in range."""
    if n_images <= 0:
        raise ValueError(f"n_images must be positive, got {n_images}")
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    assignments = []
    for _ in range(n_images):
        per_image: list[Assignment] = []
        for kind in TRANSFORM_KINDS:
            if not plan.kind_available(kind):
                continue
            if rng.random() < plan.probability:
                per_image.append((kind, _draw_magnitude(plan, kind, rng)))
        assignments.append(tuple(per_image))
    return AugSetDescriptor(plan, n_images, rng_seed, tuple(assignments))


def materialize(descriptor: AugSetDescriptor, images: Sequence[LabeledImage]) -> list[LabeledImage]:
    """Apply a descriptor's assignments to concrete images, in order."""
    if len(images) != descriptor.n_images:
        raise ValueError(
            f"descriptor covers {descriptor.n_images} images, got {len(images)}"
        )
    out = []
    for img, per_image in zip(images, descriptor.assignments):
        for kind, magnitude in per_image:
            img = apply_transform(img, kind, magnitude)
        out.append(img)
    return out


def _single_kind_plan(kind: str, magnitude_max: float) -> AugPlan:
    """A plan that applies exactly one transform kind, always."""
    kwargs = dict(
        shear_max_deg=0.0,
        rotate_max_deg=0.0,
        translate_max_px=0.0,
        scale_choices=(),
        flip=False,
        probability=1.0,
    )
    if kind == "shear":
        kwargs["shear_max_deg"] = magnitude_max
    elif kind == "rotate":
        kwargs["rotate_max_deg"] = magnitude_max
    elif kind == "translate":
        kwargs["translate_max_px"] = magnitude_max
    else:
        raise ValueError(f"range search does not apply to kind {kind!r}")
    return AugPlan(**kwargs)


def _call_oracle(oracle: ScoreOracle, descriptor: AugSetDescriptor,
                 kind: str, candidate) -> float:
    try:
        score = float(oracle(descriptor))
    except OracleError:
        raise
    except Exception as exc:
        raise OracleError(kind, candidate, str(exc)) from exc
    if not 0.0 <= score <= 1.0:
        raise OracleError(kind, candidate, f"score {score} outside [0, 1]")
    return score


def evaluate_candidates(
    kind: str,
    candidates: Sequence[float],
    oracle: ScoreOracle,
    n_images: int = DEFAULT_SET_SIZE,
    rng_seed: int = 0,
) -> dict[float, float]:
    """Score table for symmetric ranges [-c, c], one oracle call each."""
    if not candidates:
        raise ValueError("candidates must be nonempty")
    if list(candidates) != sorted(candidates):
        raise ValueError("candidates must be ascending")
    scores = {}
    for c in candidates:
        descriptor = build_descriptor(_single_kind_plan(kind, c), n_images, rng_seed)
        scores[c] = _call_oracle(oracle, descriptor, kind, c)
    return scores


def pick_widest_within_delta(scores: Mapping[float, float], delta: float) -> float:
    """Largest candidate whose score stays within delta of the best."""
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    best = max(scores.values())
    eligible = [c for c, s in scores.items() if s >= best - delta - _EPS]
    return max(eligible)


def range_search(
    kind: str,
    candidates: Sequence[float] = RANGE_CANDIDATES_DEG,
    oracle: ScoreOracle | None = None,
    delta: float = DEFAULT_DELTA,
    n_images: int = DEFAULT_SET_SIZE,
    rng_seed: int = 0,
) -> float:
    """Widest angle (degrees) still scoring within delta of the best."""
    if kind not in ("shear", "rotate"):
        raise ValueError(f"range_search kind must be shear or rotate, got {kind!r}")
    if oracle is None:
        raise ValueError("an oracle is required")
    scores = evaluate_candidates(kind, candidates, oracle, n_images, rng_seed)
    return pick_widest_within_delta(scores, delta)


def translate_search(
    candidates: Sequence[float] = TRANSLATE_CANDIDATES_PX,
    oracle: ScoreOracle | None = None,
    delta: float = DEFAULT_DELTA,
    n_images: int = DEFAULT_SET_SIZE,
    rng_seed: int = 0,
) -> float:
    """Widest horizontal shift (pixels) within delta of the best score."""
    if oracle is None:
        raise ValueError("an oracle is required")
    scores = evaluate_candidates("translate", candidates, oracle, n_images, rng_seed)
    return pick_widest_within_delta(scores, delta)


def probability_sweep(
    plan: AugPlan,
    oracle: ScoreOracle,
    rng_seed: int = 0,
    n_images: int = DEFAULT_SET_SIZE,
    grid: Sequence[float] = PROBABILITY_GRID,
) -> tuple[float, dict[float, float]]:
    """Try each application probability; return the argmax and the table.

    Ties resolve toward the smaller probability.  The same seed is used
    for every grid point, so descriptors differ only through p.
    """
    scores: dict[float, float] = {}
    for p in grid:
        descriptor = build_descriptor(replace(plan, probability=p), n_images, rng_seed)
        scores[p] = _call_oracle(oracle, descriptor, "probability", p)
    best_p = None
    best_score = -1.0
    for p in sorted(scores):
        if scores[p] > best_score + _EPS:
            best_p, best_score = p, scores[p]
    return best_p, scores


class SubprocessOracle:
    """Score oracle that shells out to an external command.

    The descriptor is written to a temp file as JSON, the command is
    invoked with that path appended, and stdout must contain a single
    decimal score.
    """

    def __init__(self, command: Sequence[str], timeout_s: float | None = None):
        if not command:
            raise ValueError("oracle command must be nonempty")
        self.command = list(command)
        self.timeout_s = timeout_s

    def __call__(self, descriptor: AugSetDescriptor) -> float:
        fd, path = tempfile.mkstemp(suffix=".json", prefix="augset_")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(descriptor.to_json())
            proc = subprocess.run(
                self.command + [path],
                capture_output=True,
                text=True,
                timeout=self.timeout_s,
            )
            if proc.returncode != 0:
                raise RuntimeError(
                    f"command exited {proc.returncode}: {proc.stderr.strip()}"
                )
            try:
                return float(proc.stdout.strip())
            except ValueError:
                raise RuntimeError(
                    f"could not parse score from output {proc.stdout!r}"
                ) from None
        finally:
            os.unlink(path)


def format_search_table(kind: str, scores: Mapping[float, float], chosen: float) -> str:
    """Plain-text candidate/score table with the optimum marked."""
    unit = "px" if kind == "translate" else ("" if kind == "probability" else "deg")
    lines = [f"{kind} search" + (f" ({unit})" if unit else "")]
    for c in sorted(scores):
        mark = "  <- chosen" if c == chosen else ""
        cand = f"{c:g}"
        lines.append(f"  {cand:>8}  {scores[c]:.4f}{mark}")
    return "\n".join(lines)


def write_search_records(
    results: Sequence[tuple[str, Mapping[float, float], float]],
    path: str | os.PathLike,
) -> None:
    """Machine-readable search log: one JSON record per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for kind, scores, chosen in results:
            rec = {
                "kind": kind,
                "scores": {f"{c:g}": s for c, s in sorted(scores.items())},
                "chosen": chosen,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
