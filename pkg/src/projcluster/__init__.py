"""Long-term hand detection from per-frame bounding-box streams.

The pipeline turns noisy one-detection-per-second box streams into stable
per-window hand regions: per-frame non-maximum suppression, rasterization
into binary grids, accumulation into a projection image, intermeans
(ISODATA) thresholding, connected-component extraction, and small-region
removal.  Companion modules provide the augmentation-range search, the
evaluation metrics, and a deterministic synthetic corpus.
"""

from projcluster.boxes import BBox, Detection, FrameGeometry, iou, nms
from projcluster.regions import (
    PipelineConfig,
    Region,
    RegionSet,
    detect_hands,
)
from projcluster.streams import DetectionStream, Window, load_stream, windows

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "Detection",
    "DetectionStream",
    "FrameGeometry",
    "PipelineConfig",
    "Region",
    "RegionSet",
    "Window",
    "detect_hands",
    "iou",
    "load_stream",
    "nms",
    "windows",
    "__version__",
]
