"""Axis-aligned bounding-box arithmetic and pairwise spatial encodings.

Everything in this module is a pure function of its inputs: boxes and
image dimensions go in, ratios come out. All encodings are built from
ratios of like dimensions, so they are invariant under uniform scaling
of every coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SPATIAL_DIM = 7
SF_DIM = 10


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned rectangle in pixel coordinates, corners (x_min, y_min)
    and (x_max, y_max).

    Zero-area boxes are legal; negative extents are rejected. Coordinates
    may lie outside the image (detectors emit such boxes), in which case
    normalized encodings may leave [0, 1].
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"non-finite box coordinate {name}={v!r}")
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise ValueError(
                f"negative box extent: ({self.x_min}, {self.y_min}, "
                f"{self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class ImageDims:
    """Strictly positive image width and height in pixels."""

    width: float
    height: float

    def __post_init__(self):
        if not (math.isfinite(self.width) and math.isfinite(self.height)):
            raise ValueError(f"non-finite image dims {self.width!r}x{self.height!r}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image dims must be positive, got {self.width}x{self.height}")

    @property
    def area(self) -> float:
        return self.width * self.height


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes.

    Returns 0.0 when the union has zero area (two coincident zero-area
    boxes), so degenerate inputs never raise.
    """
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def union_box(a: BoundingBox, b: BoundingBox) -> BoundingBox:
    """Smallest axis-aligned box containing both inputs."""
    return BoundingBox(
        min(a.x_min, b.x_min),
        min(a.y_min, b.y_min),
        max(a.x_max, b.x_max),
        max(a.y_max, b.y_max),
    )


def contains(outer: BoundingBox, inner: BoundingBox) -> bool:
    """Non-strict containment: a box contains itself."""
    return (
        outer.x_min <= inner.x_min
        and outer.y_min <= inner.y_min
        and outer.x_max >= inner.x_max
        and outer.y_max >= inner.y_max
    )


@dataclass(frozen=True)
class SpatialVector:
    """Seven-component geometric encoding of a subject-object box pair.

    Components, in array order:
      iou         overlap ratio of the two boxes
      dx, dy      object center minus subject center, normalized by
                  image width / height
      s_subj      subject area / image area
      s_obj       object area / image area
      cflag_subj  1.0 if the subject box contains the object box
      cflag_obj   1.0 if the object box contains the subject box
    """

    iou: float
    dx: float
    dy: float
    s_subj: float
    s_obj: float
    cflag_subj: float
    cflag_obj: float

    def to_array(self) -> np.ndarray:
        return np.array(
            [self.iou, self.dx, self.dy, self.s_subj, self.s_obj,
             self.cflag_subj, self.cflag_obj],
            dtype=np.float64,
        )


def spatial_vector(subj: BoundingBox, obj: BoundingBox, img: ImageDims) -> SpatialVector:
    """Encode the geometry of a subject-object pair relative to the image.

    Every component is a ratio of like dimensions, so the encoding is
    unchanged when boxes and image are scaled uniformly. Boxes extending
    beyond the image are accepted without clamping; normalized components
    may then leave their nominal ranges.

    Args:
        subj: Subject box.
        obj: Object box.
        img: Image dimensions used for normalization.

    Returns:
        SpatialVector for the ordered pair (subject, object).
    """
    scx, scy = subj.center
    ocx, ocy = obj.center
    return SpatialVector(
        iou=iou(subj, obj),
        dx=(ocx - scx) / img.width,
        dy=(ocy - scy) / img.height,
        s_subj=subj.area / img.area,
        s_obj=obj.area / img.area,
        cflag_subj=1.0 if contains(subj, obj) else 0.0,
        cflag_obj=1.0 if contains(obj, subj) else 0.0,
    )


def sf_vector(subj: BoundingBox, obj: BoundingBox, img: ImageDims) -> np.ndarray:
    """Baseline spatial encoding: per-box normalized location and size only.

    Layout is subject first, then object, with five components per box:
    (x_min/W, y_min/H, x_max/W, y_max/H, area/(W*H)). Unlike
    :func:`spatial_vector` this carries no relative information between
    the two boxes.
    """
    out = np.empty(SF_DIM, dtype=np.float64)
    for i, box in enumerate((subj, obj)):
        out[5 * i: 5 * i + 5] = (
            box.x_min / img.width,
            box.y_min / img.height,
            box.x_max / img.width,
            box.y_max / img.height,
            box.area / img.area,
        )
    return out
