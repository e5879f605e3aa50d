"""
Axis-aligned box arithmetic.

Boxes use the COCO convention: (x, y) is the top-left corner, (w, h) the size,
all in real-valued pixels. Boxes are closed regions, so two boxes that only
share an edge intersect with zero area.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import DegenerateBoxError


@dataclass(frozen=True, slots=True)
class BBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DegenerateBoxError(f"box {name} must be finite, got {value!r}")
        if self.w < 0 or self.h < 0:
            raise DegenerateBoxError(f"box size must be non-negative, got w={self.w!r} h={self.h!r}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def scale(self) -> float:
        """Square root of the area, the size used for scale matching."""
        return math.sqrt(self.area)

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    def covers(self, other: "BBox") -> bool:
        return (
            self.x <= other.x
            and self.y <= other.y
            and self.x2 >= other.x2
            and self.y2 >= other.y2
        )

    def clip(self, width: float, height: float) -> "BBox":
        x1 = min(max(self.x, 0.0), width)
        y1 = min(max(self.y, 0.0), height)
        x2 = min(max(self.x2, 0.0), width)
        y2 = min(max(self.y2, 0.0), height)
        return BBox(x1, y1, x2 - x1, y2 - y1)

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "BBox":
        return cls(x1, y1, x2 - x1, y2 - y1)


@dataclass(frozen=True, slots=True)
class Offset:
    """Additive change of a base box; any component may be negative."""

    dx: float
    dy: float
    dw: float
    dh: float

    def as_list(self) -> list[float]:
        return [self.dx, self.dy, self.dw, self.dh]


def intersection_area(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: BBox, b: BBox) -> float:
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    # Rounding in the corner arithmetic can push a self-overlap just above 1.
    return min(inter / union, 1.0)


def enclosing_box(a: BBox, b: BBox) -> BBox:
    return BBox.from_corners(min(a.x, b.x), min(a.y, b.y), max(a.x2, b.x2), max(a.y2, b.y2))


def diou_terms(pred: BBox, gt: BBox) -> tuple[float, float]:
    """
    Return (IoU, normalized squared center distance) for DIoU.

    The penalty is ||c - c_gt||^2 / d^2 with d the diagonal of the smallest
    enclosing box; it is 0 when the enclosing box has no diagonal.
    """
    pcx, pcy = pred.center
    gcx, gcy = gt.center
    rho2 = (pcx - gcx) ** 2 + (pcy - gcy) ** 2
    enc = enclosing_box(pred, gt)
    d2 = enc.w ** 2 + enc.h ** 2
    penalty = rho2 / d2 if d2 > 0 else 0.0
    return iou(pred, gt), penalty


def apply_offsets(base: BBox, offsets: Sequence[Offset]) -> list[BBox]:
    boxes = []
    for index, off in enumerate(offsets):
        w = base.w + off.dw
        h = base.h + off.dh
        if w < 0 or h < 0:
            raise DegenerateBoxError(
                f"offset {index} yields a degenerate box (w={w!r}, h={h!r})", index=index
            )
        boxes.append(BBox(base.x + off.dx, base.y + off.dy, w, h))
    return boxes


def offsets_between(base: BBox, boxes: Sequence[BBox]) -> list[Offset]:
    """Inverse of apply_offsets."""
    return [Offset(b.x - base.x, b.y - base.y, b.w - base.w, b.h - base.h) for b in boxes]


def boxes_to_array(boxes: Sequence[BBox]) -> np.ndarray:
    """Stack boxes as an (n, 4) float64 array of x, y, w, h."""
    if not boxes:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([[b.x, b.y, b.w, b.h] for b in boxes], dtype=np.float64)


def pairwise_iou(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """
    IoU matrix between two xywh arrays from boxes_to_array.

    Performs the same float operations in the same order as iou(), so the
    two agree bit for bit.
    """
    if len(first) == 0 or len(second) == 0:
        return np.zeros((len(first), len(second)), dtype=np.float64)
    fx2 = first[:, 0] + first[:, 2]
    fy2 = first[:, 1] + first[:, 3]
    sx2 = second[:, 0] + second[:, 2]
    sy2 = second[:, 1] + second[:, 3]
    iw = np.minimum(fx2[:, None], sx2[None, :]) - np.maximum(first[:, None, 0], second[None, :, 0])
    ih = np.minimum(fy2[:, None], sy2[None, :]) - np.maximum(first[:, None, 1], second[None, :, 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    area_a = first[:, 2] * first[:, 3]
    area_b = second[:, 2] * second[:, 3]
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(union > 0, inter / union, 0.0)
    return np.minimum(out, 1.0)
