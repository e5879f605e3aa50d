"""
Dataset analyses for grouped labels: how much a group's members overlap, and
how many proposals each member would match on a multi-stride head under
center sampling and scale matching.
"""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from detections.boxes import BBox, iou
from detections.exceptions import EmptyDatasetError
from detections.groups import BASE_ROLE, GroupLabel

logger = logging.getLogger(__name__)

REGULAR = "regular"
BASE_DRIVEN = "base_driven"
ASSIGNMENT_MODES = (REGULAR, BASE_DRIVEN)


@dataclass(frozen=True)
class StrideSpec:
    strides: tuple[int, ...] = (8, 16, 32)
    size_ranges: tuple[tuple[float, float], ...] = ((0.0, 64.0), (64.0, 128.0), (128.0, math.inf))
    center_radius: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        object.__setattr__(self, "size_ranges", tuple((float(lo), float(hi)) for lo, hi in self.size_ranges))
        if not self.strides:
            raise ValueError("at least one stride is required")
        if any(s <= 0 for s in self.strides) or any(a >= b for a, b in zip(self.strides, self.strides[1:])):
            raise ValueError(f"strides must be positive and strictly increasing, got {list(self.strides)}")
        if len(self.size_ranges) != len(self.strides):
            raise ValueError(f"{len(self.strides)} strides need as many size ranges, got {len(self.size_ranges)}")
        if self.size_ranges[0][0] != 0.0 or self.size_ranges[-1][1] != math.inf:
            raise ValueError("size ranges must start at 0 and end at infinity")
        for (lo, hi), (next_lo, _) in zip(self.size_ranges, self.size_ranges[1:]):
            if hi != next_lo:
                raise ValueError(f"size ranges must be contiguous, [{lo}, {hi}) is followed by one starting at {next_lo}")
        if any(lo >= hi for lo, hi in self.size_ranges):
            raise ValueError("every size range must be non-empty")
        if self.center_radius <= 0:
            raise ValueError(f"center_radius must be positive, got {self.center_radius!r}")

    @classmethod
    def from_strides(cls, strides: Sequence[int], center_radius: float = 1.5) -> "StrideSpec":
        """Size ranges doubling from 8x the smallest stride, as the defaults do."""
        strides = tuple(strides)
        edges = [0.0] + [8.0 * s for s in strides[:-1]] + [math.inf]
        return cls(strides, tuple(zip(edges[:-1], edges[1:])), center_radius)

    def level(self, box: BBox) -> int:
        size = box.scale
        for index, (lo, hi) in enumerate(self.size_ranges):
            if lo <= size < hi:
                return index
        return len(self.strides) - 1

    def stride_for(self, box: BBox) -> int:
        return self.strides[self.level(box)]


def count_proposals(box: BBox, stride: int, radius: float, image_size: tuple[float, float]) -> int:
    """
    Grid cells of `stride` whose centers lie inside the box and within
    `radius * stride` of its center on both axes.
    """
    width, height = image_size
    cx, cy = box.center
    reach = radius * stride

    def axis_count(center, low_edge, high_edge, extent):
        lo = max(center - reach, low_edge)
        hi = min(center + reach, high_edge)
        cells = np.arange(max(int(math.floor(lo / stride)) - 1, 0), int(math.ceil(hi / stride)) + 1)
        centers = (cells + 0.5) * stride
        ok = (centers > center - reach) & (centers < center + reach)
        ok &= (centers >= low_edge) & (centers <= high_edge) & (centers < extent)
        return int(np.count_nonzero(ok))

    return axis_count(cx, box.x, box.x2, width) * axis_count(cy, box.y, box.y2, height)


@dataclass
class AssignmentReport:
    mode: str
    num_images: int
    per_stride_counts: dict[tuple[int, int], float] = field(default_factory=dict)
    box_counts: dict[tuple[int, int], int] = field(default_factory=dict)
    same_stride_fraction: Optional[float] = None
    groups_with_extras: int = 0

    def rows(self, role_names: Sequence[str]) -> list[dict]:
        rows = []
        for (stride, role), mean in sorted(self.per_stride_counts.items()):
            rows.append({
                "stride": stride,
                "role": role_names[role] if role < len(role_names) else str(role),
                "boxes": self.box_counts.get((stride, role), 0),
                "proposals_per_image": mean,
            })
        return rows


def _clip(box: BBox, image_size: tuple[float, float]) -> BBox:
    width, height = image_size
    if box.x >= 0 and box.y >= 0 and box.x2 <= width and box.y2 <= height:
        return box
    return box.clip(width, height)


def assign_to_strides(
    gts: Sequence[GroupLabel],
    image_size: tuple[float, float],
    spec: StrideSpec = StrideSpec(),
    mode: str = REGULAR,
    image_sizes: Optional[Mapping] = None,
) -> AssignmentReport:
    """
    Tabulate proposal matches per (stride, role) per image.

    In the regular mode every member of a group is an independent object
    assigned by its own size. In the base-driven mode the whole group rides
    on the base box's stride and only the base box matches proposals.
    `image_sizes` maps image ids to (width, height), falling back to
    `image_size`.
    """
    if mode not in ASSIGNMENT_MODES:
        raise ValueError(f"unknown assignment mode {mode!r}, expected one of {ASSIGNMENT_MODES}")
    image_sizes = {str(k): tuple(v) for k, v in (image_sizes or {}).items()}
    kept = [g for g in gts if not g.ignore]
    images = {str(g.image_id) for g in kept} | set(image_sizes)
    totals: dict[tuple[int, int], int] = defaultdict(int)
    boxes: dict[tuple[int, int], int] = defaultdict(int)
    same = 0
    with_extras = 0
    clipped = 0

    for group in kept:
        size = image_sizes.get(str(group.image_id), image_size)
        members = {role: _clip(group.member(role), size) for role in group.annotated_roles}
        clipped += sum(1 for role, box in members.items() if box != group.member(role))
        levels = {role: spec.level(box) for role, box in members.items()}
        if len(members) > 1:
            with_extras += 1
            if mode == BASE_DRIVEN or all(level == levels[BASE_ROLE] for level in levels.values()):
                same += 1
        for role, box in members.items():
            level = levels[BASE_ROLE] if mode == BASE_DRIVEN else levels[role]
            stride = spec.strides[level]
            boxes[(stride, role)] += 1
            if mode == BASE_DRIVEN and role != BASE_ROLE:
                totals.setdefault((stride, role), 0)
                continue
            totals[(stride, role)] += count_proposals(box, stride, spec.center_radius, size)

    if clipped:
        logger.warning(f"clipped {clipped} boxes to their image bounds")
    num_images = max(len(images), 1)
    report = AssignmentReport(
        mode=mode,
        num_images=len(images),
        per_stride_counts={key: total / num_images for key, total in totals.items()},
        box_counts=dict(boxes),
        same_stride_fraction=same / with_extras if with_extras else None,
        groups_with_extras=with_extras,
    )
    logger.info(f"{mode} assignment over {len(kept)} groups: same-stride fraction {report.same_stride_fraction}")
    return report


@dataclass
class OverlapHistogram:
    edges: list[float]
    density: list[float]
    mean: float
    pairs: int

    def rows(self) -> list[dict]:
        return [
            {"bin_lo": lo, "bin_hi": hi, "density": d}
            for lo, hi, d in zip(self.edges[:-1], self.edges[1:], self.density)
        ]


def pair_overlaps(gts: Sequence[GroupLabel]) -> list[float]:
    """IoU between the base and each annotated extra, over every group."""
    return [
        iou(g.base, extra)
        for g in gts
        if not g.ignore
        for extra in g.extras
        if extra is not None
    ]


def overlap_histogram(gts: Sequence[GroupLabel], bins: int = 20) -> OverlapHistogram:
    if bins < 1:
        raise ValueError(f"bins must be positive, got {bins!r}")
    values = pair_overlaps(gts)
    if not values:
        raise EmptyDatasetError("no group has an annotated extra box to compare with its base")
    density, edges = np.histogram(np.asarray(values), bins=bins, range=(0.0, 1.0), density=True)
    return OverlapHistogram(edges.tolist(), density.tolist(), float(np.mean(values)), len(values))
