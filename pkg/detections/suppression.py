"""
Non-maximum suppression for single boxes and for grouped detections.

Group modes differ only in how the element-wise IoU set between two groups
{IoU(base, base), IoU(extra_i, extra_i), ...} is reduced before comparing it
with the threshold:

    set        min over the set (suppress only when every member overlaps)
    joint      max over the set (suppress when any member overlaps)
    base_only  the base IoU alone

All modes are greedy, highest score first, with equal scores ordered by
input index, and only compare groups of the same class.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .boxes import BBox, boxes_to_array, iou, pairwise_iou
from .groups import FlatDetection, GroupDetection, common_arity

logger = logging.getLogger(__name__)


class SuppressionMode(str, enum.Enum):
    PER_CLASS = "per_class"
    BASE_ONLY = "base_only"
    JOINT = "joint"
    SET = "set"

    @classmethod
    def parse(cls, value: "str | SuppressionMode") -> "SuppressionMode":
        if isinstance(value, cls):
            return value
        aliases = {"per-class": cls.PER_CLASS, "base": cls.BASE_ONLY, "base-only": cls.BASE_ONLY}
        try:
            return aliases.get(value) or cls(value)
        except ValueError:
            raise ValueError(f"unknown suppression mode {value!r}") from None


GROUP_MODES = (SuppressionMode.BASE_ONLY, SuppressionMode.JOINT, SuppressionMode.SET)


@dataclass(frozen=True)
class SuppressionParams:
    iou_threshold: float = 0.5
    mode: SuppressionMode = SuppressionMode.SET

    def __post_init__(self):
        object.__setattr__(self, "mode", SuppressionMode.parse(self.mode))
        if not 0.0 < self.iou_threshold < 1.0:
            raise ValueError(f"iou_threshold must lie strictly inside (0, 1), got {self.iou_threshold!r}")


def greedy_order(scores: Sequence[float]) -> list[int]:
    """Indices by descending score; equal scores keep input order."""
    return sorted(range(len(scores)), key=lambda i: -scores[i])


def _greedy_keep(scores, classes, overlaps: np.ndarray, threshold: float) -> list[int]:
    order = greedy_order(scores)
    classes = np.asarray(classes)
    alive = np.ones(len(order), dtype=bool)
    kept = []
    for rank, index in enumerate(order):
        if not alive[index]:
            continue
        kept.append(index)
        later = np.array(order[rank + 1:], dtype=int)
        if later.size == 0:
            break
        hit = (classes[later] == classes[index]) & (overlaps[index, later] > threshold)
        alive[later[hit]] = False
    return kept


def per_class_nms_indices(dets: Sequence[tuple[int, float, BBox]], iou_threshold: float) -> list[int]:
    if not dets:
        return []
    classes = [d[0] for d in dets]
    scores = [d[1] for d in dets]
    boxes = boxes_to_array([d[2] for d in dets])
    return _greedy_keep(scores, classes, pairwise_iou(boxes, boxes), iou_threshold)


def per_class_nms(dets: Sequence[tuple[int, float, BBox]], iou_threshold: float) -> list[tuple[int, float, BBox]]:
    """Classical greedy NMS run independently per class; kept items by descending score."""
    return [dets[i] for i in per_class_nms_indices(dets, iou_threshold)]


def flat_nms_indices(dets: Sequence[FlatDetection], iou_threshold: float) -> list[int]:
    """Per-class NMS over flat detections, one class per (image, class_id, role)."""
    buckets: dict = {}
    keys = [buckets.setdefault((str(d.image_id), d.class_id, d.role), len(buckets)) for d in dets]
    return per_class_nms_indices([(k, d.score, d.box) for k, d in zip(keys, dets)], iou_threshold)


def member_iou_stack(groups: Sequence[GroupDetection]) -> np.ndarray:
    """
    IoU matrices for every member slot, shaped (1 + N, n, n).

    Missing extras overlap nothing.
    """
    arity = common_arity(groups)
    n = len(groups)
    stack = np.zeros((arity + 1, n, n), dtype=np.float64)
    bases = boxes_to_array([g.base for g in groups])
    stack[0] = pairwise_iou(bases, bases)
    for slot in range(arity):
        present = [i for i, g in enumerate(groups) if g.extras[slot] is not None]
        if not present:
            continue
        boxes = boxes_to_array([groups[i].extras[slot] for i in present])
        idx = np.array(present)
        stack[slot + 1][np.ix_(idx, idx)] = pairwise_iou(boxes, boxes)
    return stack


def aggregate_overlap(stack: np.ndarray, mode: SuppressionMode) -> np.ndarray:
    if mode is SuppressionMode.SET:
        return stack.min(axis=0)
    if mode is SuppressionMode.JOINT:
        return stack.max(axis=0)
    if mode is SuppressionMode.BASE_ONLY:
        return stack[0]
    raise ValueError(f"{mode.value} is not a group suppression mode")


def group_suppress_indices(groups: Sequence[GroupDetection], params: SuppressionParams) -> list[int]:
    if params.mode is SuppressionMode.PER_CLASS:
        raise ValueError("per_class mode works on single boxes; use per_class_nms")
    if not groups:
        return []
    overlaps = aggregate_overlap(member_iou_stack(groups), params.mode)
    kept = _greedy_keep([g.score for g in groups], [g.class_id for g in groups], overlaps, params.iou_threshold)
    logger.debug(f"{params.mode.value} suppression kept {len(kept)} of {len(groups)} groups")
    return kept


def group_suppress(groups: Sequence[GroupDetection], params: SuppressionParams) -> list[GroupDetection]:
    """Greedy group suppression; kept groups in descending score order."""
    return [groups[i] for i in group_suppress_indices(groups, params)]


def suppress_by_image(groups: Sequence[GroupDetection], params: SuppressionParams) -> list[GroupDetection]:
    """Run group_suppress separately for each image, keeping image order of first appearance."""
    by_image: dict = {}
    for group in groups:
        by_image.setdefault(group.image_id, []).append(group)
    kept = []
    for image_groups in by_image.values():
        kept.extend(group_suppress(image_groups, params))
    return kept


def member_ious(first: GroupDetection, second: GroupDetection) -> list[float]:
    values = [iou(first.base, second.base)]
    for a, b in zip(first.extras, second.extras):
        values.append(iou(a, b) if a is not None and b is not None else 0.0)
    return values


def suppresses(kept: GroupDetection, candidate: GroupDetection, params: SuppressionParams) -> bool:
    """Pairwise suppression predicate behind group_suppress."""
    if kept.class_id != candidate.class_id:
        return False
    values = member_ious(kept, candidate)
    if params.mode is SuppressionMode.SET:
        overlap = min(values)
    elif params.mode is SuppressionMode.JOINT:
        overlap = max(values)
    else:
        overlap = values[0]
    return overlap > params.iou_threshold


def brute_force_suppress_indices(groups: Sequence[GroupDetection], params: SuppressionParams) -> list[int]:
    """
    Quadratic reference: walk the score order and keep a group unless some
    already kept group suppresses it. Uses scalar IoU throughout.
    """
    common_arity(groups)
    ranked = sorted(enumerate(groups), key=lambda pair: (-pair[1].score, pair[0]))
    kept: list[int] = []
    for index, group in ranked:
        if not any(suppresses(groups[k], group, params) for k in kept):
            kept.append(index)
    return kept
