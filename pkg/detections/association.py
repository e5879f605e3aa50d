"""
Post-hoc pairing of independently detected base and extra boxes.

This is the baseline the grouped detector is compared against: each class is
detected on its own and the boxes are paired afterwards by Hungarian
assignment on IoU.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Hashable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .boxes import BBox, boxes_to_array, pairwise_iou
from .groups import BASE_ROLE, FlatDetection, GroupDetection

logger = logging.getLogger(__name__)


@dataclass
class AssignmentResult:
    pairs: list[tuple[int, int]] = field(default_factory=list)
    unmatched_base: list[int] = field(default_factory=list)
    unmatched_extra: list[int] = field(default_factory=list)
    total_cost: float = 0.0


def hungarian_assign(cost, forbid=None) -> AssignmentResult:
    """
    Minimum-cost one-to-one assignment that never selects a forbidden entry.

    Forbidden entries are replaced by a cost large enough that using one is
    always worse than any choice of allowed entries, so the solver first
    maximizes the number of allowed pairs and then minimizes their cost.
    Pairs that still land on a forbidden entry are dropped.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError(f"cost must be a matrix, got shape {cost.shape}")
    rows, cols = cost.shape
    if rows == 0 or cols == 0:
        return AssignmentResult(unmatched_base=list(range(rows)), unmatched_extra=list(range(cols)))
    forbid = np.zeros(cost.shape, dtype=bool) if forbid is None else np.asarray(forbid, dtype=bool)
    if forbid.shape != cost.shape:
        raise ValueError(f"forbid shape {forbid.shape} does not match cost shape {cost.shape}")

    allowed = ~forbid
    padded = cost.copy()
    if allowed.any():
        low, high = cost[allowed].min(), cost[allowed].max()
        span = high - low
        padded[forbid] = high + (min(rows, cols) + 1) * (span + 1.0)
    else:
        padded[:] = 0.0

    row_ind, col_ind = linear_sum_assignment(padded)
    result = AssignmentResult()
    for r, c in zip(row_ind.tolist(), col_ind.tolist()):
        if allowed[r, c]:
            result.pairs.append((r, c))
            result.total_cost += float(cost[r, c])
    paired_rows = {r for r, _ in result.pairs}
    paired_cols = {c for _, c in result.pairs}
    result.unmatched_base = [r for r in range(rows) if r not in paired_rows]
    result.unmatched_extra = [c for c in range(cols) if c not in paired_cols]
    return result


def pair_by_iou(
    base_dets: Sequence[tuple[float, BBox]],
    extra_dets: Sequence[tuple[float, BBox]],
    iou_floor: float = 0.0,
    image_id: Hashable = None,
    class_id: int = 0,
) -> list[GroupDetection]:
    """
    Pair base and extra detections of one image and class into groups.

    The cost is 1 - IoU; pairs with IoU at or below `iou_floor` are
    forbidden. A group takes its base detection's score. Unpaired base
    detections become groups with a missing extra; unpaired extras are
    dropped.
    """
    if not 0.0 <= iou_floor < 1.0:
        raise ValueError(f"iou_floor must lie in [0, 1), got {iou_floor!r}")
    overlaps = pairwise_iou(
        boxes_to_array([box for _, box in base_dets]),
        boxes_to_array([box for _, box in extra_dets]),
    )
    result = hungarian_assign(1.0 - overlaps, overlaps <= iou_floor)
    partner: dict[int, int] = dict(result.pairs)
    groups = []
    for index, (score, box) in enumerate(base_dets):
        extra = partner.get(index)
        groups.append(GroupDetection(
            image_id=image_id,
            class_id=class_id,
            score=score,
            base=box,
            extras=(extra_dets[extra][1] if extra is not None else None,),
        ))
    logger.debug(
        f"image {image_id!r}: paired {len(result.pairs)} of {len(base_dets)} base and {len(extra_dets)} extra boxes"
    )
    return groups


def associate_groups(
    detections: Sequence[FlatDetection],
    arity: int,
    iou_floor: float = 0.0,
) -> list[GroupDetection]:
    """
    Build groups from flat per-class detections, pairing each extra slot with
    the base boxes independently per image and class.
    """
    buckets: dict[tuple, dict[int, list[FlatDetection]]] = {}
    for det in detections:
        if det.role > arity:
            raise ValueError(f"detection role {det.role} exceeds extras arity {arity}")
        buckets.setdefault((det.image_id, det.class_id), {}).setdefault(det.role, []).append(det)

    groups: list[GroupDetection] = []
    for (image_id, class_id), by_role in buckets.items():
        bases = [(d.score, d.box) for d in by_role.get(BASE_ROLE, [])]
        if not bases:
            continue
        slots: list[list[Optional[BBox]]] = []
        for role in range(1, arity + 1):
            extras = [(d.score, d.box) for d in by_role.get(role, [])]
            paired = pair_by_iou(bases, extras, iou_floor, image_id=image_id, class_id=class_id)
            slots.append([g.extras[0] for g in paired])
        for index, (score, box) in enumerate(bases):
            groups.append(GroupDetection(
                image_id=image_id,
                class_id=class_id,
                score=score,
                base=box,
                extras=tuple(slot[index] for slot in slots),
            ))
    return groups
