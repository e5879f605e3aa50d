"""
Detection and group-matching metrics.

Per class: AP at one IoU threshold (all-point interpolation) and the
log-average miss rate over FPPI in [1e-2, 1e0]. Per group: the same two
metrics where detection groups are matched greedily to ground-truth
groups, and a match needs the base and every annotated extra above the IoU
threshold.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Optional, Sequence

import numpy as np

from detections.boxes import BBox, boxes_to_array, pairwise_iou
from detections.exceptions import MetricInvariantError, SchemaMismatchError
from detections.groups import BASE_ROLE, DatasetHeader, FlatDetection, GroupDetection, GroupLabel, common_arity
from detections.suppression import greedy_order

logger = logging.getLogger(__name__)

MATCH = "match"
FPPI_REFERENCE = np.logspace(-2.0, 0.0, 9)
MISS_RATE_FLOOR = 1e-10
INVARIANT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class MatchVerdict:
    det_index: int
    is_tp: bool
    matched_gt: Optional[Hashable] = None


@dataclass
class ClassMetrics:
    name: str
    num_gt: int
    num_dets: int
    ap: Optional[float]
    mr: Optional[float]
    pr_curve: list[tuple[float, float]] = field(default_factory=list)
    fppi_curve: list[tuple[float, float]] = field(default_factory=list)

    def as_dict(self, include_curves: bool = False) -> dict:
        data = {"name": self.name, "num_gt": self.num_gt, "num_dets": self.num_dets, "ap": self.ap, "mr": self.mr}
        if include_curves:
            data["pr_curve"] = [list(p) for p in self.pr_curve]
            data["fppi_curve"] = [list(p) for p in self.fppi_curve]
        return data


@dataclass
class EvalResult:
    per_class: dict[str, ClassMetrics]
    match: Optional[ClassMetrics]
    num_images: int
    iou_threshold: float

    @property
    def min_class_ap(self) -> Optional[float]:
        values = [m.ap for m in self.per_class.values() if m.ap is not None]
        return min(values) if values else None

    @property
    def upper_bound_ratio(self) -> Optional[float]:
        """AP_match as a fraction of its bound, the smallest per-class AP."""
        bound = self.min_class_ap
        if self.match is None or self.match.ap is None or not bound:
            return None
        return self.match.ap / bound

    def as_dict(self, include_curves: bool = False) -> dict:
        return {
            "iou_threshold": self.iou_threshold,
            "num_images": self.num_images,
            "per_class": {name: m.as_dict(include_curves) for name, m in self.per_class.items()},
            "match": self.match.as_dict(include_curves) if self.match else None,
            "upper_bound_ratio": self.upper_bound_ratio,
        }

    def curve_rows(self) -> list[tuple[str, str, float, float]]:
        """Rows of (kind, class_or_match, x, y) for the curves CSV."""
        rows = []
        metrics = list(self.per_class.values()) + ([self.match] if self.match else [])
        for m in metrics:
            rows.extend(("pr", m.name, r, p) for r, p in m.pr_curve)
        for m in metrics:
            rows.extend(("fppi", m.name, f, mr) for f, mr in m.fppi_curve)
        return rows


def label_detections(dets: Sequence[tuple[float, BBox]], gts: Sequence[BBox], thr: float = 0.5) -> list[MatchVerdict]:
    """
    Greedy labeling for one image and one class.

    Detections are visited by descending score (equal scores in input order);
    each claims its best-overlapping unclaimed ground truth when that IoU
    exceeds `thr`. Verdicts come back in input order.
    """
    verdicts: list[Optional[MatchVerdict]] = [None] * len(dets)
    if not dets:
        return []
    if not gts:
        return [MatchVerdict(i, False) for i in range(len(dets))]
    overlaps = pairwise_iou(boxes_to_array([box for _, box in dets]), boxes_to_array(gts))
    claimed = np.zeros(len(gts), dtype=bool)
    for index in greedy_order([score for score, _ in dets]):
        row = np.where(claimed, -1.0, overlaps[index])
        best = int(np.argmax(row))
        if row[best] > thr:
            claimed[best] = True
            verdicts[index] = MatchVerdict(index, True, best)
        else:
            verdicts[index] = MatchVerdict(index, False)
    return verdicts


@dataclass
class _BucketLabels:
    """Verdicts for one (image, class) bucket, keyed by global detection index."""

    base: list[MatchVerdict]
    extras: list[list[MatchVerdict]]
    match: list[MatchVerdict]
    # Some detection member overlaps more than one ground-truth member of its role above thr.
    ambiguous: bool = False


def _member_overlaps(dets: Sequence[Optional[BBox]], gts: Sequence[Optional[BBox]]) -> np.ndarray:
    """IoU matrix where a missing box on either side overlaps nothing."""
    overlaps = np.zeros((len(dets), len(gts)), dtype=np.float64)
    rows = [i for i, box in enumerate(dets) if box is not None]
    cols = [j for j, box in enumerate(gts) if box is not None]
    if rows and cols:
        overlaps[np.ix_(rows, cols)] = pairwise_iou(
            boxes_to_array([dets[i] for i in rows]), boxes_to_array([gts[j] for j in cols])
        )
    return overlaps


def _greedy_group_match(local: Sequence[GroupDetection], gts: Sequence[GroupLabel], thr: float, arity: int):
    """
    Group-level greedy labeling for one bucket.

    Detections are visited by descending score (equal scores in input order).
    A detection may claim an unclaimed ground-truth group when its base and
    every extra that group has annotated overlap their counterparts above
    `thr`; among those it claims the one with the best base IoU. Returns the
    claimed bucket index per detection (None for a false positive) and the
    overlap matrices.
    """
    base = _member_overlaps([d.base for d in local], [g.base for g in gts])
    extras = [_member_overlaps([d.extras[s] for d in local], [g.extras[s] for g in gts]) for s in range(arity)]
    feasible = base > thr
    for slot, overlaps in enumerate(extras):
        annotated = np.array([g.extras[slot] is not None for g in gts], dtype=bool)
        feasible &= (overlaps > thr) | ~annotated[None, :]

    claimed = np.zeros(len(gts), dtype=bool)
    credited: list[Optional[int]] = [None] * len(local)
    for k in greedy_order([d.score for d in local]):
        row = np.where(feasible[k] & ~claimed, base[k], -1.0)
        if row.size == 0:
            continue
        best = int(np.argmax(row))
        if row[best] > thr:
            claimed[best] = True
            credited[k] = best
    return credited, base, extras


def _label_bucket(det_indices: list[int], dets: Sequence[GroupDetection], gts: list[GroupLabel], thr: float, arity: int):
    local = [dets[i] for i in det_indices]
    base = label_detections([(d.score, d.base) for d in local], [g.base for g in gts], thr)

    extras = []
    for slot in range(arity):
        present = [k for k, d in enumerate(local) if d.extras[slot] is not None]
        annotated = [j for j, g in enumerate(gts) if g.extras[slot] is not None]
        verdicts = label_detections(
            [(local[k].score, local[k].extras[slot]) for k in present],
            [gts[j].extras[slot] for j in annotated],
            thr,
        )
        extras.append([
            MatchVerdict(det_indices[present[v.det_index]], v.is_tp, gts[annotated[v.matched_gt]].group_id if v.is_tp else None)
            for v in verdicts
        ])

    credited, base_overlaps, extra_overlaps = _greedy_group_match(local, gts, thr, arity)
    match = [
        MatchVerdict(det_indices[k], gt is not None, gts[gt].group_id if gt is not None else None)
        for k, gt in enumerate(credited)
    ]
    ambiguous = any(bool(((m > thr).sum(axis=1) > 1).any()) for m in [base_overlaps, *extra_overlaps])
    base = [MatchVerdict(det_indices[k], v.is_tp, gts[v.matched_gt].group_id if v.is_tp else None) for k, v in enumerate(base)]
    return _BucketLabels(base, extras, match, ambiguous)


def _buckets(dets: Iterable, gts: Iterable[GroupLabel], key) -> tuple[dict, dict]:
    det_buckets: dict = defaultdict(list)
    gt_buckets: dict = defaultdict(list)
    for index, det in enumerate(dets):
        det_buckets[key(det)].append(index)
    for gt in gts:
        if not gt.ignore:
            gt_buckets[(gt.image_id, gt.class_id)].append(gt)
    return det_buckets, gt_buckets


def parallel_map(fn, items, threads: int) -> list:
    """Map in order, on a thread pool when `threads` > 1."""
    if threads <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _label_all(dets: Sequence[GroupDetection], gts: Sequence[GroupLabel], thr: float, threads: int = 1):
    arity = common_arity(list(dets) + list(gts), "detections and ground truth")
    det_buckets, gt_buckets = _buckets(dets, gts, key=lambda d: (d.image_id, d.class_id))
    keys = list(det_buckets)
    labels = parallel_map(lambda key: _label_bucket(det_buckets[key], dets, gt_buckets.get(key, []), thr, arity), keys, threads)
    return arity, dict(zip(keys, labels))


def label_groups(dets: Sequence[GroupDetection], gts: Sequence[GroupLabel], thr: float = 0.5) -> list[MatchVerdict]:
    """
    Group labeling, greedy by descending group score within each image and
    class. Verdicts come back in input order; matched_gt is the group_id.
    """
    _, labels = _label_all(dets, gts, thr)
    verdicts = [v for bucket in labels.values() for v in bucket.match]
    return sorted(verdicts, key=lambda v: v.det_index)


def average_precision(scored: Sequence[tuple[float, bool]], num_gt: int) -> tuple[Optional[float], list[tuple[float, float]]]:
    """
    All-point interpolated AP over (score, is_tp) pairs pooled across images.

    `scored` must already be in evaluation order; see `_ranked`.
    """
    if num_gt <= 0:
        return None, []
    if not scored:
        return 0.0, []
    hits = np.array([tp for _, tp in scored], dtype=np.float64)
    tp = np.cumsum(hits)
    fp = np.cumsum(1.0 - hits)
    recall = tp / num_gt
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.concatenate(([0.0], recall)))
    ap = float(np.sum(steps * envelope))
    return ap, list(zip(recall.tolist(), precision.tolist()))


def log_average_miss_rate(
    scored: Sequence[tuple[float, bool]], num_gt: int, num_images: int
) -> tuple[Optional[float], list[tuple[float, float]]]:
    """
    Geometric mean of the miss rate at nine FPPI points log-spaced in
    [1e-2, 1e0]. At each reference point the miss rate of the largest
    achieved FPPI not above it is used; when no operating point qualifies the
    miss rate is 1.
    """
    if num_gt <= 0 or num_images <= 0:
        return None, []
    if not scored:
        return 1.0, []
    hits = np.array([tp for _, tp in scored], dtype=np.float64)
    recall = np.cumsum(hits) / num_gt
    fppi = np.cumsum(1.0 - hits) / num_images
    miss = 1.0 - recall
    at = np.searchsorted(fppi, FPPI_REFERENCE, side="right") - 1
    sampled = np.where(at >= 0, miss[np.clip(at, 0, None)], 1.0)
    mr = float(np.exp(np.mean(np.log(np.maximum(sampled, MISS_RATE_FLOOR)))))
    return mr, list(zip(fppi.tolist(), miss.tolist()))


def _ranked(verdicts: Iterable[MatchVerdict], scores: Sequence[float]) -> list[tuple[float, bool]]:
    """Pool verdicts by descending score, ties by detection index."""
    ordered = sorted(verdicts, key=lambda v: (-scores[v.det_index], v.det_index))
    return [(scores[v.det_index], v.is_tp) for v in ordered]


def class_metrics(name: str, verdicts: Sequence[MatchVerdict], scores: Sequence[float], num_gt: int, num_images: int) -> ClassMetrics:
    scored = _ranked(verdicts, scores)
    ap, pr_curve = average_precision(scored, num_gt)
    mr, fppi_curve = log_average_miss_rate(scored, num_gt, num_images)
    return ClassMetrics(name, num_gt, len(scored), ap, mr, pr_curve, fppi_curve)


def _class_names(header: Optional[DatasetHeader], class_ids: Iterable[int], arity: int) -> tuple[dict[int, str], list[str]]:
    if header is not None:
        base = {c: header.base_class_names[c] if c < len(header.base_class_names) else f"class{c}" for c in class_ids}
        return base, list(header.extra_class_names)
    return {c: f"class{c}" for c in class_ids}, [f"extra{i}" for i in range(arity)]


def _count_images(*collections, header: Optional[DatasetHeader] = None) -> int:
    images = {item.image_id for collection in collections for item in collection}
    if header is not None and header.image_sizes:
        images |= set(header.image_sizes)
    return len({str(i) for i in images})


def _kept(gts: Sequence[GroupLabel]) -> list[GroupLabel]:
    return [g for g in gts if not g.ignore]


def check_range_invariants(result: EvalResult) -> None:
    if result.match is None:
        return
    for m in result.per_class.values():
        if m.ap is not None and result.match.ap is not None and result.match.ap > m.ap + INVARIANT_TOLERANCE:
            raise MetricInvariantError(f"AP_match {result.match.ap!r} exceeds {m.name} AP {m.ap!r}")
        if m.mr is not None and result.match.mr is not None and result.match.mr < m.mr - INVARIANT_TOLERANCE:
            raise MetricInvariantError(f"MR_match {result.match.mr!r} is below {m.name} MR {m.mr!r}")


def evaluate(
    dets: Sequence[GroupDetection],
    gts: Sequence[GroupLabel],
    thr: float = 0.5,
    header: Optional[DatasetHeader] = None,
    threads: int = 1,
) -> EvalResult:
    """
    Per-class AP/MR from per-member labeling plus AP_match/MR_match from
    group labeling. Ground-truth groups flagged `ignore` are left out.

    The range invariants (AP_match at most every per-class AP, MR_match at
    least every per-class MR) hold by construction when there is one base
    class, every ground-truth group has all extras annotated, and no
    detection member overlaps two ground-truth members of its role above
    `thr`. They are checked in that case. When overlaps are ambiguous the
    group pass may credit a detection to a different group than the
    per-class pass did, and AP_match can then exceed a per-class AP.
    """
    dets = list(dets)
    kept = _kept(gts)
    arity, labels = _label_all(dets, kept, thr, threads)
    scores = [d.score for d in dets]
    num_images = _count_images(dets, gts, header=header)
    class_ids = sorted({g.class_id for g in kept} | {d.class_id for d in dets})
    base_names, extra_names = _class_names(header, class_ids, arity)

    per_class = {}
    for c in class_ids:
        verdicts = [v for (_, cls), bucket in labels.items() if cls == c for v in bucket.base]
        num_gt = sum(1 for g in kept if g.class_id == c)
        per_class[base_names[c]] = class_metrics(base_names[c], verdicts, scores, num_gt, num_images)
    for slot in range(arity):
        verdicts = [v for bucket in labels.values() for v in bucket.extras[slot]]
        num_gt = sum(1 for g in kept if g.extras[slot] is not None)
        per_class[extra_names[slot]] = class_metrics(extra_names[slot], verdicts, scores, num_gt, num_images)

    match_verdicts = [v for bucket in labels.values() for v in bucket.match]
    match = class_metrics(MATCH, match_verdicts, scores, len(kept), num_images)
    result = EvalResult(per_class, match, num_images, thr)

    fully_annotated = all(g.extras[slot] is not None for g in kept for slot in range(arity))
    ambiguous = any(bucket.ambiguous for bucket in labels.values())
    if len({g.class_id for g in kept}) <= 1 and fully_annotated and not ambiguous:
        check_range_invariants(result)
    elif ambiguous:
        logger.debug("range invariants not checked: some detections overlap several ground-truth groups")
    logger.info(
        f"evaluated {len(dets)} groups against {len(kept)} ground-truth groups on {num_images} images: "
        f"AP_match={match.ap}, MR_match={match.mr}"
    )
    return result


def evaluate_flat(
    dets: Sequence[FlatDetection],
    gts: Sequence[GroupLabel],
    thr: float = 0.5,
    header: Optional[DatasetHeader] = None,
    threads: int = 1,
) -> EvalResult:
    """Per-class AP/MR for independent per-class detections; no match metrics."""
    dets = list(dets)
    kept = _kept(gts)
    arity = common_arity(kept, "ground truth") if kept else (header.arity if header else 0)
    for det in dets:
        if det.role > arity:
            raise SchemaMismatchError(f"detection role {det.role} exceeds extras arity {arity}")

    det_buckets: dict = defaultdict(list)
    for index, det in enumerate(dets):
        det_buckets[(det.image_id, det.class_id, det.role)].append(index)
    gt_buckets: dict = defaultdict(list)
    for gt in kept:
        gt_buckets[(gt.image_id, gt.class_id)].append(gt)

    def label(key):
        image_id, class_id, role = key
        indices = det_buckets[key]
        targets = [g.member(role) for g in gt_buckets.get((image_id, class_id), []) if g.member(role) is not None]
        verdicts = label_detections([(dets[i].score, dets[i].box) for i in indices], targets, thr)
        return [MatchVerdict(indices[v.det_index], v.is_tp) for v in verdicts]

    keys = list(det_buckets)
    by_role: dict = defaultdict(list)
    for key, verdicts in zip(keys, parallel_map(label, keys, threads)):
        _, class_id, role = key
        by_role[(role, class_id if role == BASE_ROLE else None)].extend(verdicts)

    scores = [d.score for d in dets]
    num_images = _count_images(dets, gts, header=header)
    class_ids = sorted({g.class_id for g in kept} | {d.class_id for d in dets if d.role == BASE_ROLE})
    base_names, extra_names = _class_names(header, class_ids, arity)
    per_class = {}
    for c in class_ids:
        num_gt = sum(1 for g in kept if g.class_id == c)
        per_class[base_names[c]] = class_metrics(base_names[c], by_role[(BASE_ROLE, c)], scores, num_gt, num_images)
    for slot in range(arity):
        num_gt = sum(1 for g in kept if g.extras[slot] is not None)
        per_class[extra_names[slot]] = class_metrics(extra_names[slot], by_role[(slot + 1, None)], scores, num_gt, num_images)
    return EvalResult(per_class, None, num_images, thr)


def metric_summary(result: EvalResult) -> dict[str, float]:
    """
    Flatten a single-base-class result into the results.csv metric columns.
    Undefined values become NaN.
    """
    nan = float("nan")
    names = list(result.per_class)
    base = result.per_class[names[0]] if names else None
    extra = result.per_class[names[1]] if len(names) > 1 else None

    def value(metrics, attr):
        v = getattr(metrics, attr) if metrics is not None else None
        return nan if v is None else float(v)

    return {
        "ap_base": value(base, "ap"),
        "ap_extra": value(extra, "ap"),
        "ap_match": value(result.match, "ap"),
        "mr_base": value(base, "mr"),
        "mr_extra": value(extra, "mr"),
        "mr_match": value(result.match, "mr"),
    }
