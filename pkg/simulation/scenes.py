"""
Synthetic crowded scenes and detector emulation.

Every image draws from its own PCG64 substreams, derived from
(seed, image index, stream), so images can be generated in any order or in
parallel and still reproduce bit for bit.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from detections.boxes import BBox, enclosing_box, intersection_area, iou
from detections.groups import BASE_ROLE, FlatDetection, GroupDetection, GroupLabel
from evaluation.analysis import StrideSpec, pair_overlaps
from .config import ENCLOSE, SimConfig

logger = logging.getLogger(__name__)

INDEPENDENT = "independent"
GROUPED = "grouped"
DETECTOR_MODES = (INDEPENDENT, GROUPED)

SCENE_STREAM = 0
COIN_STREAM = 1
NOISE_STREAMS = {INDEPENDENT: 2, GROUPED: 3}

PLACEMENT_ATTEMPTS = 200
BISECTION_STEPS = 80
MIN_SIZE_FRACTION = 0.05

TRUE = "true"
DUPLICATE = "duplicate"
FALSE = "false"


def substream(seed: int, image_index: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(image_index, stream))))


@dataclass(frozen=True)
class Provenance:
    det_index: int
    kind: str
    group_id: Optional[int] = None
    role: Optional[int] = None


@dataclass
class SimScene:
    image_id: int
    image_size: tuple[float, float]
    gts: list[GroupLabel]
    clusters: list[tuple[int, ...]] = field(default_factory=list)
    detections_independent: list[FlatDetection] = field(default_factory=list)
    detections_grouped: list[GroupDetection] = field(default_factory=list)
    latent: dict[str, list[Provenance]] = field(default_factory=dict)


def _sample_base(cfg: SimConfig, rng: np.random.Generator) -> BBox:
    scale = rng.uniform(*cfg.base_scale_range)
    aspect = rng.uniform(*cfg.aspect_range)
    return BBox(0.0, 0.0, scale * math.sqrt(aspect), scale / math.sqrt(aspect))


def _pair_iou(cfg: SimConfig, rng: np.random.Generator) -> float:
    p = cfg.pair_iou_target
    half_width = min(cfg.pair_iou_jitter, 1.0 - p, p - 0.01)
    u = rng.uniform(-1.0, 1.0)
    return p + u * half_width if half_width > 0 else p


def make_extra(base: BBox, pair_iou: float, layout: str, rng: np.random.Generator) -> BBox:
    """
    Build an extra box with IoU `pair_iou` against `base`.

    `enclose` grows the base to area A / pair_iou and keeps it covered;
    `inside` shrinks it to area A * pair_iou within the base. The area ratio
    is split between the axes at random and the slack is distributed at
    random between the two sides.
    """
    split, u, v = rng.uniform(0.3, 0.7), rng.random(), rng.random()
    if pair_iou >= 1.0:
        return base
    if layout == ENCLOSE:
        sx = (1.0 / pair_iou) ** split
        sy = (1.0 / pair_iou) / sx
        w, h = base.w * sx, base.h * sy
        return BBox(base.x - u * (w - base.w), base.y - v * (h - base.h), w, h)
    sx = pair_iou ** split
    sy = pair_iou / sx
    w, h = base.w * sx, base.h * sy
    return BBox(base.x + u * (base.w - w), base.y + v * (base.h - h), w, h)


def _shifted(box: BBox, dx: float, dy: float) -> BBox:
    return BBox(box.x + dx, box.y + dy, box.w, box.h)


def place_mate(anchor: BBox, crowding: float, rng: np.random.Generator) -> BBox:
    """
    A second base box at IoU `crowding` with `anchor`: same aspect, linear
    size ratio large enough that the concentric IoU exceeds the target, moved
    away from the shared center along a random direction until the IoU drops
    to the target.
    """
    r_min = math.sqrt(min(crowding + 0.02, 1.0))
    ratio = rng.uniform(r_min, 1.0)
    if rng.random() < 0.5:
        ratio = 1.0 / ratio
    angle = rng.uniform(0.0, 2.0 * math.pi)
    w, h = anchor.w * ratio, anchor.h * ratio
    cx, cy = anchor.center
    ux, uy = math.cos(angle), math.sin(angle)

    def mate_at(t):
        return BBox(cx + t * ux - w / 2.0, cy + t * uy - h / 2.0, w, h)

    lo, hi = 0.0, anchor.w + anchor.h + w + h
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if iou(anchor, mate_at(mid)) > crowding:
            lo = mid
        else:
            hi = mid
    return mate_at(0.5 * (lo + hi))


def _cluster_bounds(members: Sequence[tuple[BBox, BBox]]) -> BBox:
    bounds = members[0][0]
    for base, extra in members:
        bounds = enclosing_box(enclosing_box(bounds, base), extra)
    return bounds


def _generate_image(cfg: SimConfig, image_index: int) -> SimScene:
    rng = substream(cfg.seed, image_index, SCENE_STREAM)
    width, height = cfg.image_size
    count = int(rng.integers(cfg.groups_per_image[0], cfg.groups_per_image[1] + 1))
    sizes = [2] * (count // 2) + [1] * (count % 2) if cfg.crowding > 0 else [1] * count

    placed: list[BBox] = []
    gts: list[GroupLabel] = []
    clusters: list[tuple[int, ...]] = []
    dropped = 0
    for size in sizes:
        anchor = _sample_base(cfg, rng)
        bases = [anchor] if size == 1 else [anchor, place_mate(anchor, cfg.crowding, rng)]
        members = [(b, make_extra(b, _pair_iou(cfg, rng), cfg.extra_layout, rng)) for b in bases]
        bounds = _cluster_bounds(members)
        spot = None
        if bounds.w <= width and bounds.h <= height:
            for _ in range(PLACEMENT_ATTEMPTS):
                dx = rng.uniform(-bounds.x, width - bounds.x2)
                dy = rng.uniform(-bounds.y, height - bounds.y2)
                candidate = _shifted(bounds, dx, dy)
                if all(intersection_area(candidate, other) == 0.0 for other in placed):
                    spot = (dx, dy)
                    placed.append(candidate)
                    break
        if spot is None:
            dropped += size
            continue
        indices = []
        for base, extra in members:
            indices.append(len(gts))
            gts.append(GroupLabel(
                image_id=image_index,
                group_id=len(gts),
                class_id=0,
                base=_shifted(base, *spot),
                extras=(_shifted(extra, *spot),),
            ))
        clusters.append(tuple(indices))
    if dropped:
        logger.debug(f"image {image_index}: no room for {dropped} of {count} groups")
    return SimScene(image_id=image_index, image_size=(float(width), float(height)), gts=gts, clusters=clusters)


def generate_scenes(cfg: SimConfig) -> list[SimScene]:
    """Ground truth only; detections are filled in by simulate_detector."""
    cfg.validate()
    scenes = [_generate_image(cfg, i) for i in range(cfg.images)]
    logger.info(
        f"generated {len(scenes)} scenes with {sum(len(s.gts) for s in scenes)} groups (seed {cfg.seed})"
    )
    return scenes


def realized_crowding(scenes: Sequence[SimScene]) -> Optional[float]:
    """Mean base IoU between groups sharing a cluster; None without clusters of two."""
    values = [
        iou(scene.gts[a].base, scene.gts[b].base)
        for scene in scenes
        for cluster in scene.clusters
        for i, a in enumerate(cluster)
        for b in cluster[i + 1:]
    ]
    return float(np.mean(values)) if values else None


def max_foreign_iou(scenes: Sequence[SimScene]) -> float:
    """Largest base IoU between groups of different clusters."""
    worst = 0.0
    for scene in scenes:
        owner = {index: c for c, cluster in enumerate(scene.clusters) for index in cluster}
        for a, first in enumerate(scene.gts):
            for b in range(a + 1, len(scene.gts)):
                if owner[a] != owner[b]:
                    worst = max(worst, iou(first.base, scene.gts[b].base))
    return worst


def realized_pair_iou(scenes: Sequence[SimScene]) -> Optional[float]:
    values = pair_overlaps([g for scene in scenes for g in scene.gts])
    return float(np.mean(values)) if values else None


def jitter(box: BBox, sigma: float, rng: np.random.Generator) -> BBox:
    """Gaussian noise on x, y, w, h with standard deviation sigma times the box size."""
    nx, ny, nw, nh = rng.standard_normal(4)
    w = max(box.w + nw * sigma * box.w, MIN_SIZE_FRACTION * box.w)
    h = max(box.h + nh * sigma * box.h, MIN_SIZE_FRACTION * box.h)
    return BBox(box.x + nx * sigma * box.w, box.y + ny * sigma * box.h, w, h)


def _score(quality: float, cfg: SimConfig, rng: np.random.Generator) -> float:
    return min(max(quality + rng.normal(0.0, 1.0) * cfg.score_noise_sigma, 0.0), 1.0)


def _false_base(cfg: SimConfig, size: tuple[float, float], rng: np.random.Generator) -> BBox:
    box = _sample_base(cfg, rng)
    width, height = size
    x = rng.uniform(0.0, max(width - box.w, 0.0))
    y = rng.uniform(0.0, max(height - box.h, 0.0))
    return _shifted(box, x, y)


def detection_coins(cfg: SimConfig, scene: SimScene) -> np.ndarray:
    """Which ground-truth groups the detector finds; shared by both detector modes."""
    rng = substream(cfg.seed, scene.image_id, COIN_STREAM)
    return rng.random(len(scene.gts)) < cfg.detect_prob


def _simulate_independent(cfg: SimConfig, scene: SimScene, strides: StrideSpec):
    rng = substream(cfg.seed, scene.image_id, NOISE_STREAMS[INDEPENDENT])
    dets: list[FlatDetection] = []
    latent: list[Provenance] = []

    def emit(box, role, kind, group_id=None, target=None, score=None):
        if score is None:
            score = _score(iou(box, target), cfg, rng)
        latent.append(Provenance(len(dets), kind, group_id, role))
        dets.append(FlatDetection(scene.image_id, 0, role, score, box))

    for found, gt in zip(detection_coins(cfg, scene), scene.gts):
        if not found:
            continue
        for role, target in enumerate((gt.base, *gt.extras)):
            if target is None:
                continue
            draw = rng.random()
            if role != BASE_ROLE and strides.level(target) == strides.level(gt.base):
                if draw < cfg.proposal_competition * iou(gt.base, target):
                    continue
            box = jitter(target, cfg.loc_noise_sigma, rng)
            emit(box, role, TRUE, gt.group_id, target)
            for _ in range(cfg.duplicates):
                emit(jitter(box, cfg.loc_noise_sigma, rng), role, DUPLICATE, gt.group_id, target)

    arity = scene.gts[0].arity if scene.gts else 1
    for role in range(arity + 1):
        for _ in range(int(rng.poisson(cfg.fp_rate))):
            base = _false_base(cfg, scene.image_size, rng)
            box = base if role == BASE_ROLE else make_extra(base, _pair_iou(cfg, rng), cfg.extra_layout, rng)
            emit(box, role, FALSE, score=rng.uniform(0.0, cfg.fp_score_max))
    return dets, latent


def _extra_sigma(cfg: SimConfig, base: BBox, extra: BBox) -> float:
    if base.area <= 0 or extra.area <= 0:
        return cfg.loc_noise_sigma
    return cfg.loc_noise_sigma * (1.0 + cfg.scale_mismatch_gain * abs(math.log2(extra.scale / base.scale)))


def _simulate_grouped(cfg: SimConfig, scene: SimScene):
    rng = substream(cfg.seed, scene.image_id, NOISE_STREAMS[GROUPED])
    dets: list[GroupDetection] = []
    latent: list[Provenance] = []

    def emit(base, extras, kind, gt=None, score=None):
        if score is None:
            overlaps = [iou(base, gt.base)] + [iou(e, t) for e, t in zip(extras, gt.extras) if e is not None and t is not None]
            score = _score(float(np.mean(overlaps)), cfg, rng)
        latent.append(Provenance(len(dets), kind, gt.group_id if gt is not None else None))
        dets.append(GroupDetection(scene.image_id, 0, score, base, tuple(extras)))

    for found, gt in zip(detection_coins(cfg, scene), scene.gts):
        if not found:
            continue
        base = jitter(gt.base, cfg.loc_noise_sigma, rng)
        extras = [
            jitter(e, _extra_sigma(cfg, gt.base, e), rng) if e is not None else None
            for e in gt.extras
        ]
        emit(base, extras, TRUE, gt)
        for _ in range(cfg.duplicates):
            emit(
                jitter(base, cfg.loc_noise_sigma, rng),
                [
                    jitter(e, _extra_sigma(cfg, gt.base, t), rng) if e is not None else None
                    for e, t in zip(extras, gt.extras)
                ],
                DUPLICATE,
                gt,
            )

    arity = scene.gts[0].arity if scene.gts else 1
    for _ in range(int(rng.poisson(cfg.fp_rate))):
        base = _false_base(cfg, scene.image_size, rng)
        extras = [make_extra(base, _pair_iou(cfg, rng), cfg.extra_layout, rng) for _ in range(arity)]
        emit(base, extras, FALSE, score=rng.uniform(0.0, cfg.fp_score_max))
    return dets, latent


def simulate_detector(scenes: Sequence[SimScene], cfg: SimConfig, mode: str) -> list[SimScene]:
    """
    Emulate a detector over `scenes`; returns copies carrying the detections
    of `mode` (flat per-class lists for `independent`, groups for `grouped`).
    """
    if mode not in DETECTOR_MODES:
        raise ValueError(f"unknown detector mode {mode!r}, expected one of {DETECTOR_MODES}")
    strides = StrideSpec()
    out = []
    for scene in scenes:
        if mode == INDEPENDENT:
            dets, latent = _simulate_independent(cfg, scene, strides)
            updated = dataclasses.replace(scene, detections_independent=dets)
        else:
            dets, latent = _simulate_grouped(cfg, scene)
            updated = dataclasses.replace(scene, detections_grouped=dets)
        updated.latent = {**scene.latent, mode: latent}
        out.append(updated)
    logger.debug(f"{mode} detector emitted {sum(len(s.latent[mode]) for s in out)} detections")
    return out
