"""
Training objective for grouped prediction, as plain numerical functions.

Every loss returns its value together with an analytic gradient so the
gradients can be checked against central finite differences without any
training framework. Box gradients are taken over raw (x, y, w, h).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.special import expit

from .boxes import BBox, Offset, apply_offsets, diou_terms
from .exceptions import DegenerateBoxError, KinkPointError, SchemaMismatchError

logger = logging.getLogger(__name__)

BOX_COORDS = ("x", "y", "w", "h")


@dataclass(frozen=True)
class LossConfig:
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    smooth_l1_delta: float = 1.0
    constraint_weight: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.focal_alpha <= 1.0:
            raise ValueError(f"focal_alpha must lie in [0, 1], got {self.focal_alpha!r}")
        if self.focal_gamma < 0:
            raise ValueError(f"focal_gamma must be >= 0, got {self.focal_gamma!r}")
        if self.smooth_l1_delta <= 0:
            raise ValueError(f"smooth_l1_delta must be > 0, got {self.smooth_l1_delta!r}")
        if self.constraint_weight < 0:
            raise ValueError(f"constraint_weight must be >= 0, got {self.constraint_weight!r}")


@dataclass(frozen=True)
class GroupTarget:
    base: BBox
    extras: tuple[Optional[BBox], ...]
    class_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "extras", tuple(self.extras))
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id!r}")


def smooth_l1(z: float, delta: float) -> tuple[float, float]:
    """Smooth L1 value and derivative with the quadratic zone |z| < delta."""
    if abs(z) < delta:
        return 0.5 * z * z / delta, z / delta
    return abs(z) - 0.5 * delta, math.copysign(1.0, z)


def focal_loss(p: float, y: int, cfg: LossConfig) -> tuple[float, float]:
    """
    Binary focal loss for predicted probability `p` and label `y`.

    The gradient is taken with respect to the pre-sigmoid logit.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"focal loss needs p strictly inside (0, 1), got {p!r}; clamp first")
    positive = bool(y)
    p_t = p if positive else 1.0 - p
    alpha_t = cfg.focal_alpha if positive else 1.0 - cfg.focal_alpha
    gamma = cfg.focal_gamma
    modulating = (1.0 - p_t) ** gamma
    loss = -alpha_t * modulating * math.log(p_t)
    dloss = alpha_t * modulating * (gamma * p_t * math.log(p_t) - (1.0 - p_t))
    return loss, dloss if positive else -dloss


def diou_loss(pred: BBox, gt: BBox) -> tuple[float, np.ndarray]:
    """1 - IoU + normalized center distance, with its gradient over pred."""
    if gt.area <= 0:
        raise DegenerateBoxError("DIoU loss needs a ground-truth box with positive area")
    value_iou, penalty = diou_terms(pred, gt)
    return 1.0 - value_iou + penalty, _diou_gradient(pred, gt)


def _diou_gradient(pred: BBox, gt: BBox) -> np.ndarray:
    # Derivatives over corners (x1, y1, x2, y2); ties take the gt side.
    x1, y1, x2, y2 = pred.x, pred.y, pred.x2, pred.y2
    gx1, gy1, gx2, gy2 = gt.x, gt.y, gt.x2, gt.y2

    iw = min(x2, gx2) - max(x1, gx1)
    ih = min(y2, gy2) - max(y1, gy1)
    if iw > 0 and ih > 0:
        inter = iw * ih
        d_inter = np.array([
            -ih if x1 > gx1 else 0.0,
            -iw if y1 > gy1 else 0.0,
            ih if x2 < gx2 else 0.0,
            iw if y2 < gy2 else 0.0,
        ])
    else:
        inter = 0.0
        d_inter = np.zeros(4)

    d_area = np.array([-pred.h, -pred.w, pred.h, pred.w])
    union = pred.area + gt.area - inter
    d_union = d_area - d_inter
    d_iou = (d_inter * union - inter * d_union) / (union * union)

    cx, cy = pred.center
    gcx, gcy = gt.center
    rho2 = (cx - gcx) ** 2 + (cy - gcy) ** 2
    d_rho2 = np.array([cx - gcx, cy - gcy, cx - gcx, cy - gcy])

    ew = max(x2, gx2) - min(x1, gx1)
    eh = max(y2, gy2) - min(y1, gy1)
    diag2 = ew * ew + eh * eh
    if diag2 > 0:
        d_diag2 = np.array([
            -2.0 * ew if x1 < gx1 else 0.0,
            -2.0 * eh if y1 < gy1 else 0.0,
            2.0 * ew if x2 > gx2 else 0.0,
            2.0 * eh if y2 > gy2 else 0.0,
        ])
        d_penalty = (d_rho2 * diag2 - rho2 * d_diag2) / (diag2 * diag2)
    else:
        d_penalty = np.zeros(4)

    g = -d_iou + d_penalty
    return np.array([g[0] + g[2], g[1] + g[3], g[2], g[3]])


def diou_kinks(pred: BBox, gt: BBox, tol: float = 0.0) -> list[str]:
    """Name every coordinate coincidence where the DIoU loss is not differentiable."""
    checks = {
        "x1=gt.x1": pred.x - gt.x,
        "y1=gt.y1": pred.y - gt.y,
        "x2=gt.x2": pred.x2 - gt.x2,
        "y2=gt.y2": pred.y2 - gt.y2,
        "x2=gt.x1": pred.x2 - gt.x,
        "x1=gt.x2": pred.x - gt.x2,
        "y2=gt.y1": pred.y2 - gt.y,
        "y1=gt.y2": pred.y - gt.y2,
    }
    return [name for name, gap in checks.items() if abs(gap) <= tol]


def constraint_loss(extra: BBox, base: BBox, cfg: LossConfig) -> tuple[float, np.ndarray]:
    """
    One-sided Smooth L1 penalty pushing `extra` to cover `base`.

    Four branches, each active only when the extra box falls short of the
    base on that side; the gradient is over the extra box.
    """
    delta = cfg.smooth_l1_delta
    loss = 0.0
    grad = np.zeros(4)
    if extra.x > base.x:
        value, slope = smooth_l1(base.x - extra.x, delta)
        loss += value
        grad[0] -= slope
    if extra.y > base.y:
        value, slope = smooth_l1(base.y - extra.y, delta)
        loss += value
        grad[1] -= slope
    if extra.x2 < base.x2:
        value, slope = smooth_l1(base.x2 - extra.x2, delta)
        loss += value
        grad[0] -= slope
        grad[2] -= slope
    if extra.y2 < base.y2:
        value, slope = smooth_l1(base.y2 - extra.y2, delta)
        loss += value
        grad[1] -= slope
        grad[3] -= slope
    return loss, grad


def constraint_kinks(extra: BBox, base: BBox, tol: float = 0.0) -> list[str]:
    checks = {
        "x=base.x": extra.x - base.x,
        "y=base.y": extra.y - base.y,
        "x2=base.x2": extra.x2 - base.x2,
        "y2=base.y2": extra.y2 - base.y2,
    }
    return [name for name, gap in checks.items() if abs(gap) <= tol]


def group_loss_terms(
    pred_class_prob: float,
    pred_base: BBox,
    pred_offsets: Sequence[Offset],
    target: GroupTarget,
    cfg: LossConfig,
) -> dict[str, float]:
    """
    Individual terms of the total group loss, keyed by name.

    Extra boxes without an annotation contribute no localization term, but
    their coverage constraint always applies.
    """
    if len(pred_offsets) != len(target.extras):
        raise SchemaMismatchError(
            f"{len(pred_offsets)} predicted offsets for {len(target.extras)} target extras"
        )
    terms = {"cls": focal_loss(pred_class_prob, 1, cfg)[0], "loc_base": diou_loss(pred_base, target.base)[0]}
    for index, (box, gt_box) in enumerate(zip(apply_offsets(pred_base, pred_offsets), target.extras)):
        if gt_box is not None:
            terms[f"loc_extra_{index}"] = diou_loss(box, gt_box)[0]
        terms[f"constraint_{index}"] = cfg.constraint_weight * constraint_loss(box, pred_base, cfg)[0]
    return terms


def total_group_loss(
    pred_class_prob: float,
    pred_base: BBox,
    pred_offsets: Sequence[Offset],
    target: GroupTarget,
    cfg: LossConfig,
) -> float:
    return sum(group_loss_terms(pred_class_prob, pred_base, pred_offsets, target, cfg).values())


@dataclass
class CoordinateCheck:
    name: str
    analytic: Optional[float]
    numeric: Optional[float]
    relative_error: Optional[float]
    error: Optional[str] = None

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "analytic": self.analytic,
            "numeric": self.numeric,
            "relative_error": self.relative_error,
            "error": self.error,
        }


@dataclass
class GradientReport:
    loss: str
    epsilon: float
    max_relative_error: float
    worst_coordinate: Optional[str]
    coordinates: list[CoordinateCheck] = field(default_factory=list)
    kinks: list[str] = field(default_factory=list)

    @property
    def at_kink(self) -> bool:
        return bool(self.kinks)

    def passes(self, tolerance: float) -> bool:
        return not self.kinks and all(
            c.error is None and c.relative_error is not None and c.relative_error < tolerance
            for c in self.coordinates
        )

    def as_dict(self) -> dict:
        return {
            "loss": self.loss,
            "epsilon": self.epsilon,
            "max_relative_error": self.max_relative_error if math.isfinite(self.max_relative_error) else None,
            "worst_coordinate": self.worst_coordinate,
            "kink": self.at_kink,
            "kinks": list(self.kinks),
            "coordinates": [c.as_dict() for c in self.coordinates],
        }


@dataclass(frozen=True)
class DifferentiableLoss:
    """How to evaluate one loss as a function of a flat parameter vector."""

    names: tuple[str, ...]
    unpack: Callable[[Mapping], tuple[np.ndarray, dict]]
    evaluate: Callable[[np.ndarray, dict], tuple[float, np.ndarray]]
    kinks: Callable[[np.ndarray, dict, float], list[str]]


def _box(values) -> BBox:
    return BBox(*(float(v) for v in values))


def _loss_config(point: Mapping) -> LossConfig:
    known = {"focal_alpha", "focal_gamma", "smooth_l1_delta", "constraint_weight"}
    return LossConfig(**{k: float(v) for k, v in point.items() if k in known})


def _unpack_diou(point):
    return np.array(point["pred"], dtype=float), {"gt": _box(point["gt"])}


def _unpack_constraint(point):
    return np.array(point["extra"], dtype=float), {"base": _box(point["base"]), "cfg": _loss_config(point)}


def _unpack_focal(point):
    if "logit" in point:
        logit = float(point["logit"])
    else:
        p = float(point["p"])
        logit = math.log(p / (1.0 - p))
    return np.array([logit]), {"y": int(point.get("y", 1)), "cfg": _loss_config(point)}


def _eval_focal(params, ctx):
    loss, dlogit = focal_loss(float(expit(params[0])), ctx["y"], ctx["cfg"])
    return loss, np.array([dlogit])


LOSSES: dict[str, DifferentiableLoss] = {
    "diou": DifferentiableLoss(
        names=BOX_COORDS,
        unpack=_unpack_diou,
        evaluate=lambda params, ctx: diou_loss(_box(params), ctx["gt"]),
        kinks=lambda params, ctx, tol: diou_kinks(_box(params), ctx["gt"], tol),
    ),
    "constraint": DifferentiableLoss(
        names=BOX_COORDS,
        unpack=_unpack_constraint,
        evaluate=lambda params, ctx: constraint_loss(_box(params), ctx["base"], ctx["cfg"]),
        kinks=lambda params, ctx, tol: constraint_kinks(_box(params), ctx["base"], tol),
    ),
    "focal": DifferentiableLoss(
        names=("logit",),
        unpack=_unpack_focal,
        evaluate=_eval_focal,
        kinks=lambda params, ctx, tol: [],
    ),
}


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def finite_difference_check(loss_fn_id: str, point: Mapping, epsilon: float = 1e-5) -> GradientReport:
    """
    Compare a loss's analytic gradient with central differences at `point`.

    Points within 2*epsilon of a kink are reported in `kinks` and never pass,
    since the central difference straddles the non-differentiable set.
    """
    try:
        surface = LOSSES[loss_fn_id]
    except KeyError:
        raise ValueError(f"unknown loss {loss_fn_id!r}; expected one of {sorted(LOSSES)}") from None
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")

    params, ctx = surface.unpack(point)
    kinks = surface.kinks(params, ctx, 2.0 * epsilon)
    if kinks:
        logger.debug(f"{loss_fn_id} point sits on kinks {kinks}")
    _, analytic = surface.evaluate(params, ctx)

    checks = []
    for index, name in enumerate(surface.names):
        step = np.zeros_like(params)
        step[index] = epsilon
        try:
            upper, _ = surface.evaluate(params + step, ctx)
            lower, _ = surface.evaluate(params - step, ctx)
        except (ValueError, ArithmeticError) as exc:
            checks.append(CoordinateCheck(name, float(analytic[index]), None, None, error=str(exc)))
            continue
        numeric = (upper - lower) / (2.0 * epsilon)
        checks.append(CoordinateCheck(
            name, float(analytic[index]), float(numeric), relative_error(float(analytic[index]), numeric)
        ))

    scored = [c for c in checks if c.relative_error is not None]
    worst = max(scored, key=lambda c: c.relative_error, default=None)
    return GradientReport(
        loss=loss_fn_id,
        epsilon=epsilon,
        max_relative_error=worst.relative_error if worst else math.inf,
        worst_coordinate=worst.name if worst else None,
        coordinates=checks,
        kinks=kinks,
    )


def require_smooth(report: GradientReport) -> GradientReport:
    if report.at_kink:
        raise KinkPointError(f"{report.loss} gradient requested at kinks {report.kinks}")
    return report


def sample_points(loss_fn_id: str, count: int, rng: np.random.Generator) -> list[dict]:
    """Random target points for a loss, with boxes of size 1 to 60 near the origin."""
    points = []
    for _ in range(count):
        if loss_fn_id == "focal":
            points.append({"logit": float(rng.uniform(-6.0, 6.0)), "y": int(rng.integers(0, 2))})
            continue
        first = [*rng.uniform(-20.0, 20.0, 2), *rng.uniform(1.0, 60.0, 2)]
        second = [*rng.uniform(-20.0, 20.0, 2), *rng.uniform(1.0, 60.0, 2)]
        if loss_fn_id == "diou":
            points.append({"pred": [float(v) for v in first], "gt": [float(v) for v in second]})
        elif loss_fn_id == "constraint":
            points.append({"extra": [float(v) for v in first], "base": [float(v) for v in second]})
        else:
            raise ValueError(f"unknown loss {loss_fn_id!r}")
    return points
