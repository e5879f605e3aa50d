"""
Simulator configuration: generative parameters, presets and the flat TOML
file format.
"""
from __future__ import annotations

import dataclasses
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from detections.exceptions import ConfigError, InfeasibleConfigError

logger = logging.getLogger(__name__)

ENCLOSE = "enclose"
INSIDE = "inside"
EXTRA_LAYOUTS = (ENCLOSE, INSIDE)

# Two groups per cluster; base IoU inside a cluster above this cannot be placed
# while keeping the mate's size distinct enough to stay a separate object.
MAX_CROWDING = 0.95
MIN_PAIR_IOU = 0.05


@dataclass(frozen=True)
class SimConfig:
    images: int = 200
    groups_per_image: tuple[int, int] = (4, 10)
    image_size: tuple[float, float] = (1280.0, 720.0)
    base_scale_range: tuple[float, float] = (48.0, 176.0)
    aspect_range: tuple[float, float] = (0.45, 0.8)
    crowding: float = 0.4
    pair_iou_target: float = 0.94
    pair_iou_jitter: float = 0.02
    extra_layout: str = ENCLOSE
    detect_prob: float = 0.95
    loc_noise_sigma: float = 0.05
    fp_rate: float = 1.0
    duplicates: int = 2
    score_noise_sigma: float = 0.1
    fp_score_max: float = 0.5
    proposal_competition: float = 0.0
    scale_mismatch_gain: float = 0.0
    nms_iou_threshold: float = 0.5
    match_iou_floor: float = 0.0
    eval_iou_threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("groups_per_image", "image_size", "base_scale_range", "aspect_range"):
            value = tuple(getattr(self, name))
            if len(value) != 2:
                raise ConfigError(f"{name} must be a pair, got {list(value)}")
            object.__setattr__(self, name, value)
        self.validate()

    def validate(self) -> None:
        if self.images < 1:
            raise ConfigError(f"images must be at least 1, got {self.images}")
        lo, hi = self.groups_per_image
        if not 0 <= lo <= hi:
            raise ConfigError(f"groups_per_image must satisfy 0 <= min <= max, got {list(self.groups_per_image)}")
        if min(self.image_size) <= 0:
            raise ConfigError(f"image_size must be positive, got {list(self.image_size)}")
        slo, shi = self.base_scale_range
        if not 0 < slo <= shi:
            raise ConfigError(f"base_scale_range must satisfy 0 < min <= max, got {list(self.base_scale_range)}")
        alo, ahi = self.aspect_range
        if not 0 < alo <= ahi:
            raise ConfigError(f"aspect_range must satisfy 0 < min <= max, got {list(self.aspect_range)}")
        for name in ("detect_prob", "proposal_competition", "crowding"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value!r}")
        if self.extra_layout not in EXTRA_LAYOUTS:
            raise ConfigError(f"extra_layout must be one of {EXTRA_LAYOUTS}, got {self.extra_layout!r}")
        for name in ("loc_noise_sigma", "fp_rate", "score_noise_sigma", "scale_mismatch_gain", "pair_iou_jitter"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)!r}")
        if not 0.0 <= self.fp_score_max <= 1.0:
            raise ConfigError(f"fp_score_max must lie in [0, 1], got {self.fp_score_max!r}")
        if self.duplicates < 0:
            raise ConfigError(f"duplicates must be non-negative, got {self.duplicates}")
        for name in ("nms_iou_threshold", "eval_iou_threshold"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie strictly inside (0, 1), got {getattr(self, name)!r}")
        if not 0.0 <= self.match_iou_floor < 1.0:
            raise ConfigError(f"match_iou_floor must lie in [0, 1), got {self.match_iou_floor!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

        if self.crowding >= MAX_CROWDING:
            raise InfeasibleConfigError(
                f"crowding {self.crowding!r} cannot be realized; clusters need a base IoU below {MAX_CROWDING}"
            )
        if not MIN_PAIR_IOU <= self.pair_iou_target <= 1.0:
            raise InfeasibleConfigError(
                f"pair_iou_target must lie in [{MIN_PAIR_IOU}, 1], got {self.pair_iou_target!r}"
            )

    def with_seed(self, seed: int) -> "SimConfig":
        return dataclasses.replace(self, seed=seed)

    def as_dict(self) -> dict[str, Any]:
        data = dataclasses.asdict(self)
        for name in ("groups_per_image", "image_size", "base_scale_range", "aspect_range"):
            data[name] = list(data[name])
        return data


PRESETS: dict[str, dict[str, Any]] = {
    "hockey": {
        "pair_iou_target": 0.94,
        "extra_layout": ENCLOSE,
        "crowding": 0.4,
        "loc_noise_sigma": 0.05,
        "duplicates": 2,
        "fp_rate": 1.0,
        "images": 200,
        "proposal_competition": 0.35,
        "scale_mismatch_gain": 0.0,
    },
    "torso": {
        "pair_iou_target": 0.50,
        "extra_layout": INSIDE,
        "crowding": 0.4,
        "loc_noise_sigma": 0.05,
        "duplicates": 2,
        "fp_rate": 1.0,
        "images": 200,
        "proposal_competition": 0.35,
        "scale_mismatch_gain": 2.0,
    },
}

FIELD_NAMES = {f.name for f in dataclasses.fields(SimConfig)}


def build_config(values: Mapping[str, Any], preset: str | None = None, source: str = "config") -> SimConfig:
    """Preset values first, then `values` on top. Unknown keys are rejected."""
    unknown = sorted(set(values) - FIELD_NAMES)
    if unknown:
        raise ConfigError(f"{source}: unknown keys {unknown}")
    merged: dict[str, Any] = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}, expected one of {sorted(PRESETS)}")
        merged.update(PRESETS[preset])
    merged.update(values)
    try:
        return SimConfig(**merged)
    except TypeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path: Union[str, Path], preset: str | None = None) -> SimConfig:
    try:
        with open(path, "rb") as handle:
            values = tomllib.load(handle)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    nested = sorted(k for k, v in values.items() if isinstance(v, dict))
    if nested:
        raise ConfigError(f"{path}: config must be flat, found tables {nested}")
    config = build_config(values, preset, source=str(path))
    logger.info(f"loaded simulator config from {path}")
    return config


def parse_seeds(text: str) -> list[int]:
    """'1..20' (inclusive), '1,2,5' or a single seed; ranges and lists mix."""
    seeds: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        bounds = part.split("..", 1)
        try:
            first, last = int(bounds[0]), int(bounds[-1])
        except ValueError:
            raise ConfigError(f"malformed seed list {text!r}") from None
        if last < first:
            raise ConfigError(f"empty seed range {part!r}")
        seeds.extend(range(first, last + 1))
    if not seeds:
        raise ConfigError("at least one seed is required")
    if any(s < 0 for s in seeds):
        raise ConfigError(f"seeds must be non-negative, got {text!r}")
    return seeds
