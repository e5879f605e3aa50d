"""
COCO person keypoints to person + torso groups.

Torso boxes are approximated from the four torso keypoints (both shoulders
and both hips) instead of dense surface annotations: the bounding rectangle of
the labeled torso keypoints, padded by a margin fraction per side and clipped
to the person box.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .boxes import BBox
from .exceptions import DatasetFormatError
from .formats import PathLike, read_document, save_groups
from .groups import DatasetHeader, GroupLabel

logger = logging.getLogger(__name__)

PERSON = "person"
TORSO = "torso"
# Indices into the 17-point COCO person skeleton.
TORSO_KEYPOINTS = {"left_shoulder": 5, "right_shoulder": 6, "left_hip": 11, "right_hip": 12}
KEYPOINT_COUNT = 17


@dataclass(frozen=True)
class TorsoOptions:
    margin: float = 0.1
    min_visibility: int = 1
    min_keypoints: int = 2
    complete_only: bool = False

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError(f"margin must be >= 0, got {self.margin!r}")
        if self.min_visibility not in (1, 2):
            raise ValueError(f"min_visibility must be 1 (labeled) or 2 (visible), got {self.min_visibility!r}")


def torso_points(keypoints: list, location: str) -> tuple[list[tuple[float, float, int]], bool]:
    """Return the torso keypoints as (x, y, v) and whether any is labeled."""
    if not isinstance(keypoints, list) or len(keypoints) != 3 * KEYPOINT_COUNT:
        raise DatasetFormatError(f"keypoints must hold {3 * KEYPOINT_COUNT} numbers", location=location)
    points = []
    for index in TORSO_KEYPOINTS.values():
        x, y, v = keypoints[3 * index: 3 * index + 3]
        if not all(isinstance(n, (int, float)) and not isinstance(n, bool) for n in (x, y, v)):
            raise DatasetFormatError(f"keypoint {index} is not numeric", location=location)
        points.append((float(x), float(y), int(v)))
    return points, any(v > 0 for _, _, v in points)


def torso_box(person: BBox, points, options: TorsoOptions) -> Optional[BBox]:
    usable = [(x, y) for x, y, v in points if v >= options.min_visibility]
    if len(usable) < options.min_keypoints:
        return None
    xs = [x for x, _ in usable]
    ys = [y for _, y in usable]
    hull_w = max(xs) - min(xs)
    hull_h = max(ys) - min(ys)
    # A flat hull (e.g. only the two shoulders) is padded relative to the person instead.
    pad_x = options.margin * (hull_w if hull_w > 0 else person.w)
    pad_y = options.margin * (hull_h if hull_h > 0 else person.h)
    x1 = max(min(xs) - pad_x, person.x)
    y1 = max(min(ys) - pad_y, person.y)
    x2 = min(max(xs) + pad_x, person.x2)
    y2 = min(max(ys) + pad_y, person.y2)
    if x2 < x1 or y2 < y1:
        return None
    return BBox.from_corners(x1, y1, x2, y2)


def _person_category(document: dict) -> int:
    categories = document.get("categories")
    if not isinstance(categories, list):
        raise DatasetFormatError("missing categories array", location="categories")
    for index, category in enumerate(categories):
        if not isinstance(category, dict) or not isinstance(category.get("id"), int):
            raise DatasetFormatError("category needs an integer id", location=f"categories[{index}]")
        if category.get("name") == PERSON:
            return category["id"]
    raise DatasetFormatError("no 'person' category", location="categories")


def convert_document(document: dict, options: TorsoOptions) -> tuple[DatasetHeader, list[GroupLabel]]:
    person_id = _person_category(document)
    images = {}
    for index, image in enumerate(document.get("images", [])):
        try:
            images[image["id"]] = (float(image["width"]), float(image["height"]))
        except (KeyError, TypeError, ValueError):
            raise DatasetFormatError("image needs id, width and height", location=f"images[{index}]") from None

    annotations = document.get("annotations")
    if not isinstance(annotations, list):
        raise DatasetFormatError("missing annotations array", location="annotations")

    groups: list[GroupLabel] = []
    dropped = 0
    for index, ann in enumerate(annotations):
        location = f"annotations[{index}]"
        if not isinstance(ann, dict):
            raise DatasetFormatError("annotation must be an object", location=location)
        category = ann.get("category_id")
        if not isinstance(category, int) or isinstance(category, bool):
            raise DatasetFormatError(f"malformed category_id {category!r}", location=location)
        if category != person_id or ann.get("iscrowd", 0):
            continue
        if "keypoints" not in ann:
            raise DatasetFormatError("person annotation without keypoints", location=location)
        points, labeled = torso_points(ann["keypoints"], location)
        if not labeled:
            dropped += 1
            continue
        try:
            person = BBox(*(float(v) for v in ann["bbox"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(f"bad person bbox: {exc}", location=location) from None
        groups.append(GroupLabel(
            image_id=ann["image_id"],
            group_id=ann.get("id", index),
            class_id=0,
            base=person,
            extras=(torso_box(person, points, options),),
        ))

    if dropped:
        logger.warning(f"dropped {dropped} persons without any labeled torso keypoint")
    if options.complete_only:
        incomplete = {g.image_id for g in groups if g.extras[0] is None}
        groups = [g for g in groups if g.image_id not in incomplete]
        logger.info(f"kept {len(groups)} persons from images where every person has a torso")

    groups.sort(key=lambda g: (str(g.image_id), str(g.group_id)))
    used = {str(g.image_id) for g in groups}
    header = DatasetHeader(
        base_class_names=(PERSON,),
        extra_class_names=(TORSO,),
        image_sizes={str(k): list(v) for k, v in sorted(images.items(), key=lambda kv: str(kv[0])) if str(k) in used},
    )
    return header, groups


def convert_coco_torso(coco_annotations_path: PathLike, output_path: PathLike, options: TorsoOptions = TorsoOptions()):
    header, groups = convert_document(read_document(coco_annotations_path), options)
    save_groups(output_path, header, groups)
    logger.info(f"wrote {len(groups)} person+torso groups to {Path(output_path)}")
    return header, groups
