"""
Groups and detections documents.

Both are UTF-8 JSON: a `format` tag, a `header` object and one record array.
Saving is canonical (sorted keys, shortest round-trip float repr, trailing
newline), so save(load(doc)) reproduces a canonical document byte for byte.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

from .exceptions import DatasetFormatError
from .groups import DatasetHeader, FlatDetection, GroupDetection, GroupLabel, common_arity
from .serializers import (
    DatasetHeaderSerializer,
    FlatDetectionSerializer,
    GroupDetectionSerializer,
    GroupLabelSerializer,
)

logger = logging.getLogger(__name__)

GROUPS_FORMAT = "detmatch.groups"
DETECTIONS_FORMAT = "detmatch.detections"
GROUPED = "grouped"
FLAT = "flat"

PathLike = Union[str, Path]


@dataclass
class DetectionFile:
    header: DatasetHeader
    kind: str
    grouped: list[GroupDetection] = field(default_factory=list)
    flat: list[FlatDetection] = field(default_factory=list)

    @property
    def records(self) -> list:
        return self.grouped if self.kind == GROUPED else self.flat


def _reject_constant(name):
    raise ValueError(f"non-finite number {name} is not allowed")


def read_document(path: PathLike) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetFormatError(f"cannot read file: {exc.strerror}", location=str(path)) from exc
    try:
        document = json.loads(text, parse_constant=_reject_constant)
    except ValueError as exc:
        raise DatasetFormatError(f"invalid JSON: {exc}", location=str(path)) from exc
    if not isinstance(document, dict):
        raise DatasetFormatError("top level must be an object", location=str(path))
    return document


def canonical_json(document) -> str:
    return json.dumps(document, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_document(path: PathLike, document: dict) -> None:
    Path(path).write_text(canonical_json(document), encoding="utf-8")


def _flatten_errors(errors, prefix="") -> str:
    parts = []
    if isinstance(errors, dict):
        for key, value in errors.items():
            parts.append(_flatten_errors(value, f"{prefix}{key}."))
    elif isinstance(errors, list):
        if all(not isinstance(e, (dict, list)) for e in errors):
            parts.append(f"{prefix.rstrip('.')}: {' '.join(str(e) for e in errors)}" if prefix else " ".join(map(str, errors)))
        else:
            for index, value in enumerate(errors):
                if value:
                    parts.append(_flatten_errors(value, f"{prefix}{index}."))
    else:
        parts.append(f"{prefix.rstrip('.')}: {errors}")
    return "; ".join(p for p in parts if p)


def _record_location(collection: str, index: int, record) -> str:
    location = f"{collection}[{index}]"
    if isinstance(record, dict):
        ids = [f"{k}={record[k]!r}" for k in ("image_id", "group_id") if k in record]
        if ids:
            location += f" ({', '.join(ids)})"
    return location


def _check_format(document: dict, expected: str, strict: bool, allowed: set[str]) -> None:
    tag = document.get("format")
    if tag != expected:
        raise DatasetFormatError(f"expected format {expected!r}, got {tag!r}", location="format")
    unknown = sorted(set(document) - allowed)
    if unknown and strict:
        raise DatasetFormatError(f"unknown top-level fields {unknown}", location="document")


def parse_header(data, strict: bool = True) -> DatasetHeader:
    serializer = DatasetHeaderSerializer(data=data, context={"strict": strict})
    if not serializer.is_valid():
        raise DatasetFormatError(_flatten_errors(serializer.errors), location="header")
    return serializer.save()


def _parse_records(records, serializer_class, collection: str, context: dict) -> list:
    if not isinstance(records, list):
        raise DatasetFormatError("must be an array", location=collection)
    parsed = []
    for index, record in enumerate(records):
        serializer = serializer_class(data=record, context=context)
        if not serializer.is_valid():
            raise DatasetFormatError(
                _flatten_errors(serializer.errors), location=_record_location(collection, index, record)
            )
        parsed.append(serializer.save())
    return parsed


def parse_groups(document: dict, strict: bool = True) -> tuple[DatasetHeader, list[GroupLabel]]:
    _check_format(document, GROUPS_FORMAT, strict, {"format", "header", "groups"})
    header = parse_header(document.get("header"), strict)
    context = {"strict": strict, "arity": header.arity, "class_count": len(header.base_class_names)}
    groups = _parse_records(document.get("groups", []), GroupLabelSerializer, "groups", context)
    seen = {}
    for index, group in enumerate(groups):
        key = (group.image_id, group.group_id)
        if key in seen:
            raise DatasetFormatError(
                f"duplicate (image_id, group_id) {key!r}, first seen at groups[{seen[key]}]",
                location=f"groups[{index}] (group_id={group.group_id!r})",
            )
        seen[key] = index
    return header, groups


def load_groups(path: PathLike, strict: bool = True) -> tuple[DatasetHeader, list[GroupLabel]]:
    header, groups = parse_groups(read_document(path), strict)
    logger.info(f"loaded {len(groups)} groups with {header.arity} extra classes from {path}")
    return header, groups


def header_document(header: DatasetHeader) -> dict:
    return dict(DatasetHeaderSerializer(header).data)


def groups_document(header: DatasetHeader, groups: Sequence[GroupLabel]) -> dict:
    return {
        "format": GROUPS_FORMAT,
        "header": header_document(header),
        "groups": [dict(GroupLabelSerializer(g).data) for g in groups],
    }


def save_groups(path: PathLike, header: DatasetHeader, groups: Sequence[GroupLabel]) -> None:
    write_document(path, groups_document(header, groups))


def parse_detections(document: dict, strict: bool = True) -> DetectionFile:
    _check_format(document, DETECTIONS_FORMAT, strict, {"format", "header", "kind", "detections"})
    header = parse_header(document.get("header"), strict)
    kind = document.get("kind")
    context = {"strict": strict, "arity": header.arity}
    records = document.get("detections", [])
    if kind == GROUPED:
        return DetectionFile(header, kind, grouped=_parse_records(records, GroupDetectionSerializer, "detections", context))
    if kind == FLAT:
        return DetectionFile(header, kind, flat=_parse_records(records, FlatDetectionSerializer, "detections", context))
    raise DatasetFormatError(f"kind must be {GROUPED!r} or {FLAT!r}, got {kind!r}", location="kind")


def load_detections(path: PathLike, strict: bool = True) -> DetectionFile:
    detections = parse_detections(read_document(path), strict)
    logger.info(f"loaded {len(detections.records)} {detections.kind} detections from {path}")
    return detections


def detections_document(header: DatasetHeader, detections: Iterable, kind: str = GROUPED) -> dict:
    detections = list(detections)
    if kind == GROUPED:
        common_arity(detections, "detections")
        records = [dict(GroupDetectionSerializer(d).data) for d in detections]
    elif kind == FLAT:
        records = [dict(FlatDetectionSerializer(d).data) for d in detections]
    else:
        raise ValueError(f"unknown detections kind {kind!r}")
    return {"format": DETECTIONS_FORMAT, "header": header_document(header), "kind": kind, "detections": records}


def save_detections(path: PathLike, header: DatasetHeader, detections: Iterable, kind: str = GROUPED) -> None:
    write_document(path, detections_document(header, detections, kind))
