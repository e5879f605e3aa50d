"""
Grouped boxes: a base box plus N extra boxes sharing one class (and, for
detections, one score).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Optional, Sequence

from .boxes import BBox
from .exceptions import SchemaMismatchError

BASE_ROLE = 0

ImageId = Hashable


@dataclass(frozen=True, slots=True)
class GroupDetection:
    image_id: ImageId
    class_id: int
    score: float
    base: BBox
    extras: tuple[Optional[BBox], ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"group score must lie in [0, 1], got {self.score!r}")
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id!r}")
        object.__setattr__(self, "extras", tuple(self.extras))

    @property
    def arity(self) -> int:
        return len(self.extras)

    def member(self, role: int) -> Optional[BBox]:
        """Role 0 is the base box, role i+1 the i-th extra."""
        return self.base if role == BASE_ROLE else self.extras[role - 1]


@dataclass(frozen=True, slots=True)
class GroupLabel:
    image_id: ImageId
    group_id: Hashable
    class_id: int
    base: BBox
    extras: tuple[Optional[BBox], ...] = ()
    ignore: bool = False
    extra_fields: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id!r}")
        object.__setattr__(self, "extras", tuple(self.extras))

    @property
    def arity(self) -> int:
        return len(self.extras)

    @property
    def annotated_roles(self) -> list[int]:
        return [BASE_ROLE] + [i + 1 for i, box in enumerate(self.extras) if box is not None]

    def member(self, role: int) -> Optional[BBox]:
        return self.base if role == BASE_ROLE else self.extras[role - 1]


@dataclass(frozen=True, slots=True)
class FlatDetection:
    """One per-class detection, as emitted by an independent detector."""

    image_id: ImageId
    class_id: int
    role: int
    score: float
    box: BBox

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score must lie in [0, 1], got {self.score!r}")
        if self.role < 0:
            raise ValueError(f"role must be non-negative, got {self.role!r}")


@dataclass(frozen=True, slots=True)
class DatasetHeader:
    base_class_names: tuple[str, ...]
    extra_class_names: tuple[str, ...]
    schema_version: int = 1
    image_sizes: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "base_class_names", tuple(self.base_class_names))
        object.__setattr__(self, "extra_class_names", tuple(self.extra_class_names))

    @property
    def arity(self) -> int:
        return len(self.extra_class_names)

    @property
    def role_names(self) -> list[str]:
        return ["base", *self.extra_class_names]


def common_arity(items: Sequence, what: str = "groups") -> int:
    """Return the shared extras arity of `items`, raising on a mismatch."""
    arities = {item.arity for item in items}
    if len(arities) > 1:
        raise SchemaMismatchError(f"{what} mix extras arities {sorted(arities)}")
    return arities.pop() if arities else 0
