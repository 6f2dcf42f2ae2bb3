"""Artifact taxonomy: body parts, artifact classes, ids, and identifier phrases.

Two detection modes exist. Local mode covers poorly rendered body-part
regions (6 classes, ids 1-6). Global mode covers anatomical inconsistencies
of a whole figure, either a missing or an extra instance of a part
(12 classes: missing 1-6, extra 7-12). Ids are stable and bijective with
(kind, part) within each mode.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class BodyPart(enum.Enum):
    """The six annotated body parts, in canonical id order."""

    FACE = "face"
    TORSO = "torso"
    ARM = "arm"
    HAND = "hand"
    LEG = "leg"
    FEET = "feet"

    def __str__(self) -> str:
        return self.value


BODY_PARTS: tuple[BodyPart, ...] = tuple(BodyPart)


class ArtifactKind(enum.Enum):
    LOCAL = "local"
    GLOBAL_MISSING = "global-missing"
    GLOBAL_EXTRA = "global-extra"

    def __str__(self) -> str:
        return self.value


class Mode(enum.Enum):
    """Detector mode: which taxonomy a manifest or model uses."""

    LOCAL = "local"
    GLOBAL = "global"

    def __str__(self) -> str:
        return self.value


_PHRASE_PREFIX = {
    ArtifactKind.LOCAL: "weird",
    ArtifactKind.GLOBAL_MISSING: "missing",
    ArtifactKind.GLOBAL_EXTRA: "extra",
}


@dataclass(frozen=True, order=True)
class ArtifactClass:
    """One artifact category: a kind applied to a body part.

    The integer id depends on the mode the class lives in: local classes
    use 1-6 in BodyPart order; global classes use 1-6 for missing parts
    and 7-12 for extra parts.
    """

    kind: ArtifactKind
    part: BodyPart

    @property
    def mode(self) -> Mode:
        return Mode.LOCAL if self.kind is ArtifactKind.LOCAL else Mode.GLOBAL

    @property
    def id(self) -> int:
        offset = BODY_PARTS.index(self.part) + 1
        if self.kind is ArtifactKind.GLOBAL_EXTRA:
            return offset + len(BODY_PARTS)
        return offset

    @property
    def phrase(self) -> str:
        """Identifier phrase, e.g. "weird hand", "missing leg", "extra arm"."""
        return f"{_PHRASE_PREFIX[self.kind]} {self.part.value}"

    @property
    def name(self) -> str:
        """Stable snake_case name, e.g. "weird_hand"."""
        return self.phrase.replace(" ", "_")

    def __str__(self) -> str:
        return self.phrase


def classes_for_mode(mode: Mode) -> tuple[ArtifactClass, ...]:
    """All classes of a mode in id order (6 local or 12 global)."""
    if mode is Mode.LOCAL:
        return tuple(ArtifactClass(ArtifactKind.LOCAL, p) for p in BODY_PARTS)
    missing = tuple(ArtifactClass(ArtifactKind.GLOBAL_MISSING, p) for p in BODY_PARTS)
    extra = tuple(ArtifactClass(ArtifactKind.GLOBAL_EXTRA, p) for p in BODY_PARTS)
    return missing + extra


def class_from_id(mode: Mode, class_id: int) -> ArtifactClass:
    """Resolve a category id within a mode; raises ValueError when out of range."""
    classes = classes_for_mode(mode)
    if not 1 <= class_id <= len(classes):
        raise ValueError(
            f"class id {class_id} out of range for mode {mode} (valid: 1-{len(classes)})"
        )
    return classes[class_id - 1]


def class_from_name(mode: Mode, name: str) -> ArtifactClass:
    """Resolve a class by its snake_case name or phrase within a mode."""
    wanted = name.replace(" ", "_")
    for cls in classes_for_mode(mode):
        if cls.name == wanted:
            return cls
    raise ValueError(f"unknown class name {name!r} for mode {mode}")
