from __future__ import annotations

from dataclasses import dataclass

DEFAULT_CLASS_NAMES = ("pedestrian", "bicycle", "shopping_cart", "vehicle", "empty")


@dataclass(frozen=True)
class ClassLabel:
    id: int
    name: str


def make_labels(names=DEFAULT_CLASS_NAMES) -> tuple[ClassLabel, ...]:
    names = tuple(names)
    if len(names) < 2:
        raise ValueError("need at least two classes")
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate class names in {names}")
    return tuple(ClassLabel(i, n) for i, n in enumerate(names))


DEFAULT_LABELS = make_labels()
