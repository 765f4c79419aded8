"""Severity labeling: the comprehensive severity index and its level buckets."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

CSI_WEIGHTS = (10, 6, 4, 3, 2, 2, 2)


class SeverityLevel(IntEnum):
    I = 1
    II = 2
    III = 3
    IV = 4
    V = 5


@dataclass(frozen=True)
class SeverityCounts:
    """Per-case damage counts feeding the severity index.

    a: fatalities, b: seriously injured persons, c: ejected persons,
    d: totaled vehicles, e: rolled-over vehicles, f: vehicles with fire,
    g: jack-knifed vehicles.
    """

    a: int = 0
    b: int = 0
    c: int = 0
    d: int = 0
    e: int = 0
    f: int = 0
    g: int = 0

    def __post_init__(self) -> None:
        for name in "abcdefg":
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise ValueError(f"count {name!r} must be a non-negative integer, got {value!r}")

    def as_tuple(self) -> tuple[int, int, int, int, int, int, int]:
        return (self.a, self.b, self.c, self.d, self.e, self.f, self.g)


def compute_csi(counts: SeverityCounts) -> int:
    """Weighted severity index: 10a + 6b + 4c + 3d + 2e + 2f + 2g."""
    return sum(w * n for w, n in zip(CSI_WEIGHTS, counts.as_tuple()))


def severity_level(csi: int) -> SeverityLevel:
    """Bucket a severity index into levels I..V.

    Boundaries: I for 0..1, II for 2..5, III for 6..9, IV for 10..14,
    V for 15 and above.  The index 2 belongs to level II so that the
    levels partition the non-negative integers.
    """
    if csi < 0:
        raise ValueError(f"severity index must be non-negative, got {csi}")
    if csi <= 1:
        return SeverityLevel.I
    if csi <= 5:
        return SeverityLevel.II
    if csi <= 9:
        return SeverityLevel.III
    if csi <= 14:
        return SeverityLevel.IV
    return SeverityLevel.V


def binary_severity(level: SeverityLevel) -> int:
    """Map level I to non-severe (0) and every higher level to severe (1)."""
    return 0 if level == SeverityLevel.I else 1
