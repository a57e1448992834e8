"""Fit reports shared by the constant-fitting and exponent-regression verifiers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

# A constant that moves by more than this under one refinement is treated as
# growing without bound.
DIVERGENCE_GROWTH = 0.5


@dataclass(frozen=True)
class FitReport:
    """Fitted constant (or exponent) for one named estimate.

    ``value`` is the smallest constant making the inequality hold on the
    lattice, or a regression exponent. ``refine_ratio`` is value(2m)/value(m)
    and ``truncation_ratio`` is value(2K)/value(K); either is ``nan`` when the
    corresponding study was not run.
    """

    name: str
    params: dict[str, float]
    value: float
    interval: tuple[float, float]
    argmax: tuple[float, float] | None = None
    refine_ratio: float = math.nan
    truncation_ratio: float = math.nan
    diverged: bool = False
    tags: tuple[str, ...] = ()
    extras: dict[str, Any] = field(default_factory=dict)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)

    def refine_change(self) -> float:
        return abs(self.refine_ratio - 1.0)

    def truncation_change(self) -> float:
        return abs(self.truncation_ratio - 1.0)

    def in_theorem_range(self) -> bool:
        return "outside-theorem-range" not in self.tags


def grew_without_bound(coarse: float, fine: float) -> bool:
    if not (math.isfinite(coarse) and math.isfinite(fine)):
        return True
    if coarse == 0.0:
        return fine > 0.0
    return fine / coarse - 1.0 > DIVERGENCE_GROWTH
