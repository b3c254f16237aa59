"""Shared result records for quadrature-based estimates."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class AveragingEstimate:
    """Numerically estimated value of an averaging operator.

    `error` is a quadrature error proxy: the Richardson difference of two
    grid refinements for deterministic rules, or a one-sigma batch
    standard error for QMC rules.
    """

    mean: float
    error: float
    nodes: int
    r: float
    t: float

    def __post_init__(self):
        if self.error < 0:
            raise ValueError("error estimate must be nonnegative")
