"""Conditional-quantile curve container shared by both estimators."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ConditionalQuantileCurve"]


@dataclass(frozen=True)
class ConditionalQuantileCurve:
    """Quantile estimates on a conditioning grid.

    ``values[i, k]`` is the tau[k] conditional quantile at x1[i]; rows follow
    the grid, columns the quantile levels.
    """

    x1: np.ndarray
    taus: np.ndarray
    values: np.ndarray
    method: str = ""

    def __post_init__(self):
        if self.values.shape != (self.x1.size, self.taus.size):
            raise ValueError(
                f"curve shape {self.values.shape} does not match grid "
                f"({self.x1.size}) x taus ({self.taus.size})"
            )

    def long_rows(self):
        """Yield (method, x1, tau, value) rows for long-format CSV output."""
        for i, x in enumerate(self.x1):
            for k, t in enumerate(self.taus):
                yield (self.method, float(x), float(t), float(self.values[i, k]))
