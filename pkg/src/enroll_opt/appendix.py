"""Error of the single-gamma aggregation against the exact site convolution.

For ``K`` sites with a common gamma prior and exposures
``round(i * span / K)``, the exact country pmf is the convolution of ``K``
PG laws.  The aggregated law is PG(1, A, B) with matched rate moments.  The
reported error is the largest pmf difference over ``0..L``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import RateMoments, aggregate_pg
from .pgdist import PGParams, pg_pmf_vector

__all__ = ["K_GRID", "REFERENCE_DIF", "TOLERANCE", "AppendixRow", "exposure_grid", "aggregation_error", "appendix_table"]

ALPHA = 1.5
BETA = 150.0
SPAN = 300
MAX_COUNT = 50
K_GRID = (2, 3, 5, 8, 10, 15, 20)
REFERENCE_DIF = {2: 0.0019, 3: 0.0017, 5: 0.0011, 8: 0.00075, 10: 0.00059, 15: 0.00039, 20: 0.00029}
TOLERANCE = 2e-4


def exposure_grid(K: int, span: int = SPAN) -> np.ndarray:
    """``round(i * span / K)`` for ``i = 1..K``, half-to-even."""
    return np.round(np.arange(1, K + 1) * span / K)


def aggregation_error(
    K: int,
    alpha: float = ALPHA,
    beta: float = BETA,
    span: int = SPAN,
    max_count: int = MAX_COUNT,
) -> float:
    v = exposure_grid(K, span)
    exact = np.array([1.0])
    for t in v:
        # truncating each factor at max_count keeps indices 0..max_count exact
        exact = np.convolve(exact, pg_pmf_vector(PGParams(float(t), alpha, beta), max_count))[: max_count + 1]
    moments = RateMoments(float(alpha / beta * v.sum()), float(alpha / beta**2 * (v * v).sum()))
    approx = pg_pmf_vector(aggregate_pg(moments).params, max_count)
    return float(np.max(np.abs(exact - approx)))


@dataclass(frozen=True)
class AppendixRow:
    K: int
    dif: float
    reference: float

    @property
    def passed(self) -> bool:
        return abs(self.dif - self.reference) <= TOLERANCE


def appendix_table() -> list[AppendixRow]:
    return [AppendixRow(K, aggregation_error(K), REFERENCE_DIF[K]) for K in K_GRID]


def strictly_decreasing(rows: list[AppendixRow]) -> bool:
    return all(a.dif > b.dif for a, b in zip(rows, rows[1:]))
