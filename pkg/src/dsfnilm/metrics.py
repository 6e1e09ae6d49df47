"""Percentage of energy deviated (PED) and its pooled average (APED).

PED normalizes the absolute appliance error by the total aggregate power at
that tick (summed over lines). Ticks whose total aggregate is zero are
skipped and counted; they are removed from both numerator and denominator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def ped(x_true: float, x_hat: float, y_agg: float) -> float | None:
    """PED of one sample, or None when the aggregate is zero."""
    if y_agg == 0:
        return None
    return abs(x_true - x_hat) / y_agg


def _total(agg) -> np.ndarray:
    a = np.asarray(agg, dtype=float)
    return a if a.ndim == 1 else a.sum(axis=1)


@dataclass
class MetricsReport:
    names: list[str]
    aped: list[float]                                   # per appliance, fraction
    ticks_per_house: list[int] = field(default_factory=list)
    skipped_per_house: list[int] = field(default_factory=list)

    @property
    def skipped(self) -> int:
        return int(sum(self.skipped_per_house))

    @property
    def average(self) -> float:
        return float(np.mean(self.aped)) if self.aped else float("nan")

    def to_dict(self) -> dict:
        return {
            "appliances": {n: v for n, v in zip(self.names, self.aped)},
            "average": self.average,
            "ticks_per_house": list(self.ticks_per_house),
            "skipped_per_house": list(self.skipped_per_house),
            "skipped": self.skipped,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_table(self) -> str:
        width = max([len("Appliance"), len("Average")] + [len(n) for n in self.names])
        lines = [f"{'Appliance':<{width}}  {'APED%':>8}", "-" * (width + 10)]
        lines += [f"{n:<{width}}  {100 * v:8.2f}" for n, v in zip(self.names, self.aped)]
        lines += ["-" * (width + 10), f"{'Average':<{width}}  {100 * self.average:8.2f}"]
        return "\n".join(lines) + "\n"


def aped(truths: Sequence, estimates: Sequence, aggregates: Sequence,
         names: Sequence[str] | None = None) -> MetricsReport:
    """Pooled APED over houses.

    Each house contributes an L x T truth matrix, an L x T estimate matrix and
    a length-T total aggregate (or T x R per-line aggregate, summed here).
    """
    if not (len(truths) == len(estimates) == len(aggregates)) or not truths:
        raise ValueError("need the same positive number of truth, estimate and aggregate entries")
    L = np.asarray(truths[0]).shape[0]
    num = np.zeros(L)
    den = 0
    ticks, skipped = [], []
    for h, (x, x_hat, agg) in enumerate(zip(truths, estimates, aggregates)):
        x = np.asarray(x, dtype=float)
        x_hat = np.asarray(x_hat, dtype=float)
        y = _total(agg)
        if x.ndim != 2 or x.shape[0] != L or x.shape != x_hat.shape or y.shape != (x.shape[1],):
            raise ValueError(f"house {h}: shape mismatch truth {x.shape}, estimate {x_hat.shape}, aggregate {y.shape}")
        keep = y != 0
        num += (np.abs(x - x_hat)[:, keep] / y[keep]).sum(axis=1)
        den += int(keep.sum())
        ticks.append(int(y.size))
        skipped.append(int((~keep).sum()))
    values = (num / den) if den else np.full(L, np.nan)
    names = list(names) if names is not None else [f"app{i + 1}" for i in range(L)]
    return MetricsReport(names, [float(v) for v in values], ticks, skipped)
