"""Exact bad-policy density by enumeration: point values, decisions, curves, integral."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np

from .mdp import FiniteMdp, value_range
from .policies import DEFAULT_ENUMERATION_CAP, start_values

# values within this distance of tau count as <= tau
SNAP = 1e-9

CURVE_HEADER = ("tau", "bpd_numerator", "bpd_denominator", "bpd_float")


@dataclass(frozen=True)
class BpdResult:
    bad_count: int
    total: int
    tau: float

    @property
    def value(self) -> Fraction:
        return Fraction(self.bad_count, self.total)

    @property
    def gpd(self) -> Fraction:
        return 1 - self.value

    def __float__(self) -> float:
        return self.bad_count / self.total


@dataclass(frozen=True)
class BpdCurve:
    points: list[tuple[float, Fraction]]
    vmin: float
    vmax: float

    def csv_rows(self) -> list[tuple]:
        return [(tau, q.numerator, q.denominator, float(q)) for tau, q in self.points]


def _sorted_values(mdp: FiniteMdp, cap: int) -> np.ndarray:
    key = ("sorted_start_values", cap)
    if key not in mdp._cache:
        mdp._cache[key] = np.sort(start_values(mdp, cap))
    return mdp._cache[key]


def bad_counts(
    mdp: FiniteMdp, taus: Iterable[float], cap: int = DEFAULT_ENUMERATION_CAP
) -> np.ndarray:
    """Number of policies with V^pi(s0) <= tau for each threshold."""
    values = _sorted_values(mdp, cap)
    return np.searchsorted(values, np.asarray(list(taus), dtype=float) + SNAP, side="right")


def bpd_exact_many(
    mdp: FiniteMdp, taus: Iterable[float], cap: int = DEFAULT_ENUMERATION_CAP
) -> list[BpdResult]:
    """Exact BPD at each threshold, sharing one enumeration of the policy space."""
    taus = [float(t) for t in taus]
    counts = bad_counts(mdp, taus, cap)
    total = _sorted_values(mdp, cap).size
    return [BpdResult(int(c), total, t) for c, t in zip(counts, taus)]


def bpd_exact(mdp: FiniteMdp, tau: float, cap: int = DEFAULT_ENUMERATION_CAP) -> BpdResult:
    """Fraction of deterministic policies with V^pi(s0) <= tau, as an exact rational."""
    return bpd_exact_many(mdp, [tau], cap)[0]


def parse_fraction(kappa: Fraction | str | int) -> Fraction:
    return kappa if isinstance(kappa, Fraction) else Fraction(kappa)


def bpd_decision(
    mdp: FiniteMdp, tau: float, kappa: Fraction | str | int, cap: int = DEFAULT_ENUMERATION_CAP
) -> bool:
    return bpd_exact(mdp, tau, cap).value == parse_fraction(kappa)


def curve_taus(vmin: float, vmax: float, num_points: int) -> list[float]:
    step = (vmax - vmin) / num_points
    return [vmin + j * step for j in range(1, num_points + 1)]


def bpd_curve(
    mdp: FiniteMdp, num_points: int = 12, cap: int = DEFAULT_ENUMERATION_CAP
) -> BpdCurve:
    """BPD at ``num_points`` evenly spaced thresholds above VMin, the last one at VMax."""
    vmin, vmax = value_range(mdp)
    results = bpd_exact_many(mdp, curve_taus(vmin, vmax, num_points), cap)
    return BpdCurve([(r.tau, r.value) for r in results], vmin, vmax)


def cumulative_bpd(mdp: FiniteMdp, cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """Integral of tau -> BPD_tau over [VMin, VMax], exact for the step function."""
    vmin, vmax = value_range(mdp)
    if vmax <= vmin:
        return 0.0
    values = _sorted_values(mdp, cap)
    total = values.size
    # merge values closer than SNAP so float noise does not create spurious steps
    keep = np.concatenate(([True], np.diff(values) > SNAP))
    distinct = values[keep]
    counts = np.searchsorted(values, distinct + SNAP, side="right")
    lo = np.clip(distinct[:-1], vmin, vmax)
    hi = np.clip(distinct[1:], vmin, vmax)
    return float(np.sum(counts[:-1] / total * (hi - lo)))
