"""Streaming ensemble statistics with exact parallel merging.

Accumulators keep central-moment sums through fourth order (Pebay update
rules), so variances come with asymptotic standard errors and chunked or
multi-worker runs reduce to the same numbers as a sequential pass:
accumulating one record is literally a merge with a singleton, which
makes merge-then-accumulate reorderings reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict

import numpy as np


@dataclass
class RunningMoments:
    """Count, mean, and central moment sums M2..M4 of a scalar stream."""

    n: int = 0
    mean: float = 0.0
    M2: float = 0.0
    M3: float = 0.0
    M4: float = 0.0

    @classmethod
    def of(cls, x):
        return cls(n=1, mean=float(x))

    def push(self, x):
        """Absorb one sample (merge with a singleton)."""
        merged = merge_moments(self, RunningMoments.of(x))
        self.n, self.mean = merged.n, merged.mean
        self.M2, self.M3, self.M4 = merged.M2, merged.M3, merged.M4
        return self

    @property
    def variance(self):
        """Population variance (ddof = 0)."""
        return self.M2 / self.n if self.n else 0.0

    @property
    def sample_variance(self):
        return self.M2 / (self.n - 1) if self.n > 1 else 0.0

    @property
    def stderr_mean(self):
        return math.sqrt(self.sample_variance / self.n) if self.n > 1 else 0.0

    @property
    def variance_stderr(self):
        """Asymptotic standard error of the population variance.

        Var(m2) ~ (m4 - m2^2)/n with m4 the fourth central moment.
        """
        if self.n < 2:
            return 0.0
        m2 = self.M2 / self.n
        m4 = self.M4 / self.n
        return math.sqrt(max(m4 - m2 * m2, 0.0) / self.n)


def merge_moments(a, b):
    """Combine two :class:`RunningMoments` exactly (empty is the identity)."""
    if a.n == 0:
        return RunningMoments(b.n, b.mean, b.M2, b.M3, b.M4)
    if b.n == 0:
        return RunningMoments(a.n, a.mean, a.M2, a.M3, a.M4)
    na, nb = a.n, b.n
    n = na + nb
    delta = b.mean - a.mean
    d_n = delta / n
    mean = a.mean + d_n * nb
    M2 = a.M2 + b.M2 + delta * d_n * na * nb
    M3 = (a.M3 + b.M3
          + delta * d_n * d_n * na * nb * (na - nb)
          + 3.0 * d_n * (na * b.M2 - nb * a.M2))
    M4 = (a.M4 + b.M4
          + delta * d_n * d_n * d_n * na * nb * (na * na - na * nb + nb * nb)
          + 6.0 * d_n * d_n * (na * na * b.M2 + nb * nb * a.M2)
          + 4.0 * d_n * (na * b.M3 - nb * a.M3))
    return RunningMoments(n, mean, M2, M3, M4)


class InsufficientSectorData(ValueError):
    """Raised when a sector-conditioned estimate has no support."""

    def __init__(self, sector, count):
        self.sector = sector
        self.count = count
        super().__init__(f"sector N={sector} holds {count} records, need at least 1")


@dataclass
class EnsembleStats:
    """Aggregated trajectory observables for one (L, d, p, kind) cell.

    Tracks running moments of the half-chain entropy and number
    fluctuation, of the sampled region populations, integer histograms of
    the mid-site and total occupations, and per-sector sub-accumulators
    of the half-chain population keyed by sampled total number.
    """

    L: int
    d: int
    count: int = 0
    entropy: RunningMoments = field(default_factory=RunningMoments)
    fluctuation: RunningMoments = field(default_factory=RunningMoments)
    n_half: RunningMoments = field(default_factory=RunningMoments)
    n_total: RunningMoments = field(default_factory=RunningMoments)
    n_mid_lo: RunningMoments = field(default_factory=RunningMoments)
    n_mid_hi: RunningMoments = field(default_factory=RunningMoments)
    hist_total: np.ndarray = None
    hist_mid_lo: np.ndarray = None
    hist_mid_hi: np.ndarray = None
    sectors: Dict[int, RunningMoments] = field(default_factory=dict)

    def __post_init__(self):
        n_levels = self.L * (self.d - 1) + 1
        if self.hist_total is None:
            self.hist_total = np.zeros(n_levels, dtype=np.int64)
        if self.hist_mid_lo is None:
            self.hist_mid_lo = np.zeros(self.d, dtype=np.int64)
        if self.hist_mid_hi is None:
            self.hist_mid_hi = np.zeros(self.d, dtype=np.int64)

    def __eq__(self, other):
        if not isinstance(other, EnsembleStats):
            return NotImplemented
        return (
            (self.L, self.d, self.count) == (other.L, other.d, other.count)
            and self.entropy == other.entropy
            and self.fluctuation == other.fluctuation
            and self.n_half == other.n_half
            and self.n_total == other.n_total
            and self.n_mid_lo == other.n_mid_lo
            and self.n_mid_hi == other.n_mid_hi
            and np.array_equal(self.hist_total, other.hist_total)
            and np.array_equal(self.hist_mid_lo, other.hist_mid_lo)
            and np.array_equal(self.hist_mid_hi, other.hist_mid_hi)
            and self.sectors == other.sectors
        )


def accumulate(stats, record):
    """Fold one trajectory record into ``stats`` (mutates and returns it)."""
    cfg = record.sampled_config
    if len(cfg) != stats.L:
        raise ValueError(f"record has {len(cfg)} sites, stats expects {stats.L}")
    if any(not 0 <= v < stats.d for v in cfg):
        raise ValueError(f"record occupations {cfg} exceed local dimension {stats.d}")
    stats.count += 1
    stats.entropy.push(record.entropy_half)
    stats.fluctuation.push(record.fluctuation_half)
    stats.n_half.push(record.n_half)
    stats.n_total.push(record.n_total)
    stats.n_mid_lo.push(record.n_mid_lo)
    stats.n_mid_hi.push(record.n_mid_hi)
    stats.hist_total[record.n_total] += 1
    stats.hist_mid_lo[record.n_mid_lo] += 1
    stats.hist_mid_hi[record.n_mid_hi] += 1
    sector = stats.sectors.setdefault(record.n_total, RunningMoments())
    sector.push(record.n_half)
    return stats


def merge(a, b):
    """Combine two cells' statistics into a new :class:`EnsembleStats`."""
    if (a.L, a.d) != (b.L, b.d):
        raise ValueError(f"shape mismatch: ({a.L}, {a.d}) vs ({b.L}, {b.d})")
    out = EnsembleStats(a.L, a.d, count=a.count + b.count)
    out.entropy = merge_moments(a.entropy, b.entropy)
    out.fluctuation = merge_moments(a.fluctuation, b.fluctuation)
    out.n_half = merge_moments(a.n_half, b.n_half)
    out.n_total = merge_moments(a.n_total, b.n_total)
    out.n_mid_lo = merge_moments(a.n_mid_lo, b.n_mid_lo)
    out.n_mid_hi = merge_moments(a.n_mid_hi, b.n_mid_hi)
    out.hist_total = a.hist_total + b.hist_total
    out.hist_mid_lo = a.hist_mid_lo + b.hist_mid_lo
    out.hist_mid_hi = a.hist_mid_hi + b.hist_mid_hi
    for key in sorted(set(a.sectors) | set(b.sectors)):
        out.sectors[key] = merge_moments(
            a.sectors.get(key, RunningMoments()), b.sectors.get(key, RunningMoments())
        )
    return out


def sector_dispersion(stats, sector):
    """Population variance of the half-chain number within one total-number sector."""
    acc = stats.sectors.get(sector)
    if acc is None or acc.n == 0:
        raise InsufficientSectorData(sector, 0)
    return acc.variance


def asymptotic_scaling_fit(pairs, window):
    """Log-log slope of value vs p over a window.

    Parameters
    ----------
    pairs : sequence of (p, value)
    window : (lo, hi)
        Inclusive p range entering the fit.

    Returns
    -------
    float
        Least-squares slope of log(value) against log(p); requires at
        least four strictly positive points inside the window.
    """
    lo, hi = window
    sel = [(p, y) for p, y in pairs if lo <= p <= hi]
    if len(sel) < 4:
        raise ValueError(f"need at least 4 points in window [{lo}, {hi}], got {len(sel)}")
    p = np.array([q for q, _ in sel], dtype=float)
    y = np.array([v for _, v in sel], dtype=float)
    if np.any(y <= 0) or np.any(p <= 0):
        raise ValueError("log-log fit needs strictly positive p and values")
    slope = np.polyfit(np.log(p), np.log(y), 1)[0]
    return float(slope)
