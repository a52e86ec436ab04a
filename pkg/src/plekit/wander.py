"""Spectral-wandering rates between consecutive PLE lines and their histogram."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyRegion, NonPositiveDt, ValidationError
from .lorentz import is_successful
from .model import PleScan
from .pipeline import CalibrationFactor

DEFAULT_SIGMA_THRESHOLD = 200.0  # MHz/s


@dataclass(frozen=True)
class WanderSample:
    rate_mhz_per_s: float
    sigma_mhz_per_s: float
    region_id: str = ""
    pair: tuple = (0, 1)

    def __post_init__(self):
        if not self.sigma_mhz_per_s >= 0:
            raise ValidationError("sigma_mhz_per_s", "must be >= 0")
        i, j = self.pair
        if j != i + 1:
            raise ValidationError("pair", "indices must be consecutive")


def _position(fit, center, a1_is_low):
    p, se = fit.params, fit.std_errors
    if center == "mean":
        return p.mean_center, se["mean_center"]
    low = (center == "a1") == a1_is_low
    return (p.center1, se["center1"]) if low else (p.center2, se["center2"])


def wander_rates(scan: PleScan, fits, calib: CalibrationFactor, center="mean",
                 a1_is_low=True):
    """Rates between consecutive lines whose fits both succeeded.

    ``center`` picks the tracked position: the doublet mean ("mean") or
    one transition ("a1" / "a2").
    """
    if center not in ("mean", "a1", "a2"):
        raise ValidationError("center", f"unknown position {center!r}")
    if len(fits) != len(scan):
        raise ValidationError("fits", "need one fit (or None) per line")
    k = calib.mhz_per_volt
    out = []
    for i in range(len(scan) - 1):
        a, b = fits[i], fits[i + 1]
        if not (is_successful(a) and is_successful(b)):
            continue
        dt = scan.lines[i + 1].t0 - scan.lines[i].t0
        if not dt > 0:
            raise NonPositiveDt(f"lines {i} and {i + 1}: dt = {dt}")
        ca, sa = _position(a, center, a1_is_low)
        cb, sb = _position(b, center, a1_is_low)
        out.append(WanderSample((cb - ca) * k / dt, math.hypot(sa, sb) * k / dt,
                                scan.meta.region_id, (i, i + 1)))
    return out


def reject_outliers(samples, sigma_threshold=DEFAULT_SIGMA_THRESHOLD):
    """Drop samples whose sigma exceeds the threshold; returns (kept, n_rejected)."""
    if not sigma_threshold > 0:
        raise ValidationError("sigma_threshold", "must be > 0")
    kept = [s for s in samples if not s.sigma_mhz_per_s > sigma_threshold]
    return kept, len(samples) - len(kept)


def group_by_region(samples):
    groups = {}
    for s in samples:
        groups.setdefault(s.region_id, []).append(s)
    return groups


def region_mean_sigmas(region_samples):
    out = {}
    for region, samples in region_samples.items():
        if not samples:
            raise EmptyRegion(f"region {region!r} has no samples")
        out[region] = math.fsum(s.sigma_mhz_per_s for s in samples) / len(samples)
    return out


def bin_width(region_samples):
    """Largest per-region mean sigma."""
    if not region_samples:
        raise EmptyRegion("no regions given")
    return max(region_mean_sigmas(region_samples).values())


@dataclass(frozen=True)
class RateHistogram:
    bin_width_mhz_per_s: float
    edges: np.ndarray
    counts: np.ndarray
    n_kept: int
    n_rejected: int = 0

    @property
    def centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def binned_std(self):
        """Standard deviation estimated from bin centers and counts."""
        n = self.counts.sum()
        if n == 0:
            return float("nan")
        c = self.centers
        mean = (c * self.counts).sum() / n
        return float(np.sqrt((self.counts * (c - mean) ** 2).sum() / n))

    def to_csv(self):
        rows = ["bin_center_mhz_per_s,count"]
        rows += [f"{c!r},{int(n)}" for c, n in zip(self.centers.tolist(), self.counts.tolist())]
        return "\n".join(rows) + "\n"


def histogram(samples, width, n_rejected=0, magnitude=False):
    """Uniform bins of ``width``, one centered on zero, spanning the data.

    Bin ``k`` covers ``[(k - 1/2) w, (k + 1/2) w)``.  ``samples`` may be
    WanderSample objects or plain rates.
    """
    if not width > 0:
        raise ValidationError("width", "must be > 0")
    rates = np.array([s.rate_mhz_per_s if isinstance(s, WanderSample) else float(s)
                      for s in samples], dtype=float)
    if magnitude:
        rates = np.abs(rates)
    if len(rates) == 0:
        return RateHistogram(float(width), np.empty(0), np.empty(0, dtype=np.int64), 0, n_rejected)
    k = np.floor(rates / width + 0.5).astype(np.int64)
    k_lo, k_hi = int(k.min()), int(k.max())
    counts = np.bincount(k - k_lo, minlength=k_hi - k_lo + 1).astype(np.int64)
    edges = (np.arange(k_lo, k_hi + 2) - 0.5) * width
    return RateHistogram(float(width), edges, counts, len(rates), n_rejected)
