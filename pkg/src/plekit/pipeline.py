"""Linewidth extraction from multi-line PLE scans.

Two estimators are provided.  ``summed_linewidth`` adds all lines and fits
the sum; it is only meaningful when the lines do not wander.
``aligned_linewidth`` first fits every line on its own, rigidly shifts the
successfully fitted lines onto their common mean position, sums them and
fits again.  Both convert the fitted widths from volts to MHz using the
fitted A1-A2 separation and the known splitting, and attach a flat 7.5 %
calibration error.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (DegenerateData, GridMismatch, NonConvergence, NonPositiveSeparation,
                     PreconditionError, TooFewSuccessfulLines)
from .lorentz import (FitConstraints, FitResult, fit_double, fit_double_xy, initial_guess,
                      is_successful, moving_average)
from .model import PleLine, PleScan
from .spectra import local_maxima, prominences

LINEWIDTH_ERROR_FRACTION = 0.075


@dataclass(frozen=True)
class CalibrationFactor:
    mhz_per_volt: float
    derived_from_separation_v: float
    splitting_mhz: float


def calibrate(separation_v, splitting_mhz) -> CalibrationFactor:
    if not separation_v > 0:
        raise NonPositiveSeparation(f"separation must be > 0 V, got {separation_v}")
    if not splitting_mhz > 0:
        raise NonPositiveSeparation(f"splitting must be > 0 MHz, got {splitting_mhz}")
    return CalibrationFactor(splitting_mhz / separation_v, float(separation_v), float(splitting_mhz))


def attach_error(fwhm_mhz):
    """Flat relative error assigned to every extracted linewidth."""
    if fwhm_mhz < 0:
        raise PreconditionError("fwhm must be >= 0")
    return LINEWIDTH_ERROR_FRACTION * fwhm_mhz


@dataclass(frozen=True)
class LinewidthResult:
    fwhm_a1_mhz: float
    fwhm_a2_mhz: float
    error_a1_mhz: float
    error_a2_mhz: float
    n_lines_total: int
    n_lines_used: int
    method: str
    calibration: CalibrationFactor
    final_fit: Optional[FitResult] = field(default=None, compare=False, repr=False)
    line_fits: tuple = field(default=(), compare=False, repr=False)
    a1_is_low: bool = True

    def to_dict(self, verbose=False):
        out = {
            "method": self.method,
            "fwhm_a1_mhz": self.fwhm_a1_mhz,
            "error_a1_mhz": self.error_a1_mhz,
            "fwhm_a2_mhz": self.fwhm_a2_mhz,
            "error_a2_mhz": self.error_a2_mhz,
            "n_lines_total": self.n_lines_total,
            "n_lines_used": self.n_lines_used,
            "mhz_per_volt": self.calibration.mhz_per_volt,
        }
        if verbose and self.final_fit is not None:
            k = self.calibration.mhz_per_volt
            se = self.final_fit.std_errors
            lo, hi = ("fwhm1", "fwhm2") if self.a1_is_low else ("fwhm2", "fwhm1")
            out["statistical_error_a1_mhz"] = se[lo] * k
            out["statistical_error_a2_mhz"] = se[hi] * k
            out["separation_v"] = self.calibration.derived_from_separation_v
            out["splitting_mhz"] = self.calibration.splitting_mhz
            out["final_fit"] = {
                "model": "double_lorentzian",
                "params": dict(zip(self.final_fit.params.NAMES,
                                   self.final_fit.params.as_array().tolist())),
                "std_errors": dict(se),
                "cost": self.final_fit.cost,
                "n_iter": self.final_fit.n_iter,
            }
            if self.method == "aligned":
                out["resampling"] = "linear interpolation; samples shifted off-grid dropped"
            out["a1_peak"] = "lower_voltage" if self.a1_is_low else "higher_voltage"
        return out


def _result(fit, scan, method, n_used, a1_is_low, line_fits=()):
    cal = calibrate(fit.params.separation, scan.meta.splitting_mhz)
    w_low = fit.params.fwhm1 * cal.mhz_per_volt
    w_high = fit.params.fwhm2 * cal.mhz_per_volt
    a1, a2 = (w_low, w_high) if a1_is_low else (w_high, w_low)
    return LinewidthResult(a1, a2, attach_error(a1), attach_error(a2), len(scan), n_used,
                           method, cal, fit, tuple(line_fits), a1_is_low)


def _fit_xy(xs, ys, constraints, weights):
    line = PleLine(0, 0.0, xs, ys)
    return fit_double(line, initial_guess(line, constraints), constraints, weights=weights)


def summed_linewidth(scan: PleScan, constraints: FitConstraints, weights=None,
                     a1_is_low=True) -> LinewidthResult:
    if not scan.has_common_grid:
        raise GridMismatch("summed estimator needs all lines on one voltage grid")
    total = np.sum([ln.counts for ln in scan.lines], axis=0)
    fit = _fit_xy(scan.lines[0].voltage, total, constraints, weights)
    return _result(fit, scan, "summed", len(scan), a1_is_low)


def fit_line(line: PleLine, constraints: FitConstraints, weights=None):
    """Doublet fit of a single line, or None when it cannot be fitted."""
    try:
        return fit_double(line, initial_guess(line, constraints), constraints,
                          weights=weights, strict=False)
    except (DegenerateData, NonConvergence, PreconditionError):
        return None


def fit_lines(scan: PleScan, constraints: FitConstraints, weights=None, workers=1):
    """Per-line fits in scan order; ``workers > 1`` runs them on a thread pool."""
    constraints.separation_bounds()  # infeasible constraints fail once, up front
    if workers and workers > 1 and len(scan) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda ln: fit_line(ln, constraints, weights), scan.lines))
    return [fit_line(ln, constraints, weights) for ln in scan.lines]


def _resample(xs, ys, shift, grid):
    xs = np.asarray(xs, dtype=float) + shift
    ys = np.asarray(ys, dtype=float)
    if xs[0] > xs[-1]:
        xs, ys = xs[::-1], ys[::-1]
    out = np.interp(grid, xs, ys)
    inside = (grid >= xs[0]) & (grid <= xs[-1])
    out[~inside] = 0.0
    return out, inside


def shift_onto_grid(xs, ys, shift, grid):
    """Resample ``ys`` at ``xs + shift`` onto ``grid``; off-grid points give 0."""
    return _resample(xs, ys, shift, grid)[0]


def align_and_sum(scan: PleScan, fits, grid=None):
    """Rigidly align the successfully fitted lines and sum them.

    Returns ``(grid, summed_counts, used, covered)``.  The alignment target
    is the mean fitted mean-center of the used lines; ``covered`` marks grid
    points that every used line reaches after its shift.
    """
    used = [i for i, f in enumerate(fits) if is_successful(f)]
    if grid is None:
        grid = scan.lines[0].voltage
    total = np.zeros(len(grid))
    covered = np.ones(len(grid), dtype=bool)
    if not used:
        return grid, total, used, covered
    centers = np.array([fits[i].params.mean_center for i in used])
    target = float(np.mean(centers))
    for i, c in zip(used, centers):
        ln = scan.lines[i]
        out, inside = _resample(ln.voltage, ln.counts, target - c, grid)
        total += out
        covered &= inside
    return grid, total, used, covered


def aligned_linewidth(scan: PleScan, constraints: FitConstraints, weights=None,
                      a1_is_low=True, workers=1, line_fits=None) -> LinewidthResult:
    """Align-then-sum estimator.

    The final doublet fit only uses grid points covered by every aligned
    line, so edge samples that some lines shifted off the grid do not
    distort the baseline.
    """
    fits = line_fits if line_fits is not None else fit_lines(scan, constraints, weights, workers)
    grid, total, used, covered = align_and_sum(scan, fits)
    if len(used) < 2:
        raise TooFewSuccessfulLines(
            f"{len(used)} of {len(scan)} line fits succeeded; need at least 2")
    xs, ys = grid[covered], total[covered]
    if len(xs) < 8:
        raise TooFewSuccessfulLines("aligned lines share fewer than 8 grid points")
    fit = fit_double_xy(xs, ys, initial_guess(PleLine(0, 0.0, xs, ys), constraints),
                        constraints, weights=weights)
    return _result(fit, scan, "aligned", len(used), a1_is_low, fits)


def auto_constraints(scan: PleScan, window_frac=0.25, tol_frac=0.10) -> FitConstraints:
    """Constraints derived from the scan itself when none are supplied.

    The two most prominent maxima of the smoothed, summed counts give the
    reference separation; each position window is that peak
    +- ``window_frac`` of the separation.  ``max_fwhm`` is the scanned
    voltage interval.
    """
    grid = scan.lines[0].voltage
    total = np.zeros(len(grid))
    for ln in scan.lines:
        total += shift_onto_grid(ln.voltage, ln.counts, 0.0, grid)
    order = np.argsort(grid, kind="stable")
    xs, sm = grid[order], moving_average(total[order])
    peaks = local_maxima(sm)
    if len(peaks) < 2:
        raise DegenerateData("cannot locate two peaks to derive fit constraints")
    prom = prominences(sm, peaks)
    top = np.sort(peaks[np.lexsort((peaks, -prom))][:2])
    x1, x2 = xs[top[0]], xs[top[1]]
    sep = x2 - x1
    half = window_frac * sep
    return FitConstraints((x1 - half, x1 + half), (x2 - half, x2 + half),
                          float(xs[-1] - xs[0]), sep, tol_frac)
