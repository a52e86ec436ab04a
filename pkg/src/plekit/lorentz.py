"""Lorentzian line models and a bounded Levenberg-Marquardt fitter.

The line shape is amplitude-parameterised with the full width at half
maximum ``fwhm``::

    L(x) = baseline + amplitude * (fwhm/2)**2 / ((x - center)**2 + (fwhm/2)**2)

A doublet shares one constant baseline.  Inside the solver the doublet is
parameterised by ``(baseline, amplitude1, amplitude2, mean_center,
separation, fwhm1, fwhm2)`` so that the separation tolerance becomes a plain
box; the position windows then bound ``mean_center`` given ``separation``.
Trial steps are projected back onto the feasible set before evaluation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (ConstraintInfeasible, DegenerateData, EmptyGrid, NonConvergence,
                     PreconditionError, ValidationError)
from .model import PleLine
from .spectra import local_maxima, prominences

MAX_ITER = 200
FTOL = 1e-10
XTOL = 1e-10
LAMBDA0 = 1e-3
# internal bounds are pulled in by this fraction of the problem scale so that
# round-off in (mean, separation) -> (center1, center2) never leaves a window
_BOUND_MARGIN = 1e-12


@dataclass(frozen=True)
class LorentzParams:
    amplitude: float
    center: float
    fwhm: float
    baseline: float = 0.0

    NAMES = ("amplitude", "center", "fwhm", "baseline")

    def __post_init__(self):
        if not self.amplitude >= 0:
            raise ValidationError("amplitude", f"must be >= 0, got {self.amplitude}")
        if not self.fwhm > 0:
            raise ValidationError("fwhm", f"must be > 0, got {self.fwhm}")

    def as_array(self):
        return np.array([self.amplitude, self.center, self.fwhm, self.baseline], dtype=float)

    @classmethod
    def from_array(cls, a):
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class DoubleLorentzParams:
    """Two Lorentzians on one baseline; peak 1 is the lower-position one."""

    baseline: float
    amplitude1: float
    center1: float
    fwhm1: float
    amplitude2: float
    center2: float
    fwhm2: float

    NAMES = ("baseline", "amplitude1", "center1", "fwhm1", "amplitude2", "center2", "fwhm2")

    def __post_init__(self):
        for k in (1, 2):
            if not getattr(self, f"amplitude{k}") >= 0:
                raise ValidationError(f"amplitude{k}", "must be >= 0")
            if not getattr(self, f"fwhm{k}") > 0:
                raise ValidationError(f"fwhm{k}", "must be > 0")

    @property
    def p1(self):
        return LorentzParams(self.amplitude1, self.center1, self.fwhm1, self.baseline)

    @property
    def p2(self):
        return LorentzParams(self.amplitude2, self.center2, self.fwhm2, self.baseline)

    @property
    def mean_center(self):
        return 0.5 * (self.center1 + self.center2)

    @property
    def separation(self):
        return self.center2 - self.center1

    def as_array(self):
        return np.array([getattr(self, n) for n in self.NAMES], dtype=float)

    @classmethod
    def from_array(cls, a):
        return cls(*(float(v) for v in a))

    def shifted(self, dx):
        return DoubleLorentzParams(self.baseline, self.amplitude1, self.center1 + dx, self.fwhm1,
                                   self.amplitude2, self.center2 + dx, self.fwhm2)

    def scaled(self, k):
        return DoubleLorentzParams(self.baseline, self.amplitude1, self.center1 * k, self.fwhm1 * k,
                                   self.amplitude2, self.center2 * k, self.fwhm2 * k)


def _peak(x, amplitude, center, fwhm):
    hw2 = (0.5 * fwhm) ** 2
    return amplitude * hw2 / ((x - center) ** 2 + hw2)


def lorentz_eval(params: LorentzParams, x):
    return params.baseline + _peak(np.asarray(x, dtype=float), params.amplitude,
                                   params.center, params.fwhm)


def double_lorentz_eval(params: DoubleLorentzParams, x):
    x = np.asarray(x, dtype=float)
    return (params.baseline + _peak(x, params.amplitude1, params.center1, params.fwhm1)
            + _peak(x, params.amplitude2, params.center2, params.fwhm2))


def _peak_jac(x, amplitude, center, fwhm):
    """Columns d/d(amplitude, center, fwhm) of one Lorentzian."""
    h = 0.5 * fwhm
    u = x - center
    den = u * u + h * h
    shape = h * h / den
    d_amp = shape
    d_center = amplitude * 2.0 * h * h * u / (den * den)
    d_fwhm = amplitude * h * u * u / (den * den)
    return d_amp, d_center, d_fwhm


def lorentz_jacobian(params: LorentzParams, x):
    """Jacobian in ``LorentzParams.NAMES`` order, shape (len(x), 4)."""
    x = np.asarray(x, dtype=float)
    a, c, g = _peak_jac(x, params.amplitude, params.center, params.fwhm)
    return np.column_stack([a, c, g, np.ones_like(x)])


def double_lorentz_jacobian(params: DoubleLorentzParams, x):
    """Jacobian in ``DoubleLorentzParams.NAMES`` order, shape (len(x), 7)."""
    return _double_jac(np.asarray(x, dtype=float), params.as_array())


def _double_jac(x, a):
    _, A1, C1, G1, A2, C2, G2 = a
    a1, c1, g1 = _peak_jac(x, A1, C1, G1)
    a2, c2, g2 = _peak_jac(x, A2, C2, G2)
    return np.column_stack([np.ones_like(x), a1, c1, g1, a2, c2, g2])


# ---------------------------------------------------------------------------
# constraints

@dataclass(frozen=True)
class FitConstraints:
    """Feasible region for a doublet fit (all lengths in x units).

    ``separation_ref`` is the expected ``center2 - center1`` and must be
    positive; window 1 belongs to the lower-position peak.
    """

    pos_window_1: tuple
    pos_window_2: tuple
    max_fwhm: float
    separation_ref: float
    separation_tol_frac: float = 0.10

    def __post_init__(self):
        for name in ("pos_window_1", "pos_window_2"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not lo <= hi:
                raise ValidationError(name, "window is empty")
            object.__setattr__(self, name, (lo, hi))
        if not self.max_fwhm > 0:
            raise ValidationError("max_fwhm", "must be > 0")
        if not self.separation_ref > 0:
            raise ValidationError("separation_ref", "must be > 0")
        if not 0 < self.separation_tol_frac < 1:
            raise ValidationError("separation_tol_frac", "must lie in (0, 1)")
        for name in ("max_fwhm", "separation_ref", "separation_tol_frac"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def separation_band(self):
        tol = self.separation_tol_frac * self.separation_ref
        return self.separation_ref - tol, self.separation_ref + tol

    def separation_bounds(self):
        """Separations compatible with both windows and the tolerance band."""
        (lo1, hi1), (lo2, hi2) = self.pos_window_1, self.pos_window_2
        smin, smax = self.separation_band
        lo, hi = max(smin, lo2 - hi1), min(smax, hi2 - lo1)
        if lo > hi:
            raise ConstraintInfeasible(
                f"separation band [{smin:g}, {smax:g}] incompatible with windows")
        return lo, hi

    def mean_bounds(self, separation):
        (lo1, hi1), (lo2, hi2) = self.pos_window_1, self.pos_window_2
        h = 0.5 * separation
        return max(lo1 + h, lo2 - h), min(hi1 + h, hi2 - h)

    def violations(self, p: DoubleLorentzParams):
        """Names of the constraints ``p`` violates (exact comparisons)."""
        out = []
        if p.amplitude1 < 0 or p.amplitude2 < 0:
            out.append("amplitude")
        if not (0 < p.fwhm1 < self.max_fwhm and 0 < p.fwhm2 < self.max_fwhm):
            out.append("fwhm")
        if not self.pos_window_1[0] <= p.center1 <= self.pos_window_1[1]:
            out.append("pos_window_1")
        if not self.pos_window_2[0] <= p.center2 <= self.pos_window_2[1]:
            out.append("pos_window_2")
        if abs(p.separation - self.separation_ref) > self.separation_tol_frac * self.separation_ref:
            out.append("separation")
        return out

    def satisfied_by(self, p: DoubleLorentzParams):
        return not self.violations(p)

    def scaled(self, k):
        w1, w2 = self.pos_window_1, self.pos_window_2
        return FitConstraints((w1[0] * k, w1[1] * k), (w2[0] * k, w2[1] * k),
                              self.max_fwhm * k, self.separation_ref * k, self.separation_tol_frac)

    def shifted(self, dx):
        w1, w2 = self.pos_window_1, self.pos_window_2
        return FitConstraints((w1[0] + dx, w1[1] + dx), (w2[0] + dx, w2[1] + dx),
                              self.max_fwhm, self.separation_ref, self.separation_tol_frac)

    def to_dict(self):
        return {"pos_window_1": list(self.pos_window_1), "pos_window_2": list(self.pos_window_2),
                "max_fwhm": self.max_fwhm, "separation_ref": self.separation_ref,
                "separation_tol_frac": self.separation_tol_frac}

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(tuple(doc["pos_window_1"]), tuple(doc["pos_window_2"]),
                       doc["max_fwhm"], doc["separation_ref"],
                       doc.get("separation_tol_frac", 0.10))
        except (KeyError, TypeError) as exc:
            raise ValidationError("constraints", f"malformed constraint document ({exc})") from None


# ---------------------------------------------------------------------------
# results

@dataclass(frozen=True)
class FitResult:
    params: object
    std_errors: dict
    cost: float
    converged: bool
    n_iter: int
    covariance: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    cost_history: tuple = field(default=(), repr=False, compare=False)


def is_successful(result: Optional[FitResult]):
    """Filter deciding which single-line doublet fits the pipeline keeps.

    Converged, both center standard errors below the matching FWHM, and both
    amplitudes above three of their standard errors.
    """
    if result is None or not result.converged:
        return False
    p, se = result.params, result.std_errors
    try:
        return bool(se["center1"] < p.fwhm1 and se["center2"] < p.fwhm2
                    and p.amplitude1 > 3 * se["amplitude1"]
                    and p.amplitude2 > 3 * se["amplitude2"])
    except (KeyError, TypeError):
        return False


# ---------------------------------------------------------------------------
# solver

def _levenberg_marquardt(resid, jac, x0, project, bounds, max_iter=MAX_ITER,
                         ftol=FTOL, xtol=XTOL, lam0=LAMBDA0):
    """Projected, Marquardt-scaled LM on cost = sum(resid(x)**2).

    ``bounds(x)`` gives the current (lower, upper) box used to freeze
    parameters that sit on a bound while the gradient pushes outward.
    Returns (x, cost, n_iter, converged, history).
    """
    x = project(np.asarray(x0, dtype=float))
    r = resid(x)
    cost = float(r @ r)
    J = jac(x)
    history = [cost]
    lam = lam0
    n_iter = 0
    converged = False
    last_change = math.inf
    while n_iter < max_iter:
        if cost == 0.0:
            converged = True
            break
        g = J.T @ r
        lo, hi = bounds(x)
        free = ~(((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0)))
        if not free.any():
            converged = True
            break
        Jf = J[:, free]
        A = Jf.T @ Jf
        d = np.diag(A).copy()
        dmax = d.max()
        if dmax <= 0:
            converged = True
            break
        d = np.maximum(d, 1e-12 * dmax)
        n_iter += 1
        try:
            step_f = np.linalg.solve(A + lam * np.diag(d), -g[free])
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        step = np.zeros_like(x)
        step[free] = step_f
        x_new = project(x + step)
        r_new = resid(x_new)
        cost_new = float(r_new @ r_new)
        scale = np.sqrt(np.maximum(np.einsum("ij,ij->j", J, J), 0.0))
        rel_step = np.linalg.norm(scale * (x_new - x)) / (np.linalg.norm(scale * x) + xtol)
        if np.isfinite(cost_new) and cost_new < cost:
            last_change = (cost - cost_new) / cost
            x, r, cost = x_new, r_new, cost_new
            J = jac(x)
            history.append(cost)
            lam = max(lam / 10.0, 1e-20)
            if last_change < ftol or rel_step < xtol:
                converged = True
                break
        else:
            lam *= 10.0
            if rel_step < xtol or lam > 1e16:
                converged = True
                break
    if not converged and last_change < ftol:
        converged = True
    return x, cost, n_iter, converged, tuple(history)


POISSON_PASSES = 5


def _weights(ys, weights):
    """Static weights; the ``"poisson"`` mode is handled by ``_solve``."""
    if weights is None or isinstance(weights, str):
        if weights not in (None, "poisson"):
            raise ValidationError("weights", f"unknown weighting {weights!r}")
        return None
    w = np.asarray(weights, dtype=float)
    if w.shape != ys.shape or np.any(w < 0):
        raise ValidationError("weights", "must be non-negative and match ys")
    return w


def _solve(model, model_jac, ys, x0, project, bounds, weights, max_iter):
    """Run LM on ``model(t) - ys``, optionally reweighted.

    ``weights="poisson"`` weights by the inverse fitted model (floored at one
    count) and refits until the parameters settle.  Weighting by the observed
    counts instead would bias the baseline low.
    Returns (t, cost, n_iter, converged, history, sqrt_weights).
    """
    w = _weights(ys, weights)
    sw = None if w is None else np.sqrt(w)
    passes = POISSON_PASSES if weights == "poisson" else 0
    t = x0
    n_total = 0
    for k in range(passes + 1):
        def resid(t, sw=sw):
            r = model(t) - ys
            return r if sw is None else sw * r

        def jac(t, sw=sw):
            J = model_jac(t)
            return J if sw is None else J * sw[:, None]

        t_prev = t
        t, cost, n_iter, ok, hist = _levenberg_marquardt(
            resid, jac, t, project, bounds, max_iter=max_iter)
        n_total += n_iter
        if k == passes or not ok:
            break
        if k > 0 and np.allclose(t, t_prev, rtol=1e-8, atol=0):
            break
        sw = 1.0 / np.sqrt(np.maximum(model(t), 1.0))
    J = model_jac(t)
    if sw is not None:
        J = J * sw[:, None]
    return t, cost, n_total, ok, hist, J


def _covariance(J, cost, n):
    p = J.shape[1]
    s2 = cost / (n - p) if n > p else math.inf
    cov = np.linalg.pinv(J.T @ J) * s2
    return cov


def fit_single(xs, ys, init: LorentzParams, bounds=None, weights=None,
               max_iter=MAX_ITER, strict=True):
    """Fit one Lorentzian with a constant baseline.

    ``bounds`` is ``(lower, upper)``, each four values in
    ``LorentzParams.NAMES`` order.  Default: amplitude >= 0, fwhm > 0,
    center and baseline free.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1 or len(xs) < 5:
        raise PreconditionError("xs and ys must be 1-D of equal length >= 5")
    if np.ptp(ys) == 0:
        raise DegenerateData("ys is constant")
    span = float(np.ptp(xs))
    if bounds is None:
        lower = np.array([0.0, -np.inf, _BOUND_MARGIN * span, -np.inf])
        upper = np.full(4, np.inf)
    else:
        lower = np.asarray(bounds[0], dtype=float)
        upper = np.asarray(bounds[1], dtype=float)
        lower[2] = max(lower[2], _BOUND_MARGIN * span)
    x0 = init.as_array()
    if np.any(x0 < lower) or np.any(x0 > upper):
        raise PreconditionError("init outside bounds")
    def model(t):
        return t[3] + _peak(xs, t[0], t[1], t[2])

    def model_jac(t):
        return lorentz_jacobian(LorentzParams(*t), xs)

    def project(t):
        return np.clip(t, lower, upper)

    t, cost, n_iter, ok, hist, J = _solve(model, model_jac, ys, x0, project,
                                          lambda t: (lower, upper), weights, max_iter)
    if not ok and strict:
        raise NonConvergence(f"single Lorentzian fit did not converge in {n_iter} iterations")
    params = LorentzParams.from_array(t)
    cov = _covariance(J, cost, len(xs))
    se = dict(zip(LorentzParams.NAMES, np.sqrt(np.abs(np.diag(cov))).tolist()))
    return FitResult(params, se, cost, ok, n_iter, cov, hist)


# internal order: baseline, amplitude1, amplitude2, mean, separation, fwhm1, fwhm2
_TO_NATURAL = np.array([
    [1, 0, 0, 0, 0.0, 0, 0],
    [0, 1, 0, 0, 0.0, 0, 0],
    [0, 0, 0, 1, -0.5, 0, 0],
    [0, 0, 0, 0, 0.0, 1, 0],
    [0, 0, 1, 0, 0.0, 0, 0],
    [0, 0, 0, 1, 0.5, 0, 0],
    [0, 0, 0, 0, 0.0, 0, 1],
])


def _internal(p: DoubleLorentzParams):
    return np.array([p.baseline, p.amplitude1, p.amplitude2, p.mean_center,
                     p.separation, p.fwhm1, p.fwhm2])


def _natural(t):
    return DoubleLorentzParams.from_array(_TO_NATURAL @ t)


class _DoubleProblem:
    """Box geometry of the internal doublet parameterisation."""

    def __init__(self, constraints: FitConstraints):
        c = constraints
        (lo1, hi1), (lo2, hi2) = c.pos_window_1, c.pos_window_2
        self.margin = _BOUND_MARGIN * max(abs(lo1), abs(hi1), abs(lo2), abs(hi2), c.max_fwhm)
        m = self.margin
        s_lo, s_hi = c.separation_bounds()
        s_lo, s_hi = s_lo + m, s_hi - m
        if s_lo > s_hi:
            s_lo = s_hi = 0.5 * (s_lo + s_hi)
        self.c = c
        self.s_box = (s_lo, s_hi)
        self.g_box = (c.max_fwhm * _BOUND_MARGIN, c.max_fwhm * (1 - 4 * _BOUND_MARGIN))

    def mean_box(self, s):
        lo, hi = self.c.mean_bounds(s)
        lo, hi = lo + self.margin, hi - self.margin
        if lo > hi:
            lo = hi = 0.5 * (lo + hi)
        return lo, hi

    def bounds(self, t):
        mlo, mhi = self.mean_box(t[4])
        lower = np.array([-np.inf, 0.0, 0.0, mlo, self.s_box[0], self.g_box[0], self.g_box[0]])
        upper = np.array([np.inf, np.inf, np.inf, mhi, self.s_box[1], self.g_box[1], self.g_box[1]])
        return lower, upper

    def project(self, t):
        t = t.copy()
        t[1] = max(t[1], 0.0)
        t[2] = max(t[2], 0.0)
        t[4] = min(max(t[4], self.s_box[0]), self.s_box[1])
        mlo, mhi = self.mean_box(t[4])
        t[3] = min(max(t[3], mlo), mhi)
        t[5] = min(max(t[5], self.g_box[0]), self.g_box[1])
        t[6] = min(max(t[6], self.g_box[0]), self.g_box[1])
        return t


def project_params(params: DoubleLorentzParams, constraints: FitConstraints):
    """Nearest-by-coordinates feasible doublet (clamping in solver coordinates)."""
    prob = _DoubleProblem(constraints)
    return _natural(prob.project(_internal(params)))


def fit_double(line: PleLine, init: DoubleLorentzParams, constraints: FitConstraints,
               weights=None, max_iter=MAX_ITER, strict=True):
    """Constrained doublet fit of one PLE line (x = voltage).

    Raises PreconditionError if ``init`` violates ``constraints``,
    DegenerateData for constant counts, ConstraintInfeasible when windows
    and separation band cannot be met together, and NonConvergence (only if
    ``strict``) when the iteration cap is hit.
    """
    xs, ys = line.voltage, line.counts
    return fit_double_xy(xs, ys, init, constraints, weights, max_iter, strict)


def fit_double_xy(xs, ys, init, constraints, weights=None, max_iter=MAX_ITER, strict=True):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    bad = constraints.violations(init)
    if bad:
        raise PreconditionError(f"initial parameters violate: {', '.join(bad)}")
    if np.ptp(ys) == 0:
        raise DegenerateData("counts are constant")
    prob = _DoubleProblem(constraints)
    def model(t):
        h1 = t[3] - 0.5 * t[4]
        h2 = t[3] + 0.5 * t[4]
        return t[0] + _peak(xs, t[1], h1, t[5]) + _peak(xs, t[2], h2, t[6])

    def model_jac(t):
        return _double_jac(xs, _TO_NATURAL @ t) @ _TO_NATURAL

    t, cost, n_iter, ok, hist, J = _solve(model, model_jac, ys, _internal(init), prob.project,
                                          prob.bounds, weights, max_iter)
    if not ok and strict:
        raise NonConvergence(f"doublet fit did not converge in {n_iter} iterations")
    params = _natural(t)
    cov_int = _covariance(J, cost, len(xs))
    cov = _TO_NATURAL @ cov_int @ _TO_NATURAL.T
    se = dict(zip(DoubleLorentzParams.NAMES, np.sqrt(np.abs(np.diag(cov))).tolist()))
    se["mean_center"] = math.sqrt(abs(cov_int[3, 3]))
    se["separation"] = math.sqrt(abs(cov_int[4, 4]))
    return FitResult(params, se, cost, ok, n_iter, cov, hist)


# ---------------------------------------------------------------------------
# initial guess

def moving_average(y, width=5):
    """Centered moving average; windows shrink at the edges."""
    y = np.asarray(y, dtype=float)
    kernel = np.ones(width)
    num = np.convolve(y, kernel, mode="same")
    den = np.convolve(np.ones_like(y), kernel, mode="same")
    return num / den


def _half_width(xs, sm, i, level):
    """Distance between half-level crossings around index i (x units)."""
    n = len(sm)
    left = i
    while left > 0 and sm[left] > level:
        left -= 1
    right = i
    while right < n - 1 and sm[right] > level:
        right += 1
    return abs(xs[right] - xs[left])


def initial_guess(line: PleLine, constraints: FitConstraints) -> DoubleLorentzParams:
    """Feasible starting doublet for ``fit_double``.

    Centers go to the two most prominent local maxima of a 5-point moving
    average (equal prominences: lower index first).  A single maximum puts
    the partner peak ``separation_ref`` away on the side of the other
    window; with no maximum both centers sit ``separation_ref/2`` either side
    of the midpoint between the windows.  The result is clamped into the
    feasible set.
    """
    c = constraints
    order = np.argsort(line.voltage, kind="stable")
    xs = line.voltage[order]
    ys = line.counts[order]
    sm = moving_average(ys)
    baseline = float(np.median(sm))
    dx = float(np.min(np.diff(xs)))
    g_default = min(max(c.separation_ref / 4, 2 * dx), 0.5 * c.max_fwhm)

    maxima = local_maxima(sm)
    prom = prominences(sm, maxima)
    top = maxima[np.lexsort((maxima, -prom))][:2] if len(maxima) else maxima

    def peak_at(i):
        amp = max(float(sm[i]) - baseline, 0.0)
        g = _half_width(xs, sm, i, baseline + 0.5 * amp) if amp > 0 else g_default
        return xs[i], amp, min(max(g, 2 * dx), 0.5 * c.max_fwhm)

    def amp_near(x0):
        i = int(np.clip(np.searchsorted(xs, x0), 0, len(xs) - 1))
        return max(float(sm[i]) - baseline, 0.0)

    w1 = 0.5 * (c.pos_window_1[0] + c.pos_window_1[1])
    w2 = 0.5 * (c.pos_window_2[0] + c.pos_window_2[1])
    if len(top) >= 2:
        (x1, a1, g1), (x2, a2, g2) = sorted((peak_at(i) for i in top), key=lambda p: p[0])
    elif len(top) == 1:
        x, a, g = peak_at(top[0])
        d1 = max(c.pos_window_1[0] - x, 0.0, x - c.pos_window_1[1])
        d2 = max(c.pos_window_2[0] - x, 0.0, x - c.pos_window_2[1])
        if d1 <= d2:
            x1, a1, g1 = x, a, g
            x2, a2, g2 = x + c.separation_ref, amp_near(x + c.separation_ref), g
        else:
            x2, a2, g2 = x, a, g
            x1, a1, g1 = x - c.separation_ref, amp_near(x - c.separation_ref), g
    else:
        mid = 0.5 * (w1 + w2)
        x1, x2 = mid - 0.5 * c.separation_ref, mid + 0.5 * c.separation_ref
        a1 = a2 = max(float(np.max(sm)) - baseline, 0.0)
        g1 = g2 = g_default
    guess = DoubleLorentzParams(baseline, a1, float(x1), g1, a2, float(x2), g2)
    return project_params(guess, c)


# ---------------------------------------------------------------------------
# verification oracle

def grid_oracle(xs, ys, param_grid, chunk=4096):
    """Exhaustive search over candidate parameter tuples.

    Rows of ``param_grid`` are either 4-tuples (amplitude, center, fwhm,
    baseline) for a single line or 7-tuples in ``DoubleLorentzParams.NAMES``
    order.  Returns ``(best_row, best_cost)``; ties go to the first row.
    The model is evaluated here directly, independent of the fitter.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    grid = np.atleast_2d(np.asarray(param_grid, dtype=float))
    if grid.size == 0 or len(grid) == 0:
        raise EmptyGrid("parameter grid is empty")
    if grid.shape[1] not in (4, 7):
        raise ValidationError("param_grid", "rows must have 4 or 7 entries")
    best_cost = math.inf
    best_row = None
    x = xs[None, :]
    for start in range(0, len(grid), chunk):
        g = grid[start:start + chunk]
        if g.shape[1] == 4:
            a, c, w, b = (g[:, k:k + 1] for k in range(4))
            model = b + a / (1.0 + (2.0 * (x - c) / w) ** 2)
        else:
            b, a1, c1, w1, a2, c2, w2 = (g[:, k:k + 1] for k in range(7))
            model = (b + a1 / (1.0 + (2.0 * (x - c1) / w1) ** 2)
                     + a2 / (1.0 + (2.0 * (x - c2) / w2) ** 2))
        costs = np.sum((ys[None, :] - model) ** 2, axis=1)
        k = int(np.argmin(costs))
        if costs[k] < best_cost:
            best_cost = float(costs[k])
            best_row = g[k].copy()
    return best_row, best_cost


def refinement_grid(center, steps, points=5):
    """Cartesian grid of ``points`` values per axis centred on ``center``."""
    center = np.asarray(center, dtype=float)
    steps = np.asarray(steps, dtype=float)
    offsets = np.arange(points) - (points - 1) / 2
    axes = [center[k] + offsets * steps[k] for k in range(len(center))]
    return np.array(list(itertools.product(*axes)))
