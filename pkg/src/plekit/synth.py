"""Synthetic data with known ground truth.

Random numbers come from numpy's ``PCG64`` bit generator (PCG XSL-RR 128/64,
O'Neill 2014) wrapped in ``numpy.random.Generator``; only ``random`` and
``standard_normal`` are drawn from it.  Poisson counts are produced here by
CDF inversion for means below 30 and by a rounded normal approximation
``floor(mu + sqrt(mu) z + 1/2)`` (clipped at 0) above, so the output does
not depend on numpy's internal Poisson algorithm.

PLE scans: line ``i`` carries a doublet centred at ``W_i`` MHz, where
``W_0 = 0`` and ``W_i - W_{i-1} ~ N(0, walk_std)``.  All walk steps are
drawn first, then the counts line by line.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .afm import poly_surface
from .errors import ConfigError
from .lorentz import FitConstraints
from .model import AfmMap, PleLine, PleScan, ScanMeta, Spectrum

POISSON_NORMAL_ABOVE = 30.0


def make_rng(seed):
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= seed < 2 ** 64:
        raise ConfigError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return np.random.Generator(np.random.PCG64(int(seed)))


def poisson(rng, mean):
    """Poisson variates with the given means (see module docstring)."""
    mean = np.asarray(mean, dtype=float)
    if np.any(mean < 0) or not np.all(np.isfinite(mean)):
        raise ConfigError("Poisson means must be finite and >= 0")
    u = rng.random(mean.shape)
    z = rng.standard_normal(mean.shape)
    out = np.empty(mean.shape)
    big = mean >= POISSON_NORMAL_ABOVE
    out[big] = np.maximum(np.floor(mean[big] + np.sqrt(mean[big]) * z[big] + 0.5), 0.0)
    lam = mean[~big]
    uu = u[~big]
    k = np.zeros(lam.shape)
    p = np.exp(-lam)
    cdf = p.copy()
    active = uu > cdf
    # the cap only matters when round-off keeps the summed CDF below u
    cap = lam + 40.0 * np.sqrt(lam) + 60.0
    while active.any():
        k[active] += 1
        p[active] *= lam[active] / k[active]
        cdf[active] += p[active]
        active &= (uu > cdf) & (k < cap)
    out[~big] = k
    return out


@dataclass(frozen=True)
class PleSynthConfig:
    fwhm_mhz: float = 60.0
    splitting_mhz: float = 1000.0
    mhz_per_volt: float = 1000.0
    n_lines: int = 50
    samples_per_line: int = 500
    scan_span_v: float = 3.0
    peak_counts: float = 100.0
    background_counts: float = 5.0
    walk_std_mhz_per_line: float = 0.0
    line_period_s: float = 2.0
    seed: int = 0
    noiseless: bool = False
    center_v: float = 0.0
    region_id: str = "synthetic"

    def __post_init__(self):
        positive = ("fwhm_mhz", "splitting_mhz", "mhz_per_volt", "scan_span_v",
                    "peak_counts", "line_period_s")
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be > 0, got {v!r}")
        if not self.background_counts >= 0:
            raise ConfigError("background_counts must be >= 0")
        if not self.walk_std_mhz_per_line >= 0:
            raise ConfigError("walk_std_mhz_per_line must be >= 0")
        if not (isinstance(self.n_lines, int) and self.n_lines >= 1):
            raise ConfigError("n_lines must be a positive integer")
        if not (isinstance(self.samples_per_line, int) and self.samples_per_line >= 8):
            raise ConfigError("samples_per_line must be an integer >= 8")
        make_rng(self.seed)

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown PLE config keys: {sorted(unknown)}")
        return cls(**doc)

    def suggested_constraints(self, window_frac=0.3, tol_frac=0.10):
        """Position windows +- ``window_frac`` splitting around the nominal peaks."""
        sep = self.splitting_mhz / self.mhz_per_volt
        half = window_frac * sep
        c1, c2 = self.center_v - sep / 2, self.center_v + sep / 2
        return FitConstraints((c1 - half, c1 + half), (c2 - half, c2 + half),
                              self.scan_span_v, sep, tol_frac)


@dataclass(frozen=True)
class GroundTruth:
    walk_mhz: np.ndarray
    centers_v: np.ndarray
    t0_s: np.ndarray
    true_fwhm_mhz: float
    true_fwhm_v: float
    splitting_mhz: float
    mhz_per_volt: float
    config: dict = field(default_factory=dict)

    @property
    def true_rates_mhz_per_s(self):
        return np.diff(self.walk_mhz) / np.diff(self.t0_s)

    def to_dict(self):
        return {
            "centers_mhz": self.walk_mhz.tolist(),
            "centers_v": self.centers_v.tolist(),
            "t0_s": self.t0_s.tolist(),
            "true_fwhm_mhz": self.true_fwhm_mhz,
            "true_fwhm_v": self.true_fwhm_v,
            "splitting_mhz": self.splitting_mhz,
            "mhz_per_volt": self.mhz_per_volt,
            "true_rates_mhz_per_s": self.true_rates_mhz_per_s.tolist(),
            "config": self.config,
        }


def ple_mean_counts(config: PleSynthConfig, voltage, center_v):
    """Expected counts of one line whose doublet is centred at ``center_v``."""
    sep_v = config.splitting_mhz / config.mhz_per_volt
    hw2 = (0.5 * config.fwhm_mhz / config.mhz_per_volt) ** 2
    lor = 0.0
    for c in (center_v - sep_v / 2, center_v + sep_v / 2):
        lor = lor + config.peak_counts * hw2 / ((voltage - c) ** 2 + hw2)
    return config.background_counts + lor


def synth_ple(config: PleSynthConfig):
    rng = make_rng(config.seed)
    n = config.n_lines
    steps = rng.standard_normal(n - 1) * config.walk_std_mhz_per_line
    walk = np.concatenate(([0.0], np.cumsum(steps)))
    centers_v = config.center_v + walk / config.mhz_per_volt
    half = 0.5 * config.scan_span_v
    voltage = np.linspace(config.center_v - half, config.center_v + half, config.samples_per_line)
    t0 = np.arange(n) * config.line_period_s
    lines = []
    for i in range(n):
        mean = ple_mean_counts(config, voltage, centers_v[i])
        counts = mean if config.noiseless else poisson(rng, mean)
        lines.append(PleLine(i, t0[i], voltage, counts))
    scan = PleScan(tuple(lines), ScanMeta(config.region_id, config.splitting_mhz,
                                          notes=f"synthetic, seed {config.seed}"))
    truth = GroundTruth(walk, centers_v, t0, config.fwhm_mhz,
                        config.fwhm_mhz / config.mhz_per_volt, config.splitting_mhz,
                        config.mhz_per_volt, asdict(config))
    return scan, truth


DEFAULT_SPECTRUM_GRID = (840.0, 940.0, 501)


def synth_spectrum(peaks, background=0.0, noise_std=0.0, grid=DEFAULT_SPECTRUM_GRID,
                   seed=0, resolution_nm=0.35) -> Spectrum:
    """Lorentzian peaks ``(center_nm, height, fwhm_nm)`` on a flat background.

    ``grid`` is either an explicit wavelength array or ``(start, stop, n)``.
    """
    if isinstance(grid, tuple) and len(grid) == 3:
        start, stop, num = grid
        if not (stop > start and int(num) >= 3):
            raise ConfigError("grid must be (start, stop, n) with stop > start, n >= 3")
        w = np.linspace(start, stop, int(num))
    else:
        w = np.asarray(grid, dtype=float)
        if w.ndim != 1 or len(w) < 3 or np.any(np.diff(w) <= 0):
            raise ConfigError("grid must be strictly increasing with >= 3 points")
    if noise_std < 0:
        raise ConfigError("noise_std must be >= 0")
    y = np.full(len(w), float(background))
    for peak in peaks:
        try:
            c, h, g = (float(v) for v in peak)
        except (TypeError, ValueError):
            raise ConfigError(f"peak must be (center_nm, height, fwhm_nm), got {peak!r}") from None
        if not g > 0:
            raise ConfigError("peak width must be > 0")
        y += h * (0.5 * g) ** 2 / ((w - c) ** 2 + (0.5 * g) ** 2)
    rng = make_rng(seed)
    if noise_std > 0:
        y = y + noise_std * rng.standard_normal(len(w))
    return Spectrum(w, y, resolution_nm)


def synth_afm(nx, ny, sigma_pm, poly_coeffs=(), row_offsets_std_pm=0.0, seed=0,
              dx_um=None, dy_um=None) -> AfmMap:
    """Polynomial background (nm, normalised coordinates) + row offsets + white roughness."""
    if not (isinstance(nx, int) and isinstance(ny, int) and nx >= 4 and ny >= 4):
        raise ConfigError("nx and ny must be integers >= 4")
    if sigma_pm < 0 or row_offsets_std_pm < 0:
        raise ConfigError("standard deviations must be >= 0")
    rng = make_rng(seed)
    h = np.zeros((ny, nx))
    if len(poly_coeffs):
        h += poly_surface(poly_coeffs, nx, ny)
    offsets = rng.standard_normal(ny) * row_offsets_std_pm / 1000.0
    noise = rng.standard_normal((ny, nx)) * sigma_pm / 1000.0
    if row_offsets_std_pm > 0:
        h += offsets[:, None]
    if sigma_pm > 0:
        h += noise
    # default pitch: a 5 um x 5 um scan area
    dx = dx_um if dx_um is not None else 5.0 / nx
    dy = dy_um if dy_um is not None else 5.0 / ny
    return AfmMap(h, dx, dy)
