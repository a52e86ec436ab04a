"""AFM height-map levelling and roughness.

Pipeline: per-scanline offset removal, least-squares 2-D polynomial
background subtraction on coordinates normalised to [-1, 1], then Rq / Ra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficient, ValidationError
from .model import AfmMap

ROW_MODES = ("none", "median", "median_diff")


@dataclass(frozen=True)
class RoughnessResult:
    rq_pm: float
    ra_pm: float
    degree: int = -1
    row_correction: str = "none"

    def to_dict(self):
        return {"rq_pm": self.rq_pm, "ra_pm": self.ra_pm, "degree": self.degree,
                "row_correction": self.row_correction}


def step_line_correct(afm: AfmMap, mode="median") -> AfmMap:
    """Remove scanline-to-scanline offsets.

    ``median`` subtracts each row's median.  ``median_diff`` shifts each row
    by the cumulative median of row-to-row differences, leaving row 0 as is.
    """
    h = afm.heights_nm
    if mode == "none":
        return afm
    if mode == "median":
        return afm.with_heights(h - np.median(h, axis=1, keepdims=True))
    if mode == "median_diff":
        steps = np.median(np.diff(h, axis=0), axis=1)
        offsets = np.concatenate(([0.0], np.cumsum(steps)))
        return afm.with_heights(h - offsets[:, None])
    raise ValidationError("row_correction", f"unknown mode {mode!r}; choose from {ROW_MODES}")


def poly_terms(degree):
    """Exponent pairs (a, b) of x**a * y**b with a + b <= degree."""
    return [(a, total - a) for total in range(degree + 1) for a in range(total, -1, -1)]


def normalized_coords(nx, ny):
    return np.linspace(-1.0, 1.0, nx), np.linspace(-1.0, 1.0, ny)


def poly_design(nx, ny, degree):
    x, y = normalized_coords(nx, ny)
    X, Y = np.meshgrid(x, y)
    return np.column_stack([(X ** a * Y ** b).ravel() for a, b in poly_terms(degree)])


def poly_surface(coeffs, nx, ny):
    """Evaluate a polynomial given in ``poly_terms`` order on the normalised grid."""
    coeffs = np.asarray(coeffs, dtype=float)
    degree = 0
    while len(poly_terms(degree)) < len(coeffs):
        degree += 1
    if len(poly_terms(degree)) != len(coeffs):
        raise ValidationError("poly_coeffs", f"{len(coeffs)} is not a triangular term count")
    return (poly_design(nx, ny, degree) @ coeffs).reshape(ny, nx)


def poly_fit(afm: AfmMap, degree):
    if degree < 0:
        raise ValidationError("degree", "must be >= 0")
    A = poly_design(afm.nx, afm.ny, degree)
    if A.shape[1] >= A.shape[0]:
        raise RankDeficient(f"{A.shape[1]} polynomial terms for {A.shape[0]} pixels")
    coeffs, _, rank, _ = np.linalg.lstsq(A, afm.heights_nm.ravel(), rcond=None)
    if rank < A.shape[1]:
        raise RankDeficient(f"design matrix rank {rank} < {A.shape[1]}")
    return coeffs, A


def poly_detrend(afm: AfmMap, degree=2) -> AfmMap:
    coeffs, A = poly_fit(afm, degree)
    resid = afm.heights_nm.ravel() - A @ coeffs
    return afm.with_heights(resid.reshape(afm.ny, afm.nx))


def roughness(afm: AfmMap, degree=-1, row_correction="none") -> RoughnessResult:
    """Rq and Ra (pm) of an already levelled map; heights are in nm."""
    z = afm.heights_nm
    scale = float(np.max(np.abs(z))) if z.size else 0.0
    # scaling first keeps z*z from underflowing (or overflowing)
    rq = scale * float(np.sqrt(np.mean((z / scale) ** 2))) * 1000.0 if scale > 0 else 0.0
    ra = float(np.mean(np.abs(z))) * 1000.0
    return RoughnessResult(rq, ra, degree, row_correction)


def analyze(afm: AfmMap, degree=2, row_correction="median") -> RoughnessResult:
    leveled = poly_detrend(step_line_correct(afm, row_correction), degree)
    return roughness(leveled, degree, row_correction)
