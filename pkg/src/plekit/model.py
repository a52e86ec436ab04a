"""Domain types and their file formats.

Formats
-------
scan JSON::

    {"meta": {"region_id": str, "splitting_mhz": num,
              "excitation_power_nw": num | null, "notes": str | null},
     "lines": [{"index": int, "t0_s": num, "voltage_v": [...], "counts": [...]}, ...]}

spectrum CSV: header ``wavelength_nm,intensity``, one sample per row.

AFM text: first line ``nx ny dx_um dy_um``, then ``ny`` rows of ``nx``
whitespace separated heights in nm.

All containers are immutable: arrays are copied and flagged read-only.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import IoError, ParseError, ValidationError

DEFAULT_SPLITTING_MHZ = 1000.0
DEFAULT_RESOLUTION_NM = 0.35
MIN_LINE_SAMPLES = 8


def _frozen(values, name, dtype=float):
    try:
        arr = np.array(values, dtype=dtype, copy=True)
    except (TypeError, ValueError) as exc:
        raise ValidationError(name, f"not numeric ({exc})") from None
    arr.flags.writeable = False
    return arr


def _strict_direction(x):
    """+1 for strictly increasing, -1 for strictly decreasing, 0 otherwise."""
    d = np.diff(x)
    if np.all(d > 0):
        return 1
    if np.all(d < 0):
        return -1
    return 0


@dataclass(frozen=True, eq=False)
class PleLine:
    """Photon counts recorded against the laser tuning voltage during one sweep."""

    index: int
    t0: float
    voltage: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        v = _frozen(self.voltage, "voltage")
        c = _frozen(self.counts, "counts")
        if v.ndim != 1 or c.ndim != 1:
            raise ValidationError("voltage", "must be one-dimensional")
        if len(v) != len(c):
            raise ValidationError("counts", f"length {len(c)} != voltage length {len(v)}")
        if len(v) < MIN_LINE_SAMPLES:
            raise ValidationError("voltage", f"need at least {MIN_LINE_SAMPLES} samples")
        if not np.all(np.isfinite(v)) or _strict_direction(v) == 0:
            raise ValidationError("voltage", "must be finite and strictly monotone")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise ValidationError("counts", "must be finite and non-negative")
        if not math.isfinite(self.t0):
            raise ValidationError("t0", "must be finite")
        object.__setattr__(self, "index", int(self.index))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "voltage", v)
        object.__setattr__(self, "counts", c)

    @property
    def direction(self):
        return _strict_direction(self.voltage)

    @property
    def span(self):
        return float(abs(self.voltage[-1] - self.voltage[0]))

    def __eq__(self, other):
        if not isinstance(other, PleLine):
            return NotImplemented
        return (self.index == other.index and self.t0 == other.t0
                and np.array_equal(self.voltage, other.voltage)
                and np.array_equal(self.counts, other.counts))


@dataclass(frozen=True)
class ScanMeta:
    region_id: str = ""
    splitting_mhz: float = DEFAULT_SPLITTING_MHZ
    excitation_power_nw: Optional[float] = None
    notes: Optional[str] = None

    def __post_init__(self):
        if not (isinstance(self.splitting_mhz, (int, float))
                and math.isfinite(self.splitting_mhz) and self.splitting_mhz > 0):
            raise ValidationError("splitting_mhz", "must be a positive number")
        object.__setattr__(self, "splitting_mhz", float(self.splitting_mhz))


@dataclass(frozen=True, eq=False)
class PleScan:
    lines: tuple
    meta: ScanMeta = field(default_factory=ScanMeta)

    def __post_init__(self):
        lines = tuple(self.lines)
        if not lines:
            raise ValidationError("lines", "scan has no lines")
        if not all(isinstance(ln, PleLine) for ln in lines):
            raise ValidationError("lines", "entries must be PleLine")
        t0 = np.array([ln.t0 for ln in lines])
        if np.any(np.diff(t0) <= 0):
            raise ValidationError("t0", "line start times must be strictly increasing")
        if len({ln.direction for ln in lines}) != 1:
            raise ValidationError("voltage", "sweep direction differs between lines")
        object.__setattr__(self, "lines", lines)

    def __len__(self):
        return len(self.lines)

    @property
    def t0(self):
        return np.array([ln.t0 for ln in self.lines])

    @property
    def has_common_grid(self):
        v0 = self.lines[0].voltage
        return all(np.array_equal(ln.voltage, v0) for ln in self.lines[1:])

    def scaled(self, k):
        """Copy with every voltage axis multiplied by ``k``."""
        return PleScan(tuple(PleLine(ln.index, ln.t0, ln.voltage * k, ln.counts)
                             for ln in self.lines), self.meta)

    def __eq__(self, other):
        if not isinstance(other, PleScan):
            return NotImplemented
        return (self.meta == other.meta and len(self.lines) == len(other.lines)
                and all(a == b for a, b in zip(self.lines, other.lines)))


@dataclass(frozen=True, eq=False)
class Spectrum:
    wavelength_nm: np.ndarray
    intensity: np.ndarray
    resolution_nm: float = DEFAULT_RESOLUTION_NM

    def __post_init__(self):
        w = _frozen(self.wavelength_nm, "wavelength_nm")
        y = _frozen(self.intensity, "intensity")
        if w.ndim != 1 or w.shape != y.shape:
            raise ValidationError("intensity", "length differs from wavelength_nm")
        if not np.all(np.isfinite(w)) or np.any(np.diff(w) <= 0):
            raise ValidationError("wavelength_nm", "must be finite and strictly increasing")
        if not np.all(np.isfinite(y)):
            raise ValidationError("intensity", "must be finite")
        if not (math.isfinite(self.resolution_nm) and self.resolution_nm > 0):
            raise ValidationError("resolution_nm", "must be positive")
        object.__setattr__(self, "wavelength_nm", w)
        object.__setattr__(self, "intensity", y)
        object.__setattr__(self, "resolution_nm", float(self.resolution_nm))

    def __len__(self):
        return len(self.wavelength_nm)

    def __eq__(self, other):
        if not isinstance(other, Spectrum):
            return NotImplemented
        return (self.resolution_nm == other.resolution_nm
                and np.array_equal(self.wavelength_nm, other.wavelength_nm)
                and np.array_equal(self.intensity, other.intensity))


@dataclass(frozen=True, eq=False)
class AfmMap:
    """Height grid with ``ny`` rows (slow axis) of ``nx`` samples (fast axis)."""

    heights_nm: np.ndarray
    dx_um: float = 1.0
    dy_um: float = 1.0

    def __post_init__(self):
        h = _frozen(self.heights_nm, "heights_nm")
        if h.ndim != 2:
            raise ValidationError("heights_nm", "must be two-dimensional")
        ny, nx = h.shape
        if nx < 4 or ny < 4:
            raise ValidationError("heights_nm", f"grid {nx}x{ny} smaller than 4x4")
        if not np.all(np.isfinite(h)):
            raise ValidationError("heights_nm", "must be finite")
        for name in ("dx_um", "dy_um"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValidationError(name, "pixel pitch must be positive")
            object.__setattr__(self, name, float(val))
        object.__setattr__(self, "heights_nm", h)

    @property
    def nx(self):
        return self.heights_nm.shape[1]

    @property
    def ny(self):
        return self.heights_nm.shape[0]

    def with_heights(self, heights):
        return AfmMap(heights, self.dx_um, self.dy_um)

    def __eq__(self, other):
        if not isinstance(other, AfmMap):
            return NotImplemented
        return (self.dx_um == other.dx_um and self.dy_um == other.dy_um
                and np.array_equal(self.heights_nm, other.heights_nm))


# ---------------------------------------------------------------------------
# file helpers

def atomic_write_text(path, text):
    """Write ``text`` to ``path`` through a temp file and rename.

    Readers never see a half-written file; on failure nothing is left behind.
    """
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise IoError(f"cannot write {path}: {exc}") from None


def _read_text(path):
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from None


def _num(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{name}: expected a number, got {value!r}")
    return value


def _num_list(values, name):
    if not isinstance(values, list):
        raise ParseError(f"{name}: expected an array")
    return [_num(v, name) for v in values]


# ---------------------------------------------------------------------------
# scans

def scan_to_dict(scan: PleScan) -> dict:
    m = scan.meta
    return {
        "meta": {"region_id": m.region_id, "splitting_mhz": m.splitting_mhz,
                 "excitation_power_nw": m.excitation_power_nw, "notes": m.notes},
        "lines": [{"index": ln.index, "t0_s": ln.t0,
                   "voltage_v": ln.voltage.tolist(), "counts": ln.counts.tolist()}
                  for ln in scan.lines],
    }


def scan_from_dict(doc) -> PleScan:
    if not isinstance(doc, dict) or "meta" not in doc or "lines" not in doc:
        raise ParseError("scan document needs 'meta' and 'lines'")
    meta = doc["meta"]
    if not isinstance(meta, dict):
        raise ParseError("meta: expected an object")
    region = meta.get("region_id", "")
    if not isinstance(region, str):
        raise ParseError("meta.region_id: expected a string")
    power = meta.get("excitation_power_nw")
    notes = meta.get("notes")
    if notes is not None and not isinstance(notes, str):
        raise ParseError("meta.notes: expected a string or null")
    smeta = ScanMeta(
        region_id=region,
        splitting_mhz=_num(meta.get("splitting_mhz", DEFAULT_SPLITTING_MHZ), "meta.splitting_mhz"),
        excitation_power_nw=None if power is None else _num(power, "meta.excitation_power_nw"),
        notes=notes,
    )
    if not isinstance(doc["lines"], list):
        raise ParseError("lines: expected an array")
    lines = []
    for k, entry in enumerate(doc["lines"]):
        if not isinstance(entry, dict):
            raise ParseError(f"lines[{k}]: expected an object")
        try:
            idx, t0, v, c = entry["index"], entry["t0_s"], entry["voltage_v"], entry["counts"]
        except KeyError as exc:
            raise ParseError(f"lines[{k}]: missing key {exc}") from None
        if isinstance(idx, bool) or not isinstance(idx, int):
            raise ParseError(f"lines[{k}].index: expected an integer")
        lines.append(PleLine(idx, _num(t0, "t0_s"), _num_list(v, "voltage_v"),
                             _num_list(c, "counts")))
    return PleScan(tuple(lines), smeta)


def write_scan(scan: PleScan, path) -> None:
    if not isinstance(scan, PleScan):
        raise ValidationError("scan", "expected a PleScan")
    atomic_write_text(path, json.dumps(scan_to_dict(scan)))


def read_scan(path) -> PleScan:
    text = _read_text(path)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None
    return scan_from_dict(doc)


# ---------------------------------------------------------------------------
# spectra

SPECTRUM_HEADER = "wavelength_nm,intensity"


def write_spectrum(spec: Spectrum, path) -> None:
    rows = [SPECTRUM_HEADER]
    rows += [f"{w!r},{y!r}" for w, y in zip(spec.wavelength_nm.tolist(), spec.intensity.tolist())]
    atomic_write_text(path, "\n".join(rows) + "\n")


def read_spectrum(path, resolution_nm=DEFAULT_RESOLUTION_NM) -> Spectrum:
    lines = [ln.strip() for ln in _read_text(path).splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0].replace(" ", "") != SPECTRUM_HEADER:
        raise ParseError(f"{path}: expected header '{SPECTRUM_HEADER}'")
    w, y = [], []
    for n, row in enumerate(lines[1:], start=2):
        parts = row.split(",")
        if len(parts) != 2:
            raise ParseError(f"{path}:{n}: expected 2 columns")
        try:
            w.append(float(parts[0]))
            y.append(float(parts[1]))
        except ValueError:
            raise ParseError(f"{path}:{n}: non-numeric value") from None
    return Spectrum(np.array(w), np.array(y), resolution_nm)


# ---------------------------------------------------------------------------
# AFM maps

def write_afm(afm: AfmMap, path) -> None:
    rows = [f"{afm.nx} {afm.ny} {afm.dx_um!r} {afm.dy_um!r}"]
    rows += [" ".join(repr(v) for v in row) for row in afm.heights_nm.tolist()]
    atomic_write_text(path, "\n".join(rows) + "\n")


def read_afm(path) -> AfmMap:
    lines = [ln for ln in _read_text(path).splitlines() if ln.strip()]
    if not lines:
        raise ParseError(f"{path}: empty file")
    head = lines[0].split()
    if len(head) != 4:
        raise ParseError(f"{path}: header must be 'nx ny dx_um dy_um'")
    try:
        nx, ny = int(head[0]), int(head[1])
        dx, dy = float(head[2]), float(head[3])
    except ValueError:
        raise ParseError(f"{path}: malformed header") from None
    body = lines[1:]
    if len(body) != ny:
        raise ParseError(f"{path}: header declares {ny} rows, found {len(body)}")
    rows = []
    for n, row in enumerate(body, start=2):
        try:
            vals = [float(tok) for tok in row.split()]
        except ValueError:
            raise ParseError(f"{path}:{n}: non-numeric value") from None
        if len(vals) != nx:
            raise ParseError(f"{path}:{n}: expected {nx} values, found {len(vals)}")
        rows.append(vals)
    return AfmMap(np.array(rows, dtype=float).reshape(ny, nx), dx, dy)
