"""Peak extraction from emission spectra and ZPL window classification.

Peak semantics
--------------
* a peak is a strict local maximum; a flat top (plateau) counts once, at its
  midpoint sample (rounded down), and a plateau touching either end of the
  signal is not a peak;
* prominence is the topographic one: the peak height minus the higher of
  the two minima found walking left and right until a strictly higher sample
  or the signal edge;
* after the prominence and height filters, peaks are thinned greedily in
  order of descending prominence (ties: lower index first) so that survivors
  are at least ``min_distance`` samples apart.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import ValidationError
from .model import Spectrum

V1_WINDOW_NM = (861.8, 863.2)
V2_WINDOW_NM = (916.5, 917.9)
LABELS = ("V1", "V2", "V1+V2", "multiple", "other", "none")


def local_maxima(y):
    """Indices of strict local maxima, plateaus reduced to their midpoint."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 3:
        return np.empty(0, dtype=np.intp)
    # collapse runs of equal values, then look for up/down sign changes
    change = np.flatnonzero(np.diff(y) != 0) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change - 1, [n - 1]))
    vals = y[starts]
    if len(vals) < 3:
        return np.empty(0, dtype=np.intp)
    is_max = (vals[1:-1] > vals[:-2]) & (vals[1:-1] > vals[2:])
    k = np.flatnonzero(is_max) + 1
    return ((starts[k] + ends[k]) // 2).astype(np.intp)


def _previous_greater(y):
    """For each i, the largest j < i with y[j] > y[i], or -1."""
    out = np.full(len(y), -1, dtype=np.intp)
    stack = []
    for i, v in enumerate(y):
        while stack and y[stack[-1]] <= v:
            stack.pop()
        if stack:
            out[i] = stack[-1]
        stack.append(i)
    return out


class _RangeMin:
    """Sparse table answering min(y[a:b+1]) in O(1)."""

    def __init__(self, y):
        self.levels = [np.asarray(y, dtype=float)]
        span = 1
        while 2 * span <= len(y):
            prev = self.levels[-1]
            self.levels.append(np.minimum(prev[:-span], prev[span:]))
            span *= 2

    def query(self, a, b):
        a = np.asarray(a)
        b = np.asarray(b)
        length = b - a + 1
        k = np.floor(np.log2(length)).astype(int)
        out = np.empty(len(a))
        for lev in np.unique(k):
            sel = k == lev
            table = self.levels[lev]
            out[sel] = np.minimum(table[a[sel]], table[b[sel] - (1 << lev) + 1])
        return out


def prominences(y, peaks):
    """Topographic prominence of each index in ``peaks``."""
    y = np.asarray(y, dtype=float)
    peaks = np.asarray(peaks, dtype=np.intp)
    if len(peaks) == 0:
        return np.empty(0)
    left = _previous_greater(y)[peaks] + 1
    right = (len(y) - 1 - _previous_greater(y[::-1])[::-1])[peaks] - 1
    rmq = _RangeMin(y)
    left_min = rmq.query(left, peaks)
    right_min = rmq.query(peaks, right)
    return y[peaks] - np.maximum(left_min, right_min)


def select_by_distance(peaks, priority, distance):
    """Greedy thinning; returns a boolean keep-mask aligned with ``peaks``."""
    peaks = np.asarray(peaks)
    keep = np.ones(len(peaks), dtype=bool)
    if distance <= 1 or len(peaks) < 2:
        return keep
    order = np.lexsort((peaks, -np.asarray(priority)))
    for i in order:
        if not keep[i]:
            continue
        j = i - 1
        while j >= 0 and peaks[i] - peaks[j] < distance:
            keep[j] = False
            j -= 1
        j = i + 1
        while j < len(peaks) and peaks[j] - peaks[i] < distance:
            keep[j] = False
            j += 1
    return keep


def peak_indices(y, min_prominence=0.0, min_height=-np.inf, min_distance=1):
    """Array-level detector; returns (indices, prominences) sorted by index."""
    y = np.asarray(y, dtype=float)
    idx = local_maxima(y)
    prom = prominences(y, idx)
    ok = (prom >= min_prominence) & (y[idx] >= min_height)
    idx, prom = idx[ok], prom[ok]
    keep = select_by_distance(idx, prom, min_distance)
    return idx[keep], prom[keep]


def mad(values):
    values = np.asarray(values, dtype=float)
    return float(np.median(np.abs(values - np.median(values))))


@dataclass(frozen=True)
class Peak:
    wavelength_nm: float
    height: float
    prominence: float
    index: int


def default_min_prominence(spectrum: Spectrum):
    return 3.0 * mad(spectrum.intensity)


def find_peaks(spectrum: Spectrum, min_prominence: Optional[float] = None,
               min_height: float = 0.0, min_distance_samples: int = 1):
    """Return the peaks of ``spectrum`` sorted by wavelength.

    ``height`` is the raw intensity at the peak sample.  When
    ``min_prominence`` is None it defaults to three times the median absolute
    deviation of the intensity.
    """
    if min_prominence is None:
        min_prominence = default_min_prominence(spectrum)
    if min_prominence < 0 or min_distance_samples < 0:
        raise ValidationError("thresholds", "must be non-negative")
    y = spectrum.intensity
    idx, prom = peak_indices(y, min_prominence, min_height, min_distance_samples)
    return [Peak(float(spectrum.wavelength_nm[i]), float(y[i]), float(p), int(i))
            for i, p in zip(idx, prom)]


@dataclass(frozen=True)
class ZplWindows:
    v1: tuple = V1_WINDOW_NM
    v2: tuple = V2_WINDOW_NM

    def __post_init__(self):
        for name in ("v1", "v2"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not lo <= hi:
                raise ValidationError(name, "window is empty")
            object.__setattr__(self, name, (lo, hi))
        if not (self.v1[1] < self.v2[0] or self.v2[1] < self.v1[0]):
            raise ValidationError("v2", "windows overlap")

    def tag(self, wavelength_nm):
        if self.v1[0] <= wavelength_nm <= self.v1[1]:
            return "V1"
        if self.v2[0] <= wavelength_nm <= self.v2[1]:
            return "V2"
        return "other"

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(tuple(doc["v1"]), tuple(doc["v2"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError("windows", f"expected {{'v1':[lo,hi],'v2':[lo,hi]}} ({exc})") from None


@dataclass(frozen=True)
class SpectrumClassification:
    label: str
    peaks: tuple = ()
    tags: tuple = ()
    source: str = ""
    region: str = ""

    def to_dict(self):
        return {
            "source": self.source, "region": self.region, "label": self.label,
            "peaks": [{"wavelength_nm": p.wavelength_nm, "height": p.height,
                       "prominence": p.prominence, "index": p.index, "tag": t}
                      for p, t in zip(self.peaks, self.tags)],
        }


def label_from_tags(tags):
    """Spectrum label as a function of the per-peak window tags."""
    if not tags:
        return "none"
    hits = {t for t in tags if t != "other"}
    if not hits:
        return "other"
    if hits == {"V1", "V2"}:
        return "V1+V2"
    if len(tags) == 1:
        return tags[0]
    return "multiple"


def classify(peaks, windows: ZplWindows = ZplWindows(), source="", region=""):
    tags = tuple(windows.tag(p.wavelength_nm) for p in peaks)
    return SpectrumClassification(label_from_tags(tags), tuple(peaks), tags, source, region)


@dataclass
class BatchStats:
    counts: dict = field(default_factory=dict)
    total: int = 0

    def fractions(self):
        out = {}
        for region, c in self.counts.items():
            n = sum(c.values())
            out[region] = {label: k / n for label, k in c.items()}
        return out

    def rows(self):
        """(region, label, count, fraction) rows, regions and labels in a fixed order."""
        fr = self.fractions()
        return [(region, label, self.counts[region][label], fr[region][label])
                for region in sorted(self.counts)
                for label in LABELS if label in self.counts[region]]

    def to_csv(self):
        lines = ["region,label,count,fraction"]
        lines += [f"{r},{lab},{c},{f!r}" for r, lab, c, f in self.rows()]
        return "\n".join(lines) + "\n"


def batch_stats(classified: Iterable[SpectrumClassification]):
    counts = {}
    total = 0
    for cl in classified:
        counts.setdefault(cl.region, Counter())[cl.label] += 1
        total += 1
    return BatchStats({r: dict(c) for r, c in counts.items()}, total)
