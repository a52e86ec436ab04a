import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_force_peaks
from plekit.model import Spectrum
from plekit.spectra import (LABELS, Peak, ZplWindows, batch_stats, classify, find_peaks,
                            local_maxima, peak_indices, prominences)
from plekit.synth import synth_spectrum
from plekit.errors import ValidationError


def spectrum_of(y):
    return Spectrum(np.linspace(900.0, 930.0, len(y)), y)


small_ints = arrays(np.float64, st.integers(3, 60), elements=st.integers(0, 6).map(float))


def test_monotone_spectrum_has_no_peaks():
    assert find_peaks(spectrum_of(np.arange(50.0)), min_prominence=0) == []
    assert find_peaks(spectrum_of(-np.arange(50.0)), min_prominence=0) == []


def test_triangle_peak_prominence_equals_height():
    y = np.concatenate([np.linspace(0, 7, 8), np.linspace(7, 0, 8)[1:]])
    peaks = find_peaks(spectrum_of(y), min_prominence=0)
    assert len(peaks) == 1
    assert peaks[0].index == 7
    assert peaks[0].prominence == 7.0


@pytest.mark.parametrize("y, expected", [
    ([0, 1, 1, 0], [1]),          # even plateau rounds down
    ([0, 1, 1, 1, 0], [2]),
    ([1, 1, 0, 2, 0], [3]),       # plateau at the edge is not a peak
    ([0, 2, 2], []),
    ([0, 1, 0, 1, 0], [1, 3]),
])
def test_plateaus_and_edges(y, expected):
    assert local_maxima(np.array(y, float)).tolist() == expected


def test_prominence_uses_higher_base():
    y = np.array([0, 5, 2, 9, 1, 3, 0], float)
    idx = local_maxima(y)
    assert idx.tolist() == [1, 3, 5]
    assert prominences(y, idx).tolist() == [3.0, 9.0, 2.0]


def test_distance_thinning_keeps_most_prominent():
    y = np.array([0, 3, 0, 5, 0, 4, 0, 0, 2, 0], float)
    idx, _ = peak_indices(y, min_distance=3)
    assert idx.tolist() == [3, 8]


@pytest.mark.parametrize("seed", range(100))
def test_matches_brute_force_random(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 300))
    # coarse integer levels force plateaus and equal prominences
    y = rng.integers(0, 8, n).astype(float) if seed % 2 else rng.normal(size=n).cumsum()
    prom = float(rng.choice([0.0, 0.5, 1.0, 2.0]))
    dist = int(rng.integers(1, 6))
    idx, p = peak_indices(y, prom, -np.inf, dist)
    ref = brute_force_peaks(y, prom, -np.inf, dist)
    assert idx.tolist() == [r[0] for r in ref]
    np.testing.assert_allclose(p, [r[1] for r in ref], rtol=0, atol=0)


@given(small_ints, st.integers(1, 5), st.sampled_from([0.0, 1.0, 2.5]))
def test_matches_brute_force_property(y, dist, prom):
    idx, _ = peak_indices(y, prom, -np.inf, dist)
    assert idx.tolist() == [r[0] for r in brute_force_peaks(y, prom, -np.inf, dist)]


@given(small_ints, st.floats(-50, 50))
def test_constant_offset_invariance(y, c):
    c = float(np.round(c))  # keep the arithmetic exact
    a = find_peaks(spectrum_of(y), min_prominence=0.5, min_height=-1e9)
    b = find_peaks(spectrum_of(y + c), min_prominence=0.5, min_height=-1e9)
    assert [p.index for p in a] == [p.index for p in b]
    assert [p.prominence for p in a] == [p.prominence for p in b]


@given(arrays(np.float64, st.integers(3, 80), elements=st.floats(-100, 100)))
def test_returned_peaks_are_local_maxima(y):
    for p in find_peaks(spectrum_of(y), min_prominence=0, min_height=-np.inf):
        i = p.index
        assert y[i] >= y[i - 1] and y[i] >= y[i + 1]
        assert p.prominence <= p.height - y.min() + 1e-12


def test_default_threshold_is_three_mad():
    spec = synth_spectrum([(917.0, 50.0, 0.3), (862.0, 0.001, 0.3)], background=10)
    y = spec.intensity
    mad = np.median(np.abs(y - np.median(y)))
    peaks = find_peaks(spec)
    assert [p.index for p in peaks] == [p.index for p in find_peaks(spec, 3 * mad)]
    # the weak planted line sits below 3 MAD, the strong one above
    assert len(peaks) == 1 and abs(peaks[0].wavelength_nm - 917.0) < 0.2


def test_noisy_planted_peak_with_explicit_threshold():
    spec = synth_spectrum([(917.0, 50.0, 0.3)], background=10, noise_std=1.0, seed=4)
    peaks = find_peaks(spec, min_prominence=10.0)
    assert len(peaks) == 1
    assert classify(peaks).label == "V2"


def P(w):
    return Peak(w, 1.0, 1.0, 0)


@pytest.mark.parametrize("waves, label", [
    ([917.0], "V2"),
    ([862.0], "V1"),
    ([900.0], "other"),
    ([], "none"),
    ([862.0, 917.0], "V1+V2"),
    ([862.0, 917.0, 900.0], "V1+V2"),
    ([917.0, 900.0], "multiple"),
    ([917.0, 917.2], "multiple"),
    ([880.0, 900.0], "other"),
    ([916.5], "V2"),               # windows are closed
    ([917.9], "V2"),
    ([916.49], "other"),
])
def test_classify(waves, label):
    cl = classify([P(w) for w in waves])
    assert cl.label == label
    assert cl.label in LABELS


def test_windows_validation_and_override():
    with pytest.raises(ValidationError):
        ZplWindows((870, 860), (916.5, 917.9))
    with pytest.raises(ValidationError):
        ZplWindows((900, 918), (916.5, 917.9))
    w = ZplWindows.from_dict({"v1": [850, 851], "v2": [900, 901]})
    assert classify([P(900.5)], w).label == "V2"


def test_batch_stats_examples():
    nones = [classify([], region="A") for _ in range(10)]
    st_ = batch_stats(nones)
    assert st_.counts == {"A": {"none": 10}}
    assert st_.fractions()["A"]["none"] == 1.0
    assert st_.total == 10
    empty = batch_stats([])
    assert empty.counts == {} and empty.total == 0
    assert empty.to_csv() == "region,label,count,fraction\n"


def test_batch_stats_constructed_composition():
    composition = {"A": {"V2": 3, "none": 2, "other": 1}, "B": {"V1": 1, "V1+V2": 2}}
    waves = {"V2": [917.0], "none": [], "other": [900.0], "V1": [862.0], "V1+V2": [862.0, 917.0]}
    batch = [classify([P(w) for w in waves[lab]], region=r)
             for r, comp in composition.items() for lab, k in comp.items() for _ in range(k)]
    stats = batch_stats(batch[::-1])
    assert stats.counts == composition
    assert stats.total == 9
    for fr in stats.fractions().values():
        assert abs(sum(fr.values()) - 1.0) < 1e-12


@given(st.lists(st.tuples(st.sampled_from("ABC"), st.sampled_from([[], [862.0], [917.0], [900.0]]))))
def test_fractions_sum_to_one(items):
    stats = batch_stats([classify([P(w) for w in ws], region=r) for r, ws in items])
    assert stats.total == len(items)
    for fr in stats.fractions().values():
        assert abs(sum(fr.values()) - 1.0) < 1e-12
