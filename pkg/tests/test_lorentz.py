import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from oracles import finite_difference_jacobian
from plekit.errors import (ConstraintInfeasible, DegenerateData, EmptyGrid, PreconditionError,
                           ValidationError)
from plekit.lorentz import (DoubleLorentzParams, FitConstraints, LorentzParams,
                            double_lorentz_eval, double_lorentz_jacobian, fit_double,
                            fit_single, grid_oracle, initial_guess, is_successful,
                            lorentz_eval, lorentz_jacobian, refinement_grid)
from plekit.model import PleLine


@pytest.mark.parametrize("b, x, expected", [(0, 0, 10), (0, 1, 5), (3, 0, 13)])
def test_lorentz_eval_examples(b, x, expected):
    assert lorentz_eval(LorentzParams(10, 0, 2, b), x) == expected


@given(st.floats(0, 1e4), st.floats(-1e3, 1e3), st.floats(1e-3, 1e3), st.floats(-1e3, 1e3))
def test_half_maximum_identity(a, c, g, b):
    # snap the width so that c +- g/2 is exactly representable
    g = 2 * ((c + g / 2) - c)
    assume(g > 0 and (c - g / 2) + g / 2 == c)
    p = LorentzParams(a, c, g, b)
    for x in (c - g / 2, c + g / 2):
        val = lorentz_eval(p, x)
        assert val == pytest.approx(b + a / 2, rel=1e-12, abs=1e-12 * (abs(a) + abs(b)))
    assert lorentz_eval(p, c) == pytest.approx(b + a, rel=1e-15, abs=1e-15)


@given(st.floats(0, 1e4), st.floats(-1, 1), st.floats(1e-3, 1), st.floats(0, 1e4),
       st.floats(-1, 1), st.floats(1e-3, 1), st.floats(-10, 10))
def test_doublet_half_maxima(a1, c1, g1, a2, c2, g2, b):
    p = DoubleLorentzParams(b, a1, c1, g1, a2, c2, g2)
    for peak in (p.p1, p.p2):
        x = np.array([peak.center - peak.fwhm / 2, peak.center + peak.fwhm / 2])
        np.testing.assert_allclose(lorentz_eval(peak, x), b + peak.amplitude / 2,
                                   rtol=1e-12, atol=1e-12 * (peak.amplitude + abs(b)))


def test_params_reject_invalid():
    with pytest.raises(ValidationError):
        LorentzParams(-1, 0, 1)
    with pytest.raises(ValidationError):
        LorentzParams(1, 0, 0)
    with pytest.raises(ValidationError):
        DoubleLorentzParams(0, -1.0, -0.4, 0.1, 1, 0.4, 0.1)


def random_doublet(rng):
    return DoubleLorentzParams(rng.uniform(-5, 5), rng.uniform(0, 100), rng.uniform(-1, 0),
                               rng.uniform(0.02, 0.5), rng.uniform(0, 100), rng.uniform(0, 1),
                               rng.uniform(0.02, 0.5))


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(0)
    x = np.linspace(-1.5, 1.5, 101)
    for _ in range(200):
        p = random_doublet(rng)
        J = double_lorentz_jacobian(p, x)
        fd = finite_difference_jacobian(
            lambda a: double_lorentz_eval(DoubleLorentzParams.from_array(a), x),
            p.as_array(), [1, 100, 1, p.fwhm1, 100, 1, p.fwhm2])
        scale = np.max(np.abs(J), axis=0) + 1e-300
        assert np.max(np.abs(J - fd) / scale) <= 1e-5
        single = p.p1
        Js = lorentz_jacobian(single, x)
        fds = finite_difference_jacobian(lambda a: lorentz_eval(LorentzParams(*a), x),
                                         single.as_array(), [100, 1, single.fwhm, 1])
        assert np.max(np.abs(Js - fds) / (np.max(np.abs(Js), axis=0) + 1e-300)) <= 1e-5


# --- single line -------------------------------------------------------------

TRUE_SINGLE = LorentzParams(100.0, 0.2, 0.15, 5.0)
XS_SINGLE = np.linspace(-1.0, 1.0, 200)


def test_fit_single_noiseless_exact():
    ys = lorentz_eval(TRUE_SINGLE, XS_SINGLE)
    res = fit_single(XS_SINGLE, ys, LorentzParams(80.0, 0.25, 0.2, 3.0))
    assert res.converged
    np.testing.assert_allclose(res.params.as_array(), TRUE_SINGLE.as_array(), rtol=1e-6)


def _poisson_fit(seed, weights=None):
    rng = np.random.default_rng(seed)
    ys = rng.poisson(lorentz_eval(TRUE_SINGLE, XS_SINGLE)).astype(float)
    return fit_single(XS_SINGLE, ys, LorentzParams(80.0, 0.25, 0.2, 3.0), weights=weights)


def test_fit_single_poisson_seed_42_within_three_sigma():
    for weights in (None, "poisson"):
        res = _poisson_fit(42, weights)
        for name, truth in zip(LorentzParams.NAMES, TRUE_SINGLE.as_array()):
            assert abs(getattr(res.params, name) - truth) <= 3 * res.std_errors[name]


def _coverage(weights, n=1000):
    hits = np.zeros(4)
    for seed in range(n):
        res = _poisson_fit(seed, weights)
        se = np.array([res.std_errors[k] for k in LorentzParams.NAMES])
        hits += np.abs(res.params.as_array() - TRUE_SINGLE.as_array()) <= 3 * se
    return hits / n


def test_fit_single_error_coverage_poisson_weighted():
    cov = _coverage("poisson")
    assert np.all(cov >= 0.95), cov


@pytest.mark.xfail(strict=True, reason="unweighted errors assume constant variance; "
                                       "Poisson noise is larger on the peak (coverage ~0.77-0.88)")
def test_fit_single_error_coverage_unweighted():
    cov = _coverage(None)
    assert np.all(cov >= 0.95), cov


def test_fit_single_degenerate():
    with pytest.raises(DegenerateData):
        fit_single(XS_SINGLE, np.full(200, 4.0), TRUE_SINGLE)


def test_fit_single_bounds_respected():
    ys = lorentz_eval(TRUE_SINGLE, XS_SINGLE)
    lo = [0, -1, 0.01, 0]
    hi = [90, 1, 1, 10]
    res = fit_single(XS_SINGLE, ys, LorentzParams(50, 0, 0.2, 2), bounds=(lo, hi))
    assert res.params.amplitude <= 90
    with pytest.raises(PreconditionError):
        fit_single(XS_SINGLE, ys, LorentzParams(95, 0, 0.2, 2), bounds=(lo, hi))


# --- doublet -----------------------------------------------------------------

def test_fit_double_noiseless_exact(doublet, doublet_line, constraints):
    res = fit_double(doublet_line, initial_guess(doublet_line, constraints), constraints)
    assert res.converged
    np.testing.assert_allclose(res.params.as_array(), doublet.as_array(), rtol=1e-6)


def noisy_line(doublet, grid, seed):
    rng = np.random.default_rng(seed)
    return PleLine(0, 0.0, grid, rng.poisson(double_lorentz_eval(doublet, grid)).astype(float))


def test_fit_double_beats_grid_around_truth(doublet, grid, constraints):
    line = noisy_line(doublet, grid, 7)
    res = fit_double(line, initial_guess(line, constraints), constraints)
    steps = [0.2, 2.0, 0.002, 0.002, 2.0, 0.002, 0.002]
    best, cost = grid_oracle(grid, line.counts, refinement_grid(doublet.as_array(), steps))
    assert res.cost <= cost


def test_fit_double_locally_optimal(doublet, grid, constraints):
    line = noisy_line(doublet, grid, 11)
    res = fit_double(line, initial_guess(line, constraints), constraints)
    se = res.std_errors
    steps = [0.5 * se[k] for k in DoubleLorentzParams.NAMES]
    cand = refinement_grid(res.params.as_array(), steps)
    _, cost = grid_oracle(grid, line.counts, cand)
    assert res.cost <= cost + 1e-9


def test_negative_amplitude_init_is_reported(doublet_line, constraints):
    with pytest.raises(ValidationError):
        fit_double(doublet_line, DoubleLorentzParams(0, -5, -0.4, 0.1, 5, 0.4, 0.1), constraints)


def test_init_outside_window_is_reported(doublet_line, constraints):
    with pytest.raises(PreconditionError):
        fit_double(doublet_line, DoubleLorentzParams(0, 5, -0.9, 0.1, 5, -0.1, 0.1), constraints)


def test_infeasible_constraints(doublet_line):
    c = FitConstraints((-0.7, -0.6), (0.6, 0.7), 2.0, 0.5, 0.1)
    init = DoubleLorentzParams(0, 5, -0.65, 0.1, 5, 0.65, 0.1)
    with pytest.raises(ConstraintInfeasible):
        c.separation_bounds()
    with pytest.raises((ConstraintInfeasible, PreconditionError)):
        fit_double(doublet_line, init, c)


def test_constant_line_is_degenerate(grid, constraints):
    line = PleLine(0, 0.0, grid, np.full(len(grid), 3.0))
    with pytest.raises(DegenerateData):
        fit_double(line, initial_guess(line, constraints), constraints)


def test_cost_history_non_increasing(doublet, grid, constraints):
    for seed in range(20):
        line = noisy_line(doublet, grid, seed)
        res = fit_double(line, initial_guess(line, constraints), constraints)
        hist = np.array(res.cost_history)
        assert np.all(np.diff(hist) <= 0)
        assert res.cost <= hist[0]


@given(st.floats(0.5, 0.95), st.floats(-0.3, 0.3), st.floats(0.02, 0.3),
       st.floats(0, 50), st.integers(0, 2 ** 32 - 1))
def test_converged_fits_satisfy_constraints(sep, mid, width, amp2, seed):
    # the truth may lie outside the constraint set; the answer never does
    rng = np.random.default_rng(seed)
    grid = np.linspace(-1, 1, 200)
    truth = DoubleLorentzParams(2.0, 60.0, mid - sep / 2, width, amp2, mid + sep / 2, width)
    ys = rng.poisson(double_lorentz_eval(truth, grid)).astype(float)
    c = FitConstraints((-0.7, -0.1), (0.1, 0.7), 2.0, 0.8, 0.10)
    line = PleLine(0, 0.0, grid, ys)
    res = fit_double(line, initial_guess(line, c), c, strict=False)
    if res.converged:
        assert c.violations(res.params) == []


def test_translation_equivariance(doublet, grid, constraints):
    line = noisy_line(doublet, grid, 3)
    base = fit_double(line, initial_guess(line, constraints), constraints)
    for dx in (-0.3, 0.05, 2.5):
        moved = PleLine(0, 0.0, grid + dx, line.counts)
        c2 = constraints.shifted(dx)
        res = fit_double(moved, initial_guess(moved, c2), c2)
        np.testing.assert_allclose(res.params.as_array(), base.params.shifted(dx).as_array(),
                                   rtol=1e-8, atol=1e-8)
        assert res.cost == pytest.approx(base.cost, rel=1e-8)


@pytest.mark.parametrize("k", [0.5, 2.0, 10.0])
def test_scale_equivariance(doublet, grid, constraints, k):
    line = noisy_line(doublet, grid, 5)
    base = fit_double(line, initial_guess(line, constraints), constraints)
    scaled = PleLine(0, 0.0, grid * k, line.counts)
    ck = constraints.scaled(k)
    res = fit_double(scaled, initial_guess(scaled, ck), ck)
    np.testing.assert_allclose(res.params.as_array(), base.params.scaled(k).as_array(), rtol=1e-8)
    assert res.cost == pytest.approx(base.cost, rel=1e-8)


def test_poisson_weighting_flag(doublet, grid, constraints):
    line = noisy_line(doublet, grid, 9)
    res = fit_double(line, initial_guess(line, constraints), constraints, weights="poisson")
    assert res.converged and is_successful(res)
    assert abs(res.params.center1 - doublet.center1) < 5 * res.std_errors["center1"]


def test_success_rule_rejects_noise(grid, constraints):
    rng = np.random.default_rng(1)
    flags = []
    for _ in range(20):
        line = PleLine(0, 0.0, grid, rng.poisson(5.0, len(grid)).astype(float))
        res = fit_double(line, initial_guess(line, constraints), constraints, strict=False)
        flags.append(is_successful(res))
    assert sum(flags) <= 2
    assert not is_successful(None)


# --- initial guess -----------------------------------------------------------

def test_initial_guess_flat_line_uses_window_midpoints(grid, constraints):
    g = initial_guess(PleLine(0, 0.0, grid, np.full(len(grid), 2.0)), constraints)
    assert g.center1 == pytest.approx(-0.4)
    assert g.center2 == pytest.approx(0.4)
    assert constraints.satisfied_by(g)


def test_initial_guess_single_peak(grid, constraints):
    single = LorentzParams(50.0, -0.35, 0.08, 1.0)
    line = PleLine(0, 0.0, grid, lorentz_eval(single, grid))
    g = initial_guess(line, constraints)
    assert abs(g.center1 - (-0.35)) <= 0.01
    assert g.center2 == pytest.approx(g.center1 + constraints.separation_ref, abs=1e-12)


@pytest.mark.parametrize("peak", [10.0, 30.0, 100.0, 400.0])
def test_initial_guess_clean_doublet(grid, constraints, peak):
    # SNR = peak / sqrt(peak + background) >= 10 for these peak heights above 100
    truth = DoubleLorentzParams(2.0, peak, -0.4, 0.1, peak, 0.42, 0.1)
    snr = peak / np.sqrt(peak + 2.0)
    rng = np.random.default_rng(int(peak))
    for _ in range(20):
        ys = rng.poisson(double_lorentz_eval(truth, grid)).astype(float)
        g = initial_guess(PleLine(0, 0.0, grid, ys), constraints)
        assert constraints.satisfied_by(g)
        if snr >= 10:
            assert abs(g.center1 - truth.center1) <= truth.fwhm1
            assert abs(g.center2 - truth.center2) <= truth.fwhm2


def test_initial_guess_tie_breaks_to_lower_index(constraints):
    grid = np.linspace(-1, 1, 41)
    y = np.zeros(41)
    y[[12, 28, 34]] = 10.0   # three equal spikes at -0.4, 0.4, 0.7
    g = initial_guess(PleLine(0, 0.0, grid, y), constraints)
    assert g.center1 == pytest.approx(-0.4)
    assert g.center2 == pytest.approx(0.4)


# --- grid oracle -------------------------------------------------------------

def test_grid_oracle_finds_truth(doublet, grid):
    ys = double_lorentz_eval(doublet, grid)
    cand = refinement_grid(doublet.as_array(), [0.05] * 7, points=3)
    best, cost = grid_oracle(grid, ys, cand)
    np.testing.assert_array_equal(best, doublet.as_array())
    assert cost <= 1e-20   # zero up to rounding of two algebraically equal formulas


def test_grid_oracle_is_exhaustive(grid):
    rng = np.random.default_rng(2)
    ys = rng.normal(size=len(grid))
    cand = np.column_stack([rng.uniform(0, 5, 300), rng.uniform(-1, 1, 300),
                            rng.uniform(0.01, 1, 300), rng.uniform(-1, 1, 300)])
    best, cost = grid_oracle(grid, ys, cand, chunk=7)
    for row in cand:
        model = row[3] + row[0] * (row[2] / 2) ** 2 / ((grid - row[1]) ** 2 + (row[2] / 2) ** 2)
        assert cost <= np.sum((ys - model) ** 2) + 1e-12


def test_grid_oracle_empty():
    with pytest.raises(EmptyGrid):
        grid_oracle([0, 1, 2], [0, 1, 2], np.empty((0, 7)))
