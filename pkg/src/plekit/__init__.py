"""plekit: analysis of photoluminescence-excitation scans, emission spectra and AFM maps."""

from .errors import *  # noqa: F401,F403
from .model import (AfmMap, PleLine, PleScan, ScanMeta, Spectrum, read_afm, read_scan,
                    read_spectrum, write_afm, write_scan, write_spectrum)
from .lorentz import (DoubleLorentzParams, FitConstraints, FitResult, LorentzParams,
                      double_lorentz_eval, fit_double, fit_single, grid_oracle, initial_guess,
                      is_successful, lorentz_eval)
from .pipeline import (CalibrationFactor, LinewidthResult, aligned_linewidth, attach_error,
                       calibrate, summed_linewidth)
from .wander import RateHistogram, WanderSample, bin_width, histogram, reject_outliers, wander_rates
from .spectra import Peak, SpectrumClassification, ZplWindows, batch_stats, classify, find_peaks
from .afm import RoughnessResult, poly_detrend, roughness, step_line_correct
from .synth import PleSynthConfig, synth_afm, synth_ple, synth_spectrum

__version__ = "0.1.0"
