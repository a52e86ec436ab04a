"""``plekit`` command line.

Exit codes: 0 success, 1 input/output problem, 2 analysis cannot proceed on
this data, 3 fit did not converge, 64 usage or configuration error.
``PLEKIT_THREADS`` bounds the worker pool used for per-line fits and batch
inputs; results never depend on it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields, replace
from pathlib import Path

from . import afm as afm_mod
from . import spectra as spec_mod
from .errors import (AnalysisError, ConfigError, IoError, NonConvergence, ParseError,
                     PlekitError, PreconditionError, ValidationError)
from .lorentz import FitConstraints
from .model import (atomic_write_text, read_afm, read_scan, read_spectrum, write_afm,
                    write_scan, write_spectrum)
from .pipeline import aligned_linewidth, auto_constraints, fit_lines, summed_linewidth
from .synth import PleSynthConfig, synth_afm, synth_ple, synth_spectrum
from .wander import (DEFAULT_SIGMA_THRESHOLD, WanderSample, bin_width, group_by_region,
                     histogram, region_mean_sigmas, reject_outliers, wander_rates)

EXIT_OK, EXIT_IO, EXIT_ANALYSIS, EXIT_NONCONVERGENCE, EXIT_USAGE = 0, 1, 2, 3, 64

SAMPLES_HEADER = "region_id,i,j,rate_mhz_per_s,sigma_mhz_per_s"


class UsageError(PlekitError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _threads():
    raw = os.environ.get("PLEKIT_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"PLEKIT_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"PLEKIT_THREADS must be a positive integer, got {raw!r}")
    return n


def _pmap(fn, items, workers):
    items = list(items)
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _dump(doc):
    return json.dumps(doc, indent=2) + "\n"


def _emit(text, path):
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        atomic_write_text(path, text)


def _load_json(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None


def _load_constraints(path):
    return FitConstraints.from_dict(_load_json(path))


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _pos_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def _bin_width(text):
    return "auto" if text == "auto" else _pos_float(text)


def _prominence(text):
    if text == "auto":
        return "auto"
    v = float(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _prepare_scan(path, splitting):
    scan = read_scan(path)
    if splitting is not None:
        scan = replace(scan, meta=replace(scan.meta, splitting_mhz=splitting))
    return scan


# ---------------------------------------------------------------------------
# linewidth

def cmd_linewidth(args):
    scan = _prepare_scan(args.scan, args.splitting_mhz)
    constraints = _load_constraints(args.constraints) if args.constraints else auto_constraints(scan)
    weights = "poisson" if args.poisson_weights else None
    if args.method == "summed":
        res = summed_linewidth(scan, constraints, weights, a1_is_low=not args.a1_high)
    else:
        res = aligned_linewidth(scan, constraints, weights, a1_is_low=not args.a1_high,
                                workers=_threads())
    _emit(_dump(res.to_dict(verbose=args.verbose)), args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# wander

def read_samples_csv(path):
    try:
        rows = Path(path).read_text().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from None
    rows = [r for r in rows if r.strip()]
    if not rows or rows[0].replace(" ", "") != SAMPLES_HEADER:
        raise ParseError(f"{path}: expected header '{SAMPLES_HEADER}'")
    out = []
    for n, row in enumerate(rows[1:], start=2):
        parts = row.split(",")
        if len(parts) != 5:
            raise ParseError(f"{path}:{n}: expected 5 columns")
        try:
            out.append(WanderSample(float(parts[3]), float(parts[4]), parts[0],
                                    (int(parts[1]), int(parts[2]))))
        except ValueError as exc:
            raise ParseError(f"{path}:{n}: {exc}") from None
    return out


def samples_to_csv(samples):
    rows = [SAMPLES_HEADER]
    rows += [f"{s.region_id},{s.pair[0]},{s.pair[1]},{s.rate_mhz_per_s!r},{s.sigma_mhz_per_s!r}"
             for s in samples]
    return "\n".join(rows) + "\n"


def _scan_samples(path, args, workers):
    scan = _prepare_scan(path, args.splitting_mhz)
    constraints = _load_constraints(args.constraints) if args.constraints else auto_constraints(scan)
    weights = "poisson" if args.poisson_weights else None
    fits = fit_lines(scan, constraints, weights, workers)
    lw = aligned_linewidth(scan, constraints, weights, line_fits=fits)
    return wander_rates(scan, fits, lw.calibration, args.center, a1_is_low=not args.a1_high)


def cmd_wander(args):
    workers = _threads()
    samples = []
    for path in args.inputs:
        if str(path).lower().endswith(".csv"):
            samples.extend(read_samples_csv(path))
        else:
            samples.extend(_scan_samples(path, args, workers))
    kept, n_rej = reject_outliers(samples, args.sigma_threshold)
    regions = group_by_region(kept)
    means = region_mean_sigmas(regions) if kept else {}
    if args.bin_width == "auto":
        if not kept:
            raise AnalysisError("no samples left to derive an automatic bin width")
        width = bin_width(regions)
    else:
        width = args.bin_width
    hist = histogram(kept, width, n_rej, magnitude=args.magnitude)
    summary = {
        "bin_width_mhz_per_s": width,
        "bin_width_mode": "auto" if args.bin_width == "auto" else "fixed",
        "n_input": len(samples),
        "n_kept": len(kept),
        "n_rejected": n_rej,
        "sigma_threshold_mhz_per_s": args.sigma_threshold,
        "region_mean_sigma_mhz_per_s": {k: means[k] for k in sorted(means)},
        "rate": "magnitude" if args.magnitude else "signed",
        "center": args.center,
    }
    out = Path(args.output_dir)
    if not out.is_dir():
        raise IoError(f"output directory {out} does not exist")
    texts = {"histogram.csv": hist.to_csv(), "summary.json": _dump(summary),
             "samples.csv": samples_to_csv(samples)}
    for name, text in texts.items():
        atomic_write_text(out / name, text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# spectra

def _spectrum_files(paths):
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(q for q in p.rglob("*.csv") if q.is_file()))
        elif p.exists():
            files.append(p)
        else:
            raise IoError(f"no such file or directory: {p}")
    return files


def cmd_spectra(args):
    windows = (spec_mod.ZplWindows.from_dict(_load_json(args.windows))
               if args.windows else spec_mod.ZplWindows())
    files = _spectrum_files(args.paths)
    prom = None if args.min_prominence == "auto" else args.min_prominence

    def one(path):
        spec = read_spectrum(path)
        peaks = spec_mod.find_peaks(spec, prom, args.min_height, args.min_distance)
        region = args.region if args.region is not None else path.parent.name
        return spec_mod.classify(peaks, windows, str(path), region)

    results = _pmap(one, files, _threads())
    stats = spec_mod.batch_stats(results)
    out = Path(args.output_dir)
    if not out.is_dir():
        raise IoError(f"output directory {out} does not exist")
    doc = {"windows": {"v1": list(windows.v1), "v2": list(windows.v2)},
           "thresholds": {"min_prominence": args.min_prominence, "min_height": args.min_height,
                          "min_distance": args.min_distance},
           "total": stats.total,
           "spectra": [r.to_dict() for r in results]}
    texts = {"classifications.json": _dump(doc), "batch_stats.csv": stats.to_csv()}
    for name, text in texts.items():
        atomic_write_text(out / name, text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# afm

def cmd_afm(args):
    res = afm_mod.analyze(read_afm(args.input), args.degree, args.row_correction)
    _emit(_dump(res.to_dict()), args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth

_PLE_FLAGS = {f.name: "--" + f.name.replace("_", "-") for f in fields(PleSynthConfig)}


def _synth_ple(args, base):
    doc = dict(base)  # unknown keys are rejected by from_dict
    for f in fields(PleSynthConfig):
        val = getattr(args, f.name)
        if val is not None:
            doc[f.name] = val
    cfg = PleSynthConfig.from_dict(doc)
    scan, truth = synth_ple(cfg)
    truth_doc = dict(truth.to_dict(), kind="ple")
    write_scan(scan, f"{args.output}.json")
    atomic_write_text(f"{args.output}.truth.json", _dump(truth_doc))
    atomic_write_text(f"{args.output}.constraints.json",
                      _dump(cfg.suggested_constraints().to_dict()))


def _synth_spectrum(args, base):
    peaks = args.peak if args.peak is not None else base.get("peaks", [])
    background = args.background if args.background is not None else base.get("background", 0.0)
    noise = args.noise_std if args.noise_std is not None else base.get("noise_std", 0.0)
    seed = args.seed if args.seed is not None else base.get("seed", 0)
    grid = tuple(args.grid) if args.grid is not None else tuple(base.get("grid", (840.0, 940.0, 501)))
    if len(grid) != 3:
        raise ConfigError("grid must be start,stop,n")
    grid = (grid[0], grid[1], int(grid[2]))
    spec = synth_spectrum(peaks, background, noise, grid, seed)
    truth = {"kind": "spectrum", "peaks": [list(p) for p in peaks], "background": background,
             "noise_std": noise, "grid": list(grid), "seed": seed}
    write_spectrum(spec, f"{args.output}.csv")
    atomic_write_text(f"{args.output}.truth.json", _dump(truth))


def _synth_afm(args, base):
    def pick(name, default):
        v = getattr(args, name)
        return v if v is not None else base.get(name, default)

    nx, ny = int(pick("nx", 256)), int(pick("ny", 256))
    sigma, offs = pick("sigma_pm", 350.0), pick("row_offsets_std_pm", 0.0)
    poly = pick("poly_coeffs", [])
    seed = pick("seed", 0)
    m = synth_afm(nx, ny, sigma, poly, offs, seed)
    truth = {"kind": "afm", "nx": nx, "ny": ny, "sigma_pm": sigma, "row_offsets_std_pm": offs,
             "poly_coeffs": list(poly), "seed": seed,
             "poly_terms": [list(t) for t in afm_mod.poly_terms(_degree_of(len(poly)))]}
    write_afm(m, f"{args.output}.txt")
    atomic_write_text(f"{args.output}.truth.json", _dump(truth))


def _degree_of(n_terms):
    d = 0
    while len(afm_mod.poly_terms(d)) < n_terms:
        d += 1
    return d if n_terms else -1


def cmd_synth(args):
    base = _load_json(args.config) if args.config else {}
    if not isinstance(base, dict):
        raise ConfigError("config file must hold a JSON object")
    {"ple": _synth_ple, "spectrum": _synth_spectrum, "afm": _synth_afm}[args.kind](args, base)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _peak_triplet(text):
    vals = _float_list(text)
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("peak must be center_nm,height,fwhm_nm")
    return vals


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="plekit", description="PLE, spectra and AFM analysis toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    lw = sub.add_parser("linewidth", formatter_class=fmt,
                        help="A1/A2 linewidths of one PLE scan")
    lw.add_argument("scan", help="scan JSON file")
    lw.add_argument("-o", "--output", default=None, help="result JSON (stdout if omitted)")
    lw.add_argument("--method", choices=("aligned", "summed"), default="aligned",
                    help="linewidth estimator")
    lw.add_argument("--splitting-mhz", type=_pos_float, default=None,
                    help="override the scan's A1-A2 splitting (MHz)")
    lw.add_argument("--constraints", default=None,
                    help="fit constraint JSON (derived from the scan if omitted)")
    lw.add_argument("--a1-high", action="store_true", default=False,
                    help="label the higher-voltage peak A1")
    lw.add_argument("--poisson-weights", action="store_true", default=False,
                    help="weight residuals by the inverse fitted model (Poisson variance)")
    lw.add_argument("--verbose", action="store_true", default=False,
                    help="add statistical fit errors and provenance to the JSON")
    lw.set_defaults(func=cmd_linewidth)

    wd = sub.add_parser("wander", formatter_class=fmt,
                        help="spectral-wandering rate histogram")
    wd.add_argument("inputs", nargs="+",
                    help="scan JSON files and/or sample CSV files (" + SAMPLES_HEADER + ")")
    wd.add_argument("-o", "--output-dir", required=True,
                    help="directory for histogram.csv, summary.json, samples.csv")
    wd.add_argument("--sigma-threshold", type=_pos_float, default=DEFAULT_SIGMA_THRESHOLD,
                    help="reject samples with sigma above this (MHz/s)")
    wd.add_argument("--bin-width", type=_bin_width, default="auto",
                    help="bin width in MHz/s, or 'auto' for the largest per-region mean sigma")
    wd.add_argument("--center", choices=("mean", "a1", "a2"), default="mean",
                    help="tracked peak position")
    wd.add_argument("--magnitude", action="store_true", default=False,
                    help="histogram |rate| instead of the signed rate")
    wd.add_argument("--splitting-mhz", type=_pos_float, default=None,
                    help="override the scans' A1-A2 splitting (MHz)")
    wd.add_argument("--constraints", default=None,
                    help="fit constraint JSON applied to every scan (derived per scan if omitted)")
    wd.add_argument("--a1-high", action="store_true", default=False,
                    help="label the higher-voltage peak A1")
    wd.add_argument("--poisson-weights", action="store_true", default=False,
                    help="weight residuals by the inverse fitted model (Poisson variance)")
    wd.set_defaults(func=cmd_wander)

    sp = sub.add_parser("spectra", formatter_class=fmt,
                        help="peak extraction and ZPL classification of spectra")
    sp.add_argument("paths", nargs="+", help="spectrum CSV files or directories of them")
    sp.add_argument("-o", "--output-dir", required=True,
                    help="directory for classifications.json and batch_stats.csv")
    sp.add_argument("--windows", default=None,
                    help="ZPL window JSON {\"v1\":[lo,hi],\"v2\":[lo,hi]} "
                         f"(built-in: v1={list(spec_mod.V1_WINDOW_NM)}, "
                         f"v2={list(spec_mod.V2_WINDOW_NM)})")
    sp.add_argument("--min-prominence", type=_prominence, default="auto",
                    help="minimum peak prominence; 'auto' = 3 x median absolute deviation")
    sp.add_argument("--min-height", type=float, default=0.0, help="minimum peak intensity")
    sp.add_argument("--min-distance", type=_nonneg_int, default=1,
                    help="minimum peak spacing in samples")
    sp.add_argument("--region", default=None,
                    help="region label for all spectra (default: parent directory name)")
    sp.set_defaults(func=cmd_spectra)

    af = sub.add_parser("afm", formatter_class=fmt, help="RMS / mean roughness of an AFM map")
    af.add_argument("input", help="AFM text file")
    af.add_argument("-o", "--output", default=None, help="result JSON (stdout if omitted)")
    af.add_argument("--degree", type=_nonneg_int, default=2, help="polynomial background degree")
    af.add_argument("--row-correction", choices=afm_mod.ROW_MODES, default="median",
                    help="scanline offset correction")
    af.set_defaults(func=cmd_afm)

    sy = sub.add_parser("synth", formatter_class=fmt, help="synthetic data with ground truth")
    kinds = sy.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    common = _Parser(add_help=False)
    common.add_argument("-o", "--output", required=True,
                        help="output prefix; data and <prefix>.truth.json are written")
    common.add_argument("--config", default=None,
                        help="JSON config; explicit flags override its entries")

    sp_ple = kinds.add_parser("ple", parents=[common], formatter_class=argparse.HelpFormatter,
                              help="PLE scan with random-walk wandering")
    for f in fields(PleSynthConfig):
        flag = _PLE_FLAGS[f.name]
        helptext = f"{f.name.replace('_', ' ')} (default: {f.default})"
        if f.type in ("bool", bool):
            sp_ple.add_argument(flag, dest=f.name, action="store_const", const=True,
                                default=None, help=helptext)
        elif f.type in ("int", int):
            sp_ple.add_argument(flag, dest=f.name, type=_nonneg_int, default=None, help=helptext)
        elif f.type in ("str", str):
            sp_ple.add_argument(flag, dest=f.name, default=None, help=helptext)
        else:
            sp_ple.add_argument(flag, dest=f.name, type=float, default=None, help=helptext)

    sp_spec = kinds.add_parser("spectrum", parents=[common], help="spectrum with planted peaks")
    sp_spec.add_argument("--peak", type=_peak_triplet, action="append", default=None,
                         help="center_nm,height,fwhm_nm; repeatable (default: no peaks)")
    sp_spec.add_argument("--background", type=float, default=None, help="flat background (default: 0.0)")
    sp_spec.add_argument("--noise-std", type=float, default=None, help="Gaussian noise std (default: 0.0)")
    sp_spec.add_argument("--grid", type=_float_list, default=None,
                         help="start,stop,n wavelength grid (default: 840,940,501)")
    sp_spec.add_argument("--seed", type=_nonneg_int, default=None, help="PRNG seed (default: 0)")

    sp_afm = kinds.add_parser("afm", parents=[common], help="rough AFM height map")
    sp_afm.add_argument("--nx", type=_nonneg_int, default=None, help="columns (default: 256)")
    sp_afm.add_argument("--ny", type=_nonneg_int, default=None, help="rows (default: 256)")
    sp_afm.add_argument("--sigma-pm", type=float, default=None,
                        help="white roughness std in pm (default: 350.0)")
    sp_afm.add_argument("--row-offsets-std-pm", type=float, default=None,
                        help="per-row offset std in pm (default: 0.0)")
    sp_afm.add_argument("--poly-coeffs", type=_float_list, default=None,
                        help="background polynomial coefficients in nm, comma separated, "
                             "terms ordered 1, x, y, x^2, xy, y^2, ... (default: none)")
    sp_afm.add_argument("--seed", type=_nonneg_int, default=None, help="PRNG seed (default: 0)")
    sy.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        code, msg = EXIT_USAGE, exc
    except (IoError, ParseError, ValidationError) as exc:
        code, msg = EXIT_IO, exc
    except NonConvergence as exc:
        code, msg = EXIT_NONCONVERGENCE, exc
    except (AnalysisError, PreconditionError) as exc:
        code, msg = EXIT_ANALYSIS, exc
    print(f"plekit {args.command}: error: {msg}", file=sys.stderr)
    return code


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
