"""Generate synthetic data with ``plekit synth`` and analyse it with the CLI.

Every step runs as a subprocess, exactly as a user would run it.  The
script exits non-zero if any command fails or a recovered quantity
misses its ground truth by more than the stated tolerance.

    python scripts/synth_and_analyze.py [--workdir DIR] [--seed N]
"""

import argparse
import json
import subprocess
import sys
import tempfile
from pathlib import Path


def plekit(*args):
    cmd = [sys.executable, "-m", "plekit", *map(str, args)]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise SystemExit(f"{' '.join(cmd[2:])} -> exit {proc.returncode}\n{proc.stderr}")
    return proc.stdout


def check(name, got, want, rel):
    ok = abs(got - want) <= rel * abs(want)
    print(f"{'ok  ' if ok else 'FAIL'} {name}: {got:.4g} (truth {want:.4g}, tol {rel:.1%})")
    return ok


def run(work: Path, seed: int) -> bool:
    ok = True

    # PLE: linewidth and wandering
    ple = work / "ple"
    plekit("synth", "ple", "-o", ple, "--seed", seed, "--walk-std-mhz-per-line", 10,
           "--n-lines", 40)
    truth = json.loads((work / "ple.truth.json").read_text())
    out = json.loads(plekit("linewidth", f"{ple}.json", "--constraints", f"{ple}.constraints.json"))
    ok &= check("aligned fwhm A1 [MHz]", out["fwhm_a1_mhz"], truth["true_fwhm_mhz"], 0.075)
    ok &= check("aligned fwhm A2 [MHz]", out["fwhm_a2_mhz"], truth["true_fwhm_mhz"], 0.075)
    wdir = work / "wander"
    wdir.mkdir(exist_ok=True)
    plekit("wander", f"{ple}.json", "-o", wdir, "--constraints", f"{ple}.constraints.json")
    summary = json.loads((wdir / "summary.json").read_text())
    print(f"     wander: {summary['n_kept']} kept, {summary['n_rejected']} rejected, "
          f"bin width {summary['bin_width_mhz_per_s']:.3g} MHz/s")

    # spectra: one V2 emitter, one empty, one off-window line
    sdir = work / "spectra" / "membrane"
    sdir.mkdir(parents=True, exist_ok=True)
    plekit("synth", "spectrum", "-o", sdir / "v2", "--peak", "917.0,50,0.3", "--background", 5)
    plekit("synth", "spectrum", "-o", sdir / "none", "--background", 5)
    plekit("synth", "spectrum", "-o", sdir / "other", "--peak", "900.0,50,0.3", "--background", 5)
    sout = work / "spectra_out"
    sout.mkdir(exist_ok=True)
    plekit("spectra", sdir, "-o", sout)
    labels = {Path(s["source"]).stem: s["label"]
              for s in json.loads((sout / "classifications.json").read_text())["spectra"]}
    for stem in ("v2", "none", "other"):
        want = {"v2": "V2", "none": "none", "other": "other"}[stem]
        good = labels.get(stem) == want
        print(f"{'ok  ' if good else 'FAIL'} spectrum {stem}: {labels.get(stem)}")
        ok &= good

    # AFM roughness
    afm = work / "afm"
    plekit("synth", "afm", "-o", afm, "--nx", 256, "--ny", 256, "--sigma-pm", 350,
           "--row-offsets-std-pm", 500, "--poly-coeffs", "3,1,-2,0.5,0.2,-1", "--seed", seed)
    rough = json.loads(plekit("afm", f"{afm}.txt"))
    ok &= check("afm Rq [pm]", rough["rq_pm"], 350.0, 0.03)
    return bool(ok)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workdir", default=None, help="keep outputs here (default: temp dir)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if args.workdir:
        work = Path(args.workdir)
        work.mkdir(parents=True, exist_ok=True)
        ok = run(work, args.seed)
    else:
        with tempfile.TemporaryDirectory() as tmp:
            ok = run(Path(tmp), args.seed)
    print("round trip:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
