"""Command-line pipeline: simulate, analyze, efficiency, calibrate, selftest.

Runs are reproducible from config + seed alone; the seed and the worker
count can be overridden with PAIRSIFT_SEED and PAIRSIFT_THREADS.  Errors
exit nonzero with a machine-readable JSON diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, PairsiftError
from .estimators import full_report
from .histograms import (
    GateWindow,
    coincidence_histogram,
    sync_histogram,
    threefold_histogram,
)
from .polarization import (
    NonlinearTensor,
    default_configs,
    efficiency_table,
    thickness_sweep,
)
from .simulate import (
    EmissionConfig,
    default_cw_config,
    default_pulsed_config,
    simulate,
)
from .spectroscopy import (
    SpectralSummary,
    fit_calibration,
    read_calibration_csv,
)
from .stream import Channel, read_stream, write_stream
from .stream import read_stream_csv, write_stream_csv

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2


def _fail(exc: Exception, category: str = None) -> int:
    category = category or getattr(exc, "category", "error")
    print(json.dumps({"error": {"category": category, "message": str(exc)}}),
          file=sys.stderr)
    return EXIT_CONFIG if category in ("config", "usage") else EXIT_ERROR


def _load_config(path: str) -> EmissionConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config {path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}") from exc
    return EmissionConfig.from_dict(data)


def _env_int(name: str):
    raw = os.environ.get(name)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{name} must be an integer, got {raw!r}") from exc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.config == "pulsed-default":
        cfg = default_pulsed_config()
    elif args.config == "cw-default":
        cfg = default_cw_config()
    else:
        cfg = _load_config(args.config)
    seed = _env_int("PAIRSIFT_SEED")
    if args.seed is not None:
        seed = args.seed
    if seed is not None:
        cfg = EmissionConfig.from_dict({**cfg.to_dict(), "seed": seed})
    threads = args.threads or _env_int("PAIRSIFT_THREADS") or 1
    stream = simulate(cfg, threads=threads)
    out = Path(args.out)
    if args.csv:
        write_stream_csv(stream, out)
    else:
        write_stream(stream, out)
    if not args.quiet:
        echo = {"config": cfg.to_dict(), "events": len(stream),
                "output": str(out), "threads": threads}
        print(json.dumps(echo, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_analyze(args) -> int:
    path = Path(args.tagfile)
    stream = read_stream_csv(path) if path.suffix == ".csv" else read_stream(path)
    gate = None
    if args.gate_offset_ps is not None and args.gate_width_ps is not None:
        gate = GateWindow(args.gate_offset_ps, args.gate_width_ps)
    report = full_report(
        stream,
        eta_det=args.eta_det,
        d=args.modes,
        gate=gate,
        use_gate=not args.no_gate,
        window_t_ps=args.window_ps,
        cell_ps=args.cell_ps,
        threshold_fraction=args.threshold,
    )
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    coincidence_histogram(stream, args.bin_ps, args.range_ps).to_csv(
        outdir / "coincidence.csv")
    if report.regime == "pulsed":
        for channel, name in ((Channel.DET1, "sync_det1.csv"),
                              (Channel.DET2, "sync_det2.csv")):
            sync_histogram(stream, channel, args.bin_ps,
                           (-args.range_ps, args.range_ps)).to_csv(outdir / name)
        threefold_histogram(stream, args.bin_ps, args.range_ps).to_csv(
            outdir / "threefold.csv")
        if report.gate is not None:
            with open(outdir / "gate.json", "w", encoding="utf-8") as fh:
                json.dump(report.gate.to_dict(), fh, sort_keys=True)
                fh.write("\n")
    print(report.to_text())
    return EXIT_OK


def cmd_efficiency(args) -> int:
    tensor = NonlinearTensor()
    if args.tensor_file:
        try:
            with open(args.tensor_file, "r", encoding="utf-8") as fh:
                data = json.load(fh)
            tensor = NonlinearTensor(**data)
        except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad tensor file {args.tensor_file}: {exc}") from exc
    configs = default_configs(tensor)
    if args.sweep:
        lo, hi, steps = args.sweep
        grid, curves = thickness_sweep(configs, lo, hi, int(steps))
        out = Path(args.out or "efficiency_sweep.csv")
        labels = list(curves)
        with open(out, "w", encoding="utf-8") as fh:
            fh.write("thickness_um," + ",".join(labels) + "\n")
            for i, L in enumerate(grid):
                row = ",".join(f"{curves[lab][i]:.9g}" for lab in labels)
                fh.write(f"{L:.6g},{row}\n")
        print(f"wrote sweep over [{lo}, {hi}] um ({int(steps)} points) to {out}")
        return EXIT_OK
    rows = efficiency_table(configs, args.thickness_um)
    print(f"thickness {args.thickness_um:g} um "
          f"(efficiency in (pm/V)^2 um^2, normalized to strongest)")
    print(f"{'config':8} {'type':8} {'chi_eff':>8} {'L_coh_um':>9} "
          f"{'efficiency':>12} {'normalized':>11}")
    for cfg, eff, normed in rows:
        print(f"{cfg.label:8} {cfg.phase_matching_type:8} {cfg.chi_eff:8.2f} "
              f"{cfg.l_coh_um:9.2f} {eff:12.4f} {normed:11.6f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("config,type,chi_eff_pm_v,l_coh_um,efficiency,normalized\n")
            for cfg, eff, normed in rows:
                fh.write(f"{cfg.label},{cfg.phase_matching_type},{cfg.chi_eff:g},"
                         f"{cfg.l_coh_um:g},{eff:.9g},{normed:.9g}\n")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    points = read_calibration_csv(args.points)
    fit = fit_calibration(points)
    a2, a1, a0 = fit.coefficients
    print(f"quadratic fit: wavelength_nm = {a2:.6g}*t^2 + {a1:.6g}*t + {a0:.6g} "
          f"(t in ps)")
    print(f"rms residual : {fit.rms_residual_nm:.4g} nm")
    for p, r in zip(points, fit.residuals_nm):
        print(f"  delay {p.delay_ps:10.3f} ps  wavelength {p.wavelength_nm:9.3f} nm"
              f"  residual {r:+.3g} nm")
    if args.band:
        summary = SpectralSummary.from_band(tuple(args.band), args.corr_width_thz)
        print(f"band {summary.band_nm[0]:g}-{summary.band_nm[1]:g} nm = "
              f"{summary.delta_nu_thz:.4g} THz; "
              f"modes R = {summary.mode_count_raw:.4g} (~{summary.mode_count})")
    if args.spectrum:
        outdir = Path(args.out_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        rows = []
        with open(args.spectrum, "r", encoding="utf-8") as fh:
            header = fh.readline()
            for line in fh:
                if line.strip():
                    start, count = line.strip().split(",")
                    rows.append((float(start), int(count)))
        out = outdir / "spectrum.csv"
        with open(out, "w", encoding="utf-8") as fh:
            fh.write("wavelength_nm,count\n")
            for start, count in rows:
                fh.write(f"{fit.wavelength(start):.4f},{count}\n")
        print(f"wrote mapped spectrum to {out}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    """Quick internal consistency run on a small simulation."""
    from .stats import MixtureParams, p_simple, purity_from_p
    from .histograms import apply_gate, find_gate
    checks = []

    low = purity_from_p(p_simple(MixtureParams(0.01, 0.2, 1130)), 1130)
    high = purity_from_p(p_simple(MixtureParams(0.9, 0.2, 1130)), 1130)
    checks.append(("analytic purity span", abs(low - 0.0024) < 2e-4
                   and abs(high - 0.9956) < 1e-3))

    cfg = default_pulsed_config(pulses=20_000, seed=123)
    s1 = simulate(cfg, threads=1)
    s2 = simulate(cfg, threads=4)
    checks.append(("deterministic across workers", s1 == s2))

    combined = (sync_histogram(s1, Channel.DET1, 10, (-2000, 8000))
                + sync_histogram(s1, Channel.DET2, 10, (-2000, 8000)))
    gate = find_gate(combined)
    gated = apply_gate(s1, gate)
    checks.append(("gate idempotent", apply_gate(gated, gate) == gated))
    checks.append(("gate reduces stream", len(gated) < len(s1)))

    report = full_report(s1, eta_det=0.1)
    checks.append(("report purity in range",
                   report.purity_simple is not None
                   and 0.0 <= report.purity_simple <= 1.0))

    ok = True
    for name, passed in checks:
        print(f"[{'PASS' if passed else 'FAIL'}] {name}")
        ok &= passed
    return EXIT_OK if ok else EXIT_ERROR


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairsift",
        description="Photon-pair source simulator and time-tag analysis toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a tag stream from a config")
    p_sim.add_argument("config",
                       help="JSON config path, or 'pulsed-default' / 'cw-default'")
    p_sim.add_argument("--out", default="stream.psft", help="output tag file path")
    p_sim.add_argument("--csv", action="store_true",
                       help="write CSV (channel,time_ps,origin) instead of binary")
    p_sim.add_argument("--seed", type=int, default=None,
                       help="override the config RNG seed (64-bit integer)")
    p_sim.add_argument("--threads", type=int, default=None,
                       help="worker threads; output is identical for any value")
    p_sim.add_argument("--quiet", action="store_true",
                       help="suppress the resolved-config echo")
    p_sim.set_defaults(func=cmd_simulate)

    p_an = sub.add_parser("analyze", help="full estimator report plus histograms")
    p_an.add_argument("tagfile", help="binary .psft or .csv tag file")
    p_an.add_argument("--eta-det", type=float, default=0.1,
                      help="assumed detection efficiency per channel (fraction)")
    p_an.add_argument("--modes", type=int, default=None,
                      help="mode count d for the purity models")
    p_an.add_argument("--no-gate", action="store_true",
                      help="skip distillation; report whole-period statistics")
    p_an.add_argument("--gate-offset-ps", type=int, default=None,
                      help="explicit gate start relative to trigger (ps)")
    p_an.add_argument("--gate-width-ps", type=int, default=None,
                      help="explicit gate width (ps)")
    p_an.add_argument("--threshold", type=float, default=0.05,
                      help="gate search threshold as a fraction of peak height")
    p_an.add_argument("--window-ps", type=int, default=None,
                      help="CW coincidence window width (ps)")
    p_an.add_argument("--cell-ps", type=int, default=None,
                      help="CW coherence-cell duration for N0 recovery (ps)")
    p_an.add_argument("--bin-ps", type=int, default=50,
                      help="histogram bin width (ps)")
    p_an.add_argument("--range-ps", type=int, default=5000,
                      help="histogram half-range around zero delay (ps)")
    p_an.add_argument("--out-dir", default="analysis",
                      help="directory for report.json and histogram CSVs")
    p_an.set_defaults(func=cmd_analyze)

    p_eff = sub.add_parser("efficiency",
                           help="polarization-configuration efficiency table")
    p_eff.add_argument("--tensor-file", default=None,
                       help="JSON with d22/d31/d33 overrides (pm/V)")
    p_eff.add_argument("--thickness-um", type=float, default=7.0,
                       help="film thickness (micrometers)")
    p_eff.add_argument("--sweep", nargs=3, type=float, default=None,
                       metavar=("L_MIN", "L_MAX", "STEPS"),
                       help="sweep thickness range (um um count) to CSV")
    p_eff.add_argument("--out", default=None, help="CSV output path")
    p_eff.set_defaults(func=cmd_efficiency)

    p_cal = sub.add_parser("calibrate",
                           help="fit the delay->wavelength calibration")
    p_cal.add_argument("points", help="CSV of delay_ps,wavelength_nm anchors")
    p_cal.add_argument("--band", nargs=2, type=float, default=None,
                       metavar=("NM_MIN", "NM_MAX"),
                       help="spectral band for the mode count (nm nm)")
    p_cal.add_argument("--corr-width-thz", type=float, default=0.06,
                       help="correlation (pump) width (THz)")
    p_cal.add_argument("--spectrum", default=None,
                       help="delay-histogram CSV (bin_start_ps,count) to map")
    p_cal.add_argument("--out-dir", default="analysis",
                       help="directory for the mapped spectrum")
    p_cal.set_defaults(func=cmd_calibrate)

    p_self = sub.add_parser("selftest", help="run built-in consistency checks")
    p_self.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PairsiftError as exc:
        return _fail(exc)
    except (ValueError, ZeroDivisionError) as exc:
        return _fail(exc, category="analysis")
    except OSError as exc:
        return _fail(exc, category="io")


if __name__ == "__main__":
    sys.exit(main())
