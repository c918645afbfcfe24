"""Command-line front end.

Exit codes: 0 success, 1 invalid input or configuration, 2 I/O or stream
format problem, 3 numerical failure (degenerate or non-converged fit).
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from .analysis import (MandelFitError, PhotonStream, StreamFormatError, coincidence_fidelity,
                       mandel_alpha, predicted_rate, read_stream, write_stream)
from .config import ConfigError, ExperimentConfig
from .correlation import (Correlogram, DegenerateFitError, FitConvergenceError, FixedParams,
                          cross_correlogram, fit_g2)
from .simulator import run_simulation
from .units import UnitError, parse_quantity

OUT_ENV = "ATOMDETECT_OUT"
EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERICAL = 0, 1, 2, 3


def _time(text: str) -> float:
    try:
        return parse_quantity(text, "time")
    except UnitError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _times(text: str) -> list[float]:
    return [_time(t) for t in text.split(",") if t.strip()]


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(path: Path, data: dict) -> None:
    path.write_text(yaml.safe_dump(_plain(data), sort_keys=False))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["run.seed"] = args.seed
    if getattr(args, "duration", None) is not None:
        changes["run.duration"] = args.duration
    if getattr(args, "format", None) is not None:
        changes["run.format"] = args.format
    return cfg.replace(**changes) if changes else cfg


def _merged(paths) -> PhotonStream:
    streams = [read_stream(p) for p in paths]
    return streams[0] if len(streams) == 1 else PhotonStream.merge(*streams)


def _stream_suffix(fmt: str) -> str:
    return ".csv" if fmt == "csv" else ".phts"


def _simulate_to(cfg: ExperimentConfig, out: Path, prefix: str = "", workers: int = 1):
    s0, s1, truth = run_simulation(cfg, workers=workers)
    suffix = _stream_suffix(cfg.run.format)
    paths = [write_stream(out / f"{prefix}ch{i}{suffix}", s, cfg.run.format)
             for i, s in enumerate((s0, s1))]
    truth.dump(out / f"{prefix}truth.yaml")
    return s0, s1, truth, paths


# ------------------------------------------------------------------
# Subcommands
# ------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    if args.no_atoms:
        cfg = cfg.replace(**{"beam.flux": 0.0})
    out = _out_dir(args)
    s0, s1, truth, paths = _simulate_to(cfg, out, workers=args.workers)
    print(f"wrote {paths[0]} ({len(s0)} events), {paths[1]} ({len(s1)} events), "
          f"{out / 'truth.yaml'}")
    return EXIT_OK


def cmd_correlate(args) -> int:
    s0, s1 = read_stream(args.stream0), read_stream(args.stream1)
    corr = cross_correlogram(s0, s1, args.bin_width, args.max_lag, duration=args.duration)
    out = Path(args.out) if args.out else _out_dir(argparse.Namespace(out=None)) / "g2.csv"
    corr.to_csv(out)
    print(f"wrote {out} ({corr.n_bins} bins, {int(corr.raw_counts.sum())} pairs)")
    return EXIT_OK


def cmd_fit(args) -> int:
    corr = Correlogram.from_csv(args.correlogram)
    fixed = FixedParams(args.bg_to_signal, args.drive_y)
    result = fit_g2(corr, fixed, args.exclusion, args.fit_span)
    out = Path(args.out) if args.out else _out_dir(argparse.Namespace(out=None)) / "fit.yaml"
    result.write_report(out)
    p = result.params
    print(f"n_bar={p.n_bar:.4g} T={p.transit_T * 1e6:.4g}us "
          f"Omega/2pi={result.Omega_over_2pi / 1e6:.4g}MHz 1/beta={result.damping_time * 1e6:.4g}us "
          f"reduced_chi2={result.reduced_chi2:.3f}")
    return EXIT_OK


def cmd_mandel(args) -> int:
    stream = _merged(args.streams)
    widths = args.bin_widths or list(np.arange(50e-6, 100e-6 + 1e-9, 5e-6))
    window = tuple(args.fit_window) if args.fit_window else None
    result = mandel_alpha(stream, widths, window, n_bootstrap=args.bootstrap,
                          duration=args.duration)
    out = Path(args.out) if args.out else _out_dir(argparse.Namespace(out=None)) / "mandel.yaml"
    _dump(out, result.report())
    print(f"alpha={result.alpha:.4g}+-{result.std_errors['alpha']:.2g} "
          f"slope={result.slope:.4g}+-{result.std_errors['slope']:.2g}")
    return EXIT_OK


def cmd_fidelity(args) -> int:
    with_s = _merged(args.with_streams)
    without_s = _merged(args.without_streams)
    gates = args.gates or [0.1e-6, 0.5e-6, 1e-6, 2e-6, 5e-6]
    out = Path(args.out) if args.out else _out_dir(argparse.Namespace(out=None)) / "fidelity.csv"
    rows = []
    for g in gates:
        rep = coincidence_fidelity(with_s, without_s, g, args.duration_with,
                                   args.duration_without)
        rows.append((g, rep.fidelity, rep.fidelity_error, rep.coincidences_with,
                     rep.coincidences_without))
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("gate_s", "fidelity", "fidelity_error", "c_with", "c_without"))
        for r in rows:
            w.writerow([repr(float(r[0])), repr(float(r[1])), repr(float(r[2])), r[3], r[4]])
    best = max(rows, key=lambda r: -math.inf if math.isnan(r[1]) else r[1])
    print(f"wrote {out}; best gate {best[0] * 1e6:.3g}us with F={best[1]:.4f}")
    return EXIT_OK


def sweep_table(cfg: ExperimentConfig, drives, workers: int = 1, out: Path | None = None):
    """Simulate, correlate and fit at each drive; returns one row per drive."""
    rows = []
    for i, Y in enumerate(drives):
        c = cfg.replace(**{"drive.intensity_Y": float(Y), "run.seed": cfg.run.seed + 2 * i})
        b = c.replace(**{"beam.flux": 0.0, "run.seed": cfg.run.seed + 2 * i + 1})
        s0, s1, truth = run_simulation(c, workers=workers)
        b0, b1, _ = run_simulation(b, workers=workers)
        D = c.run.duration
        r_tot = (len(s0) + len(s1)) / D
        r_bg = (len(b0) + len(b1)) / D
        r_sig = r_tot - r_bg
        row = {"Y": float(Y), "rate_signal": r_sig, "rate_background": r_bg}
        merged = PhotonStream.merge(s0, s1)
        try:
            m = mandel_alpha(merged)
            row.update(alpha=m.alpha, alpha_err=m.std_errors["alpha"])
        except MandelFitError:
            row.update(alpha=math.nan, alpha_err=math.nan)
        try:
            f = fit_g2(cross_correlogram(s0, s1), FixedParams(max(r_bg / r_sig, 0.0), float(Y)))
            row.update(n_bar=f.params.n_bar, n_bar_err=f.std_errors["n_bar"],
                       transit_T=f.params.transit_T,
                       rate_predicted=predicted_rate(f.params.n_bar, max(row["alpha"], 0.0),
                                                     f.params.transit_T)
                       if math.isfinite(row["alpha"]) else math.nan)
        except (DegenerateFitError, FitConvergenceError, ValueError):
            row.update(n_bar=math.nan, n_bar_err=math.nan, transit_T=math.nan,
                       rate_predicted=math.nan)
        rows.append(row)
    return rows


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    rows = sweep_table(cfg, args.drives, args.workers)
    path = out / "sweep.csv"
    cols = ("Y", "n_bar", "n_bar_err", "alpha", "alpha_err", "transit_T", "rate_signal",
            "rate_predicted", "rate_background")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(float(r[c])) for c in cols])
    print(f"wrote {path} ({len(rows)} drive settings)")
    return EXIT_OK


# ------------------------------------------------------------------
# Parser
# ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="atomdetect",
                                description="Simulate and analyse single-atom cavity "
                                            "detection photon streams.")
    sub = p.add_subparsers(dest="command", required=True)

    def sim_flags(sp):
        sp.add_argument("--config", type=Path, help="YAML configuration file")
        sp.add_argument("--seed", type=_seed)
        sp.add_argument("--duration", type=_time, help="seconds, or with unit (e.g. 300s)")
        sp.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./out)")
        sp.add_argument("--format", choices=("csv", "binary"))
        sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("simulate", help="write two detector streams and a ground-truth sidecar")
    sim_flags(sp)
    sp.add_argument("--no-atoms", action="store_true", help="background-only run (flux 0)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("correlate", help="cross-correlogram of two streams (CSV)")
    sp.add_argument("stream0", type=Path)
    sp.add_argument("stream1", type=Path)
    sp.add_argument("--bin-width", type=_time, default=10e-9)
    sp.add_argument("--max-lag", type=_time, default=10e-6)
    sp.add_argument("--duration", type=_time)
    sp.add_argument("--out", type=Path)
    sp.set_defaults(func=cmd_correlate)

    sp = sub.add_parser("fit", help="fit the g2 model to a correlogram CSV")
    sp.add_argument("correlogram", type=Path)
    sp.add_argument("--bg-to-signal", type=float, default=0.0)
    sp.add_argument("--drive-y", type=float, default=0.24)
    sp.add_argument("--exclusion", type=_time, default=50e-9)
    sp.add_argument("--fit-span", type=_time, default=5e-6)
    sp.add_argument("--out", type=Path)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("mandel", help="photons per atom from bin-size dependence")
    sp.add_argument("streams", type=Path, nargs="+", help="merged before analysis")
    sp.add_argument("--bin-widths", type=_times)
    sp.add_argument("--fit-window", type=float, nargs=2, metavar=("LO", "HI"))
    sp.add_argument("--bootstrap", type=int, default=100)
    sp.add_argument("--duration", type=_time)
    sp.add_argument("--out", type=Path)
    sp.set_defaults(func=cmd_mandel)

    sp = sub.add_parser("fidelity", help="coincidence fidelity over a gate grid")
    sp.add_argument("--with", dest="with_streams", type=Path, nargs="+", required=True)
    sp.add_argument("--without", dest="without_streams", type=Path, nargs="+", required=True)
    sp.add_argument("--gates", type=_times)
    sp.add_argument("--duration-with", type=_time)
    sp.add_argument("--duration-without", type=_time)
    sp.add_argument("--out", type=Path)
    sp.set_defaults(func=cmd_fidelity)

    sp = sub.add_parser("sweep", help="simulate, correlate and fit over drive intensities")
    sim_flags(sp)
    sp.add_argument("--drives", type=_floats, default=[0.05, 0.1, 0.24, 0.5, 1.0, 2.0])
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StreamFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        name = getattr(exc, "filename", None)
        msg = f"{exc.strerror}: {name}" if name and exc.strerror else str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_IO
    except (DegenerateFitError, FitConvergenceError, MandelFitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
