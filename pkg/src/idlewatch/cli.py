"""Command-line interface.

Units at this boundary: angles in degrees, INR and interference amplitude in
dB relative to the noise level, natural logarithms for FAR. Internally
everything is radians and linear amplitude.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .cusum import CusumDetector
from .doa import sliding_doa
from .exceptions import NumericalFailure
from .glr import GlrDetector
from .iqsn import atomic_write, read_iqsn, write_iqsn
from .montecarlo import SweepSpec, calibrate_threshold, estimate_far, run_sweep
from .signal_model import InterferenceParams, ScenarioConfig, UlaGeometry, synthesize_snapshots
from .stats import fitted_a_n, inr_db_to_sigma, kl_information, theorem1_bounds

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3
DEFAULT_THEOREM1_DB = (0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 8.0, 10.0)
FULL_SCALE_TRIALS = 10**7

logger = logging.getLogger("idlewatch")


class UsageError(Exception):
    pass


class InputError(Exception):
    """Unreadable or malformed input file."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_json(path, what):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {what} {path}: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: "
                         f"{exc.msg}") from None


def _read_snapshots(path):
    try:
        return read_iqsn(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _read_amplitude_csv(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    rows = [row for row in csv.reader(io.StringIO(text)) if row]
    if rows and rows[0] and not _is_number(rows[0][-1]):
        header = [c.strip() for c in rows[0]]
        col = header.index("r") if "r" in header else len(header) - 1
        rows = rows[1:]
    else:
        col = -1
    try:
        values = np.array([float(row[col]) for row in rows])
    except (ValueError, IndexError) as exc:
        raise InputError(f"{path}: bad amplitude value ({exc})") from None
    if values.size == 0 or np.any(values < 0) or not np.all(np.isfinite(values)):
        raise InputError(f"{path}: amplitudes must be a nonempty column of finite values >= 0")
    return values


def _is_number(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


def _open_output(path):
    """Atomic file writer, or stdout for ``-``/None."""
    if path in (None, "-"):
        return _StdoutWriter()
    return atomic_write(path, "w")


class _StdoutWriter:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        sys.stdout.flush()
        return False


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return "nan" if math.isnan(value) else repr(float(value))
    return value


def _sigma_i(args):
    if args.sigma_i is not None:
        if args.sigma_i <= 0:
            raise UsageError("--sigma-i must be > 0")
        return args.sigma_i
    return float(inr_db_to_sigma(args.inr_db)) * args.sigma_n


# ---- simulate ---------------------------------------------------------------

def cmd_simulate(args):
    data = _load_json(args.scenario, "scenario") if args.scenario else {}
    try:
        scenario = ScenarioConfig.from_dict(data)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    overrides = {}
    if args.seed is not None:
        overrides["rng_seed"] = args.seed
    if args.change_point is not None:
        overrides["change_point"] = args.change_point
    if args.inr_db is not None or args.direction_deg is not None:
        base = scenario.interference or InterferenceParams(amplitude=0.0)
        amp = (float(inr_db_to_sigma(args.inr_db)) * scenario.noise_std
               if args.inr_db is not None else base.amplitude)
        direction = math.radians(args.direction_deg) if args.direction_deg is not None \
            else base.direction
        try:
            overrides["interference"] = InterferenceParams(amp, direction, base.phase_model,
                                                           base.phase)
        except ValueError as exc:
            raise UsageError(f"--direction-deg: {exc}") from None
        if scenario.interference is None and args.change_point is None:
            overrides["change_point"] = 1
    try:
        scenario = ScenarioConfig(**{**scenario.__dict__, **overrides})
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    Y = synthesize_snapshots(scenario, args.count)
    resolved = scenario.to_dict()
    resolved["count"] = args.count
    sidecar = args.sidecar or f"{args.out}.json"
    write_iqsn(args.out, Y)
    with atomic_write(sidecar, "w") as fh:
        json.dump(resolved, fh, indent=2)
    print(json.dumps(resolved), file=sys.stderr)
    return EXIT_OK


# ---- detect -----------------------------------------------------------------

def cmd_detect(args):
    if args.threshold <= 0:
        raise UsageError("--threshold must be > 0")
    sigma_i = _sigma_i(args)
    amplitude_input = args.input.lower().endswith(".csv")
    if args.mode == "cusum":
        if amplitude_input:
            data = _read_amplitude_csv(args.input)
            theta = None
        else:
            if args.theta_deg is None:
                raise UsageError(
                    "--mode cusum on snapshot input requires --theta-deg: CUSUM assumes the "
                    "interference direction is known (use --mode glr when it is not)"
                )
            data = _read_snapshots(args.input)
            theta = math.radians(args.theta_deg)
        det = CusumDetector(sigma_i=sigma_i, sigma_n=args.sigma_n, threshold=args.threshold,
                            theta=theta, spacing_wavelengths=args.spacing)
        try:
            r = det.amplitudes(data)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        g, alarm = det._run(r, continual=not args.stop_at_first)
        r = r[: g.size]
        header = ["k", "r", "g", "alarm"]
        rows = zip(range(1, g.size + 1), r, g, alarm)
    else:
        if amplitude_input:
            raise UsageError("--mode glr needs snapshot (IQSN) input, not amplitudes")
        data = _read_snapshots(args.input)
        det = GlrDetector(sigma_i=sigma_i, sigma_n=args.sigma_n, threshold=args.threshold,
                          max_window=args.max_window, spacing_wavelengths=args.spacing,
                          diagonal_loading=args.diagonal_loading)
        out = det.trace(data, continual=not args.stop_at_first)
        alarm = out["alarm"]
        header = ["k", "G", "theta_hat_deg", "alarm", "j_hat"]
        rows = zip(range(1, alarm.size + 1), out["G"], np.degrees(out["theta_hat"]), alarm,
                   out["change_index"])
    with _open_output(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    hits = np.flatnonzero(alarm) + 1
    first = str(hits[0]) if hits.size else "none"
    print(f"first_alarm={first} alarms={hits.size} samples={alarm.size}", file=sys.stderr)
    return EXIT_OK


# ---- doa --------------------------------------------------------------------

def cmd_doa(args):
    Y = _read_snapshots(args.input)
    if args.window > Y.shape[0]:
        raise UsageError(f"--window {args.window} exceeds the {Y.shape[0]} snapshots in the file")
    geometry = UlaGeometry(Y.shape[1], args.spacing)
    with _open_output(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["window_start", "window_end", "theta_deg", "root_modulus"])
        for est in sliding_doa(Y, args.window, args.step, geometry, args.diagonal_loading):
            writer.writerow([est.window[0], est.window[1], _fmt(math.degrees(est.theta_hat)),
                             _fmt(est.root_modulus)])
    return EXIT_OK


# ---- calibrate --------------------------------------------------------------

def _detector(args, sigma_i):
    if args.detector == "cusum":
        return CusumDetector(sigma_i=sigma_i, sigma_n=args.sigma_n)
    return GlrDetector(sigma_i=sigma_i, sigma_n=args.sigma_n, max_window=args.max_window)


def cmd_calibrate(args):
    target = math.exp(-args.target_neg_log_far)
    if not 0 < args.tolerance:
        raise UsageError("--tolerance must be > 0")
    det = _detector(args, _sigma_i(args))
    h = calibrate_threshold(det, target, args.tolerance, args.seed, trials=args.trials,
                            n_jobs=args.n_jobs)
    det.set_params(threshold=h)
    check = estimate_far(det, args.trials, args.seed + 1, n_jobs=args.n_jobs)
    with _open_output(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["detector", "inr_db", "target_neg_log_far", "threshold",
                         "check_neg_log_far", "check_far_stderr"])
        writer.writerow([args.detector, _fmt(args.inr_db), _fmt(args.target_neg_log_far),
                         _fmt(h), _fmt(check.neg_log_far), _fmt(check.stderr)])
    return EXIT_OK


# ---- sweep ------------------------------------------------------------------

def cmd_sweep(args):
    data = _load_json(args.config, "sweep config")
    if isinstance(data, dict):
        if args.full_scale:
            data = {**data, "trials": FULL_SCALE_TRIALS}
        if args.seed is not None:
            data = {**data, "master_seed": args.seed}
    try:
        spec = SweepSpec.from_dict(data)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    records = run_sweep(spec, args.out, args.json, resume=args.resume, n_jobs=args.n_jobs)
    for rec in records:
        print(f"{rec.detector} {rec.inr_db:g} dB h={rec.threshold:g}: "
              f"CADD={rec.cadd_mean:.4g}±{rec.cadd_stderr:.2g} -lnFAR={rec.neg_log_far:.4g}",
              file=sys.stderr)
    return EXIT_OK


# ---- theorem1 ---------------------------------------------------------------

def cmd_theorem1(args):
    status = EXIT_OK
    with _open_output(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["inr_db", "info", "inv_info", "lower", "upper", "fitted_a_n",
                         "within_bounds"])
        for db in args.inr_db:
            if not math.isfinite(db):
                raise UsageError(f"--inr-db values must be finite, got {db}")
            sigma = float(inr_db_to_sigma(db))
            lower, upper = theorem1_bounds(sigma)
            try:
                info = kl_information(sigma)
            except NumericalFailure as exc:
                print(f"inr_db={db:g}: {exc}", file=sys.stderr)
                writer.writerow([_fmt(db), "nan", "nan", _fmt(lower), _fmt(upper), "nan", 0])
                status = EXIT_NUMERICAL
                continue
            inv = 1.0 / info
            ok = lower <= inv <= upper
            if not ok:
                print(f"inr_db={db:g}: 1/I={inv:.6g} outside [{lower:.6g}, {upper:.6g}]",
                      file=sys.stderr)
                status = EXIT_NUMERICAL
            writer.writerow([_fmt(db), _fmt(info), _fmt(inv), _fmt(lower), _fmt(upper),
                             _fmt(fitted_a_n(sigma)), int(ok)])
    return status


# ---- parser -----------------------------------------------------------------

def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {value}")
    return value


def _add_model_flags(p, with_threshold=True):
    amp = p.add_mutually_exclusive_group()
    amp.add_argument("--inr-db", type=float, default=0.0,
                     help="interference-to-noise ratio sigma_I^2/sigma_n^2 in dB (default 0)")
    amp.add_argument("--sigma-i", type=float,
                     help="interference amplitude sigma_I, linear, same units as --sigma-n")
    p.add_argument("--sigma-n", type=float, default=1.0,
                   help="noise standard deviation, linear (default 1)")
    if with_threshold:
        p.add_argument("--threshold", "-H", type=float, required=True,
                       help="alarm threshold h on the log-likelihood statistic (natural log)")


def build_parser():
    parser = _Parser(
        prog="idlewatch",
        description="Interference detection on idle-phase ULA snapshots. Angles are in degrees "
                    "from broadside, INR in dB, logarithms natural.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="synthesize a snapshot stream to an IQSN file",
                       description="Write COUNT snapshots drawn from a scenario to an IQSN file "
                                   "and the resolved scenario to a JSON sidecar.")
    p.add_argument("--scenario", help="scenario JSON (defaults: M=4, d=0.5 wavelengths, "
                                      "noise only)")
    p.add_argument("--count", type=_positive_int, required=True, help="number of snapshots")
    p.add_argument("--out", required=True, help="output IQSN path")
    p.add_argument("--sidecar", help="resolved-scenario JSON path (default OUT.json)")
    p.add_argument("--inr-db", type=float,
                   help="override interference amplitude as INR in dB (sigma_I = "
                        "10^(dB/20) sigma_n)")
    p.add_argument("--direction-deg", type=float,
                   help="override interference direction, degrees from broadside")
    p.add_argument("--change-point", type=_positive_int,
                   help="first snapshot index (1-based) carrying interference")
    p.add_argument("--seed", type=int, help="override the scenario RNG seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="run CUSUM or GLR over a snapshot file",
                       description="Stream a file through a detector and write one CSV row per "
                                   "sample. The summary line on stderr gives the first alarm "
                                   "index or 'none'.")
    p.add_argument("--mode", choices=("cusum", "glr"), required=True)
    p.add_argument("--in", dest="input", required=True,
                   help="IQSN snapshot file, or a CSV of amplitudes r (cusum only, *.csv)")
    p.add_argument("--out", help="per-sample CSV path (default stdout)")
    _add_model_flags(p)
    p.add_argument("--theta-deg", type=float,
                   help="known interference direction in degrees from broadside (cusum)")
    p.add_argument("--max-window", type=_positive_int, default=32,
                   help="GLR candidate window cap L in samples (default 32)")
    p.add_argument("--spacing", type=float, default=0.5,
                   help="element spacing in wavelengths (default 0.5)")
    p.add_argument("--diagonal-loading", action="store_true",
                   help="GLR: load covariance diagonals by 1e-10 trace/M")
    p.add_argument("--stop-at-first", action="store_true",
                   help="stop at the first alarm instead of resetting and continuing")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("doa", help="Root-MUSIC direction estimates over sliding windows",
                       description="Emit window_start, window_end, theta_deg (degrees from "
                                   "broadside), root_modulus per window.")
    p.add_argument("--in", dest="input", required=True, help="IQSN snapshot file")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--window", type=_positive_int, required=True,
                   help="snapshots N per estimate")
    p.add_argument("--step", type=_positive_int, help="window advance (default N)")
    p.add_argument("--spacing", type=float, default=0.5,
                   help="element spacing in wavelengths (default 0.5)")
    p.add_argument("--diagonal-loading", action="store_true",
                   help="load covariance diagonals by 1e-10 trace/M")
    p.set_defaults(func=cmd_doa)

    p = sub.add_parser("calibrate", help="find the threshold for a target false-alarm rate",
                       description="Bisect h on simulated noise-only runs until -ln FAR "
                                   "(natural log) matches the target, then re-check the FAR "
                                   "with a fresh seed.")
    p.add_argument("--detector", choices=("cusum", "glr"), required=True)
    _add_model_flags(p, with_threshold=False)
    p.add_argument("--target-neg-log-far", type=float, default=3.0,
                   help="target -ln FAR, FAR per sample (default 3)")
    p.add_argument("--tolerance", type=float, default=0.05,
                   help="allowed |ln FAR - ln target| (default 0.05)")
    p.add_argument("--trials", type=_positive_int, default=10**4)
    p.add_argument("--max-window", type=_positive_int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-jobs", type=int, default=1)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sweep", help="Monte-Carlo CADD/FAR over an (INR, threshold) grid",
                       description="Run a sweep config (JSON: detector, inr_db list in dB, "
                                   "thresholds, trials, ...) and write one CSV row per cell.")
    p.add_argument("--config", required=True, help="sweep JSON")
    p.add_argument("--out", required=True, help="results CSV")
    p.add_argument("--json", help="JSON summary path")
    p.add_argument("--resume", action="store_true", help="reuse cells completed by a prior run")
    p.add_argument("--n-jobs", type=int, default=1, help="parallel workers (results unchanged)")
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--full-scale", action="store_true",
                   help=f"use {FULL_SCALE_TRIALS:.0e} trials per cell (very slow)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("theorem1", help="KL information and the asymptotic delay-ratio bounds",
                       description="Per INR (dB): I, 1/I, the bounds (s^2+1)/s^4 and "
                                   "(s^2+3)/s^4 with s^2 the linear INR, and the fitted a_N. "
                                   "Exits 2 if any row violates the bounds.")
    p.add_argument("--inr-db", type=float, nargs="+", default=list(DEFAULT_THEOREM1_DB),
                   help="INR values in dB")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_theorem1)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"idlewatch {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"idlewatch {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InputError as exc:
        print(f"idlewatch {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"idlewatch {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"idlewatch {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
