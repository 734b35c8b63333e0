"""Command-line front end.

Subcommands: ``simulate``, ``identify``, ``residuals``, ``preprocess``.
Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from pbsid import __version__, io, preprocess, residual, select, simulate
from pbsid.core import DataError, NumericalError, SignalDataset

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("pbsid")

EXPERIMENT_DEFAULTS = {
    "n_ident": 180,
    "n_valid": 120,
    "sample_period": 96.0,
    "noise_sigma": 0.0,
    "hum_amplitude": 0.0,
    "hum_frequency": 60.0,
}


class UsageError(Exception):
    pass


def load_config(path) -> tuple:
    """Read ``{"rod": {...}, "experiment": {...}}``; both blocks are optional."""
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataError("config must be a JSON object")
    unknown = set(raw) - {"rod", "experiment"}
    if unknown:
        raise DataError(f"unknown config sections: {sorted(unknown)}")
    rod = simulate.RodConfig.from_dict(raw.get("rod", {}))
    exp = dict(EXPERIMENT_DEFAULTS)
    extra = set(raw.get("experiment", {})) - set(exp)
    if extra:
        raise DataError(f"unknown experiment fields: {sorted(extra)}")
    exp.update(raw.get("experiment", {}))
    for key in ("n_ident", "n_valid"):
        if int(exp[key]) != exp[key] or exp[key] < 0:
            raise DataError(f"{key} must be a non-negative integer, got {exp[key]}")
        exp[key] = int(exp[key])
    if not exp["sample_period"] > 0:
        raise DataError("sample_period must be positive")
    return rod, exp


def run_simulation(rod, exp: dict, seed) -> tuple:
    """Identification and validation records from one contiguous experiment.

    Returns ``(ident, valid)``; a segment of zero length is ``None``.
    """
    n_i, n_v = exp["n_ident"], exp["n_valid"]
    total = n_i + n_v
    if total == 0:
        return None, None
    volts = np.sqrt(simulate.prbs_like_inputs(rod.m, total, seed))
    ds = simulate.simulate_rod(
        rod, volts, sample_period=exp["sample_period"], noise_sigma=exp["noise_sigma"],
        hum_amplitude=exp["hum_amplitude"], hum_frequency=exp["hum_frequency"],
        seed=None if seed is None else seed + 1,
    )
    ident = ds.slice(0, n_i) if n_i else None
    valid = ds.slice(n_i, total) if n_v else None
    return ident, valid


def _write_or_header(ds, path, m, r):
    if ds is None:
        io.atomic_write(path, io.dataset_to_csv(None, m, r))
    else:
        io.write_dataset(ds, path)


def cmd_simulate(args) -> int:
    rod, exp = load_config(args.config)
    for key in ("n_ident", "n_valid", "sample_period", "noise_sigma"):
        val = getattr(args, key)
        if val is not None:
            exp[key] = val
    out = Path(args.out)
    if not out.is_dir():
        raise DataError(f"output directory {out} does not exist")
    ident, valid = run_simulation(rod, exp, args.seed)
    _write_or_header(ident, out / "identification.csv", rod.m, rod.r)
    _write_or_header(valid, out / "validation.csv", rod.m, rod.r)
    print(f"wrote {exp['n_ident']} identification and {exp['n_valid']} validation samples to {out}")
    return EXIT_OK


def _replay_paths(directory):
    d = Path(directory)
    paths = d / "identification.csv", d / "validation.csv"
    for p in paths:
        if not p.is_file():
            raise DataError(f"replay directory {d} lacks {p.name}")
    return paths


def identification_report(result: select.IdentificationResult) -> dict:
    scan, sel = result.aic, result.selection
    return {
        "aic": [
            {"p": int(p), "aic": float(a), "degenerate": int(p) in scan.degenerate}
            for p, a in zip(scan.p_values, scan.aic_values)
        ],
        "p_hat": scan.p_hat,
        "method": sel.method,
        "grid": [
            {"n": n, "f": f, "e": s.e, "vaf": None if s.vaf is None else list(s.vaf)}
            for (n, f), s in sel.scores.items()
        ],
        "n_hat": sel.n,
        "f_hat": sel.f,
        "e": sel.e,
        "vaf": None if sel.vaf is None else list(sel.vaf),
        "initial_state": sel.initial_state,
    }


def cmd_identify(args) -> int:
    if args.replay:
        ident_path, valid_path = _replay_paths(args.replay)
    elif args.ident and args.valid:
        ident_path, valid_path = args.ident, args.valid
    else:
        raise UsageError("identify needs IDENT and VALID csv files or --replay DIR")
    ident = io.read_dataset(ident_path)
    valid = io.read_dataset(valid_path)
    if (ident.m, ident.r) != (valid.m, valid.r):
        raise DataError(
            f"channel counts differ: identification m={ident.m}, r={ident.r}; "
            f"validation m={valid.m}, r={valid.r}"
        )
    result = select.identify(
        ident, valid, p_max=args.p_max, n_max=args.n_max, method=args.method,
        h=args.h, workers=args.threads,
    )
    sel = result.selection
    provenance = {
        "identification_sha256": io.dataset_hash(ident),
        "validation_sha256": io.dataset_hash(valid),
        "method": sel.method,
        "e": sel.e,
        "vaf": None if sel.vaf is None else list(sel.vaf),
    }
    io.write_model(sel.model, args.out, provenance)
    report_path = args.report or str(Path(args.out).with_suffix("")) + ".report.json"
    io.atomic_write(report_path, io.dumps(identification_report(result)))
    print(f"p_hat={result.p_hat} n_hat={sel.n} f_hat={sel.f} method={sel.method} e={100 * sel.e:.4f}%")
    if sel.vaf is not None:
        print("VAF%: " + " ".join(f"{v:.2f}" for v in sel.vaf))
    return EXIT_OK


def residual_rows(report: residual.ResidualReport):
    """Rows ``(lag, b, s, gamma, bound, violation)`` with 1-based channels."""
    rows = []
    r = report.autocorrelation.shape[1]
    for i in report.lags:
        for b in range(r):
            for s in range(r):
                g = float(report.autocorrelation[i, b, s])
                viol = int(i > 0 and abs(g) > report.bound)
                rows.append((int(i), b + 1, s + 1, g, report.bound, viol))
    return rows


def cmd_residuals(args) -> int:
    model = io.read_model(args.model)
    valid = io.read_dataset(args.valid)
    if (model.m, model.r) != (valid.m, valid.r):
        raise DataError(
            f"dimension mismatch: model has m={model.m}, r={model.r}; "
            f"data has m={valid.m}, r={valid.r}"
        )
    method = select._check_method(args.method)
    N1 = len(valid)
    h = args.h if args.h is not None else select.default_h(model.n, model.r, N1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        x0 = select.estimate_initial_state(
            model, valid.inputs, valid.outputs, h, "A" if method == "A" else "BC"
        )
    yhat = select.simulate(model, x0, valid, method)
    rep = residual.residual_report(valid.outputs, yhat, args.max_lag)
    verdict = residual.whiteness_verdict(rep, args.threshold)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lag", "b", "s", "gamma", "bound", "violation"])
    for row in residual_rows(rep):
        w.writerow([row[0], row[1], row[2], repr(row[3]), repr(row[4]), row[5]])
    io.atomic_write(args.out, buf.getvalue())
    status = "PASS" if verdict.passed else "FAIL"
    print(
        f"whiteness {status}: {100 * verdict.overall_fraction:.2f}% of (entry, lag) values "
        f"outside +/-{rep.bound:.4f} (threshold {100 * verdict.threshold:.1f}%)"
    )
    if verdict.flagged:
        print("flagged entries: " + " ".join(f"({b + 1},{s + 1})" for b, s in verdict.flagged))
    return EXIT_OK


def _downsample_factor(ds: SignalDataset, period: float) -> int:
    ratio = period / ds.sample_period
    factor = int(round(ratio))
    if factor < 1 or abs(ratio - factor) > 1e-6 * ratio:
        raise DataError(
            f"downsample period {period} s is not an integer multiple of the "
            f"sample period {ds.sample_period} s"
        )
    return factor


def condition(ds: SignalDataset, cutoff=None, order=4, outliers=False, downsample_period=None):
    """Outlier removal, low-pass filtering of the outputs, then downsampling."""
    y = np.array(ds.outputs)
    if outliers:
        y = np.column_stack([preprocess.remove_outliers(c) for c in y.T])
    if cutoff is not None:
        spec = preprocess.FilterSpec(cutoff, 1.0 / ds.sample_period, order)
        y = np.column_stack([preprocess.butterworth_lowpass(c, spec) for c in y.T])
    out = SignalDataset(ds.inputs, y, ds.sample_period, ds.timestamps, ds.labels)
    if downsample_period is not None:
        out = preprocess.downsample(out, _downsample_factor(ds, downsample_period))
    return out


def cmd_preprocess(args) -> int:
    raw = io.read_dataset(args.raw)
    if args.psd_out:
        fs = 1.0 / raw.sample_period
        cols = []
        for c in raw.outputs.T:
            f, pxx = preprocess.psd_welch(preprocess.detrend(c, args.psd_detrend), fs, args.segment)
            cols.append(pxx)
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["f"] + [f"y{i + 1}" for i in range(raw.r)])
        for k in range(f.size):
            w.writerow([repr(float(f[k]))] + [repr(float(c[k])) for c in cols])
        io.atomic_write(args.psd_out, buf.getvalue())
    out = condition(raw, args.cutoff, args.order, args.outliers, args.downsample_period)
    io.write_dataset(out, args.out)
    print(f"wrote {len(out)} samples at {out.sample_period:g} s to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pbsid", description="Predictor-based subspace identification.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate the heat rod and write identification/validation CSVs")
    p.add_argument("--config", help="JSON config with 'rod' and 'experiment' blocks")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-ident", type=int, dest="n_ident")
    p.add_argument("--n-valid", type=int, dest="n_valid")
    p.add_argument("--sample-period", type=float, dest="sample_period")
    p.add_argument("--noise-sigma", type=float, dest="noise_sigma")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", help="estimate a state-space model")
    p.add_argument("ident", nargs="?")
    p.add_argument("valid", nargs="?")
    p.add_argument("--replay", help="directory holding identification.csv and validation.csv")
    p.add_argument("--p-max", type=int, default=40, dest="p_max")
    p.add_argument("--n-max", type=int, default=40, dest="n_max")
    p.add_argument("--method", choices=select.METHODS, default="A")
    p.add_argument("--h", type=int, default=None, help="initial-state estimation horizon")
    p.add_argument("--threads", type=int, default=None, help="overrides PBSID_THREADS")
    p.add_argument("--out", default="model.json")
    p.add_argument("--report", default=None, help="report JSON (default: <out>.report.json)")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("residuals", help="residual autocorrelation test")
    p.add_argument("model")
    p.add_argument("valid")
    p.add_argument("--method", choices=select.METHODS, default="A")
    p.add_argument("--max-lag", type=int, default=20, dest="max_lag")
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--h", type=int, default=None)
    p.add_argument("--out", default="residuals.csv")
    p.set_defaults(func=cmd_residuals)

    p = sub.add_parser("preprocess", help="filter, downsample and compute spectra")
    p.add_argument("raw")
    p.add_argument("--out", required=True)
    p.add_argument("--cutoff", type=float, default=None, help="low-pass cutoff in Hz")
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--downsample-period", type=float, default=None, dest="downsample_period")
    p.add_argument("--outliers", action="store_true", help="apply a Hampel filter first")
    p.add_argument("--psd-out", default=None, dest="psd_out")
    p.add_argument("--psd-detrend", choices=("mean", "linear"), default="mean", dest="psd_detrend")
    p.add_argument("--segment", type=int, default=None, help="Welch segment length")
    p.set_defaults(func=cmd_preprocess)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
