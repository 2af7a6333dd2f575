"""Command-line entry point: ``psidkit <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import io
import sys

import numpy as np

from .config import ExperimentConfig, load_config
from .errors import ParseError, PsidError
from .experiments import run_experiment
from .filtering import psid_with_filtering
from .kalman import ideal_filtering_model, kalman_filter, kalman_predict, rts_smooth
from .lssm import Dims, FilteringModel, PredictorModel, StochasticModel
from .modelio import model_load, model_save
from .smoothing import SmoothingModel, psid_with_smoothing, smooth_decode
from .subspace import psid_identify

EXPERIMENT_COMMANDS = {
    "convergence": "convergence",
    "decoding": "decoding",
    "shift-baseline": "shift_baseline",
    "backward-compare": "backward_compare",
}


def read_series(path, prefix=None):
    """Read a ``t,x1..xn`` CSV into an ``N x n`` array (the ``t`` column is dropped)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file", line=1)
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0] != "t":
        raise ParseError(f"{path}: header must start with 't'", line=1)
    if prefix is not None:
        expected = [f"{prefix}{k}" for k in range(1, len(header))]
        if header[1:] != expected:
            raise ParseError(f"{path}: expected columns {','.join(expected)}", line=1)
    data = np.empty((len(rows) - 1, len(header) - 1))
    for k, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise ParseError(f"{path}: wrong number of fields", line=k + 2)
        try:
            data[k] = [float(v) for v in row[1:]]
        except ValueError:
            raise ParseError(f"{path}: non-numeric or missing value", line=k + 2) from None
    if not np.all(np.isfinite(data)):
        raise ParseError(f"{path}: non-finite value")
    return data


def write_series(fh, columns, data):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", *columns])
    for t, row in enumerate(data):
        w.writerow([t, *(format(float(v), ".17g") for v in row)])


def _experiment(args, name):
    if args.config:
        cfg = load_config(args.config, default_experiment=name, seed=args.seed, out=args.out)
    else:
        kw = {k: v for k, v in (("seed", args.seed), ("out", args.out)) if v is not None}
        cfg = ExperimentConfig(experiment=name, **kw)
    if cfg.experiment != name:
        raise PsidError(f"config is for {cfg.experiment!r}, not {name!r}")
    run_experiment(cfg, threads=args.threads)
    print(f"wrote results to {cfg.out}")


def _identify(args):
    y = read_series(args.y, "y")
    z = read_series(args.z, "z")
    if y.shape[0] != z.shape[0]:
        raise PsidError("y and z files have different lengths")
    n1 = args.nx if args.n1 is None else args.n1
    dims = Dims(args.nx, y.shape[1], z.shape[1], n_1=n1, horizon_i=args.horizon)
    if args.mode == "smoothing":
        model = psid_with_smoothing(y, z, dims)
    elif args.mode == "filtering":
        model = psid_with_filtering(y, z, dims)
    else:
        # A predictor-only model is stored as a filtering model with a zero update gain.
        p = psid_identify(y, z, dims)
        model = FilteringModel(predictor=p, CzKf=np.zeros((p.n_z, p.n_y)))
    model_save(args.model, model)
    print(f"wrote {args.mode} model to {args.model}")


def decode_columns(model, y):
    """Predicted, filtered and smoothed ``z`` for any loadable model; unavailable blocks are NaN."""
    if isinstance(model, StochasticModel):
        tr = kalman_filter(ideal_filtering_model(model), y)
        zs = rts_smooth(model, y).z_smooth
        return tr.z_pred, tr.z_filt, zs
    if isinstance(model, SmoothingModel):
        tr = kalman_filter(model.forward, y)
        return tr.z_pred, tr.z_filt, smooth_decode(model, y)
    if isinstance(model, FilteringModel):
        tr = kalman_filter(model, y)
        return tr.z_pred, tr.z_filt, np.full_like(tr.z_pred, np.nan)
    if isinstance(model, PredictorModel):
        zp = kalman_predict(model, y).z_pred
        return zp, np.full_like(zp, np.nan), np.full_like(zp, np.nan)
    raise TypeError(f"cannot decode with {type(model).__name__}")


def _decode(args):
    model = model_load(args.model)
    y = read_series(args.y, "y")
    zp, zf, zs = decode_columns(model, y)
    nz = zp.shape[1]
    cols = [f"{kind}{k}" for kind in ("zpred", "zfilt", "zsmooth") for k in range(1, nz + 1)]
    data = np.hstack([zp, zf, zs])
    if args.output:
        with open(args.output, "w", newline="") as fh:
            write_series(fh, cols, data)
    else:
        buf = io.StringIO()
        write_series(buf, cols, data)
        sys.stdout.write(buf.getvalue())


def _positive(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _u64(s):
    v = int(s)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("must be an unsigned 64-bit integer")
    return v


def build_parser():
    parser = argparse.ArgumentParser(prog="psidkit", description="PSID with filtering and smoothing.")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in EXPERIMENT_COMMANDS:
        p = sub.add_parser(cmd, help=f"run the {cmd} experiment")
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=_u64)
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=_positive, default=1)

    p = sub.add_parser("identify", help="fit a model from y and z CSV files")
    p.add_argument("y")
    p.add_argument("z")
    p.add_argument("--nx", type=_positive, required=True)
    p.add_argument("--n1", type=int, help="z-prioritised states (default: nx)")
    p.add_argument("--horizon", type=_positive, default=10)
    p.add_argument("--mode", choices=("predictor", "filtering", "smoothing"), default="filtering")
    p.add_argument("--model", "-o", required=True, help="output model file")

    p = sub.add_parser("decode", help="estimate z from y with a saved model")
    p.add_argument("model")
    p.add_argument("y")
    p.add_argument("--output", "-o", help="write CSV here instead of standard output")
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # Usage errors exit 1 like every other failure; --help still exits 0.
        return 0 if exc.code in (0, None) else 1
    try:
        if args.command in EXPERIMENT_COMMANDS:
            _experiment(args, EXPERIMENT_COMMANDS[args.command])
        elif args.command == "identify":
            _identify(args)
        else:
            _decode(args)
    except (PsidError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
