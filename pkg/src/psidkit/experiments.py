"""Simulation experiments producing plot-ready CSV files.

Every (model, N) cell draws its randomness from a stream seeded by
``(seed, model_id, N, purpose)``, so results do not depend on the order in
which a worker pool finishes cells.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .errors import PsidError
from .evaluation import (
    PARAMETERS, align_models, compare_parameters, learned_kf, shifted_decode, shifted_psid_baseline, true_targets,
)
from .filtering import learn_filter_gain, psid_with_filtering
from .kalman import ideal_decode, kalman_filter
from .lssm import Dims, backward_stochastic_form, extended_observability
from .metrics import r2_score
from .simulation import generate_random_model, simulate, z_relevant_states
from .smoothing import psid_with_smoothing, smooth_decode

log = logging.getLogger(__name__)

NA = "NA"
_STREAMS = {"model": 0, "train": 1, "test": 2, "align": 3}

CONVERGENCE_COLUMNS = ("model_id", "N") + PARAMETERS
DECODING_COLUMNS = (
    "model_id", "r2_pred_ideal", "r2_pred_learned", "r2_filt_ideal", "r2_filt_learned",
    "r2_smooth_ideal", "r2_smooth_learned",
)
SHIFT_COLUMNS = ("model_id", "r2_ideal_pred", "r2_shifted", "r2_psid_filtering", "r2_ideal_filt")
MODEL_COLUMNS = ("model_id", "n_x", "n_y", "n_z", "n_1", "z_observable", "correlated_S")
# Recoverable identification failures; a cell that hits one is written as NA.
CELL_ERRORS = (PsidError, np.linalg.LinAlgError)


def cell_rng(seed, model_id, N, purpose):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(model_id), int(N), _STREAMS[purpose]]))


def is_observable(C, A, rtol=1e-10):
    n = A.shape[0]
    s = np.linalg.svd(extended_observability(C, A, n), compute_uv=False)
    return s.size >= n and s[0] > 0 and s[n - 1] > rtol * s[0]


def model_for(cfg: ExperimentConfig, model_id):
    return generate_random_model(cfg.gen_config(), cell_rng(cfg.seed, model_id, 0, "model"))


def _dims(model, n1, i):
    return Dims(model.n_x, model.n_y, model.n_z, n_1=n1, horizon_i=i)


def _fmt(v):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return NA
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".10g")


def write_csv(path, columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    Path(path).write_text(buf.getvalue())


def read_csv(path):
    """Rows as dicts of floats, with ``NA`` read as ``None``."""
    with open(path, newline="") as fh:
        return [{k: _parse_cell(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def _parse_cell(v):
    if v == NA:
        return None
    try:
        return float(v)
    except ValueError:
        return v


def _map(fn, tasks, threads, label):
    """Evaluate ``fn`` over ``tasks`` and return results in task order."""
    out = []
    if threads <= 1:
        results = map(fn, tasks)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=threads)
        results = pool.map(fn, tasks)
    try:
        for k, r in enumerate(results, 1):
            print(f"[{label}] {k}/{len(tasks)}", file=sys.stderr, flush=True)
            out.append(r)
    finally:
        if pool is not None:
            pool.shutdown()
    return out


def _warn(label, model_id, N, exc):
    print(f"[{label}] model {model_id} N={N}: {type(exc).__name__}: {exc}", file=sys.stderr, flush=True)


# --- convergence ---------------------------------------------------------

def _aligned_errors(targets, learned, true_m, y_align):
    _, aligned = align_models(true_m, learned, y_align)
    err = compare_parameters(targets, aligned)
    kf = learned_kf(aligned)
    err["K_f"] = None if kf is None or targets.get("K_f") is None else float(
        np.linalg.norm(kf - targets["K_f"]) / np.linalg.norm(targets["K_f"]))
    return err


def convergence_cell(args):
    cfg, model_id, N = args
    true_m = model_for(cfg, model_id)
    row = {"model_id": model_id, "N": N}
    try:
        y, z, _ = simulate(true_m, N, cell_rng(cfg.seed, model_id, N, "train"))
        dims = _dims(true_m, z_relevant_states(true_m), cfg.horizon_i)
        fm = psid_with_filtering(y, z, dims)
        if true_m.n_z < true_m.n_x:
            # Cz alone cannot pin Kf down; the stacked horizon readout may.
            h = learn_filter_gain(fm.predictor, y, z, variant="horizon", i=cfg.horizon_i)
            fm = fm.replace(GammaZKf=h.GammaZKf)
        y_align, _, _ = simulate(true_m, cfg.align_N, cell_rng(cfg.seed, model_id, 0, "align"))
        row.update(_aligned_errors(true_targets(true_m), fm, true_m, y_align))
    except CELL_ERRORS as exc:
        _warn("convergence", model_id, N, exc)
    return row


def model_rows(cfg):
    rows = []
    for m in range(cfg.n_models):
        tm = model_for(cfg, m)
        rows.append({
            "model_id": m, "n_x": tm.n_x, "n_y": tm.n_y, "n_z": tm.n_z, "n_1": z_relevant_states(tm),
            "z_observable": is_observable(tm.Cz, tm.A), "correlated_S": bool(np.any(tm.S != 0)),
        })
    return rows


def summarize(rows, params):
    """Mean and standard error of the mean per (N, parameter), skipping NA."""
    out = []
    for N in sorted({r["N"] for r in rows}):
        for p in params:
            vals = np.array([r[p] for r in rows if r["N"] == N and r.get(p) is not None], dtype=float)
            n = vals.size
            out.append({
                "N": N, "parameter": p, "count": n,
                "mean": vals.mean() if n else None,
                "sem": vals.std(ddof=1) / np.sqrt(n) if n > 1 else None,
            })
    return out


def run_convergence(cfg: ExperimentConfig, threads=1):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(cfg, m, N) for m in range(cfg.n_models) for N in cfg.sample_sizes]
    rows = _map(convergence_cell, tasks, threads, "convergence")
    write_csv(out / "convergence.csv", CONVERGENCE_COLUMNS, rows)
    write_csv(out / "convergence_summary.csv", ("N", "parameter", "count", "mean", "sem"), summarize(rows, PARAMETERS))
    write_csv(out / "models.csv", MODEL_COLUMNS, model_rows(cfg))
    return rows


# --- decoding ------------------------------------------------------------

def _train_test(cfg, true_m, model_id, N):
    y, z, _ = simulate(true_m, N, cell_rng(cfg.seed, model_id, N, "train"))
    yt, zt, _ = simulate(true_m, cfg.test_N, cell_rng(cfg.seed, model_id, 0, "test"))
    return y, z, yt, zt


def decoding_cell(args):
    cfg, model_id = args
    N = cfg.sample_sizes[-1]
    true_m = model_for(cfg, model_id)
    y, z, yt, zt = _train_test(cfg, true_m, model_id, N)
    ip, i_f, i_s = ideal_decode(true_m, yt, zt)
    row = {"model_id": model_id, "r2_pred_ideal": ip, "r2_filt_ideal": i_f, "r2_smooth_ideal": i_s}
    try:
        sm = psid_with_smoothing(y, z, _dims(true_m, true_m.n_x, cfg.horizon_i))
        tr = kalman_filter(sm.forward, yt)
        row["r2_pred_learned"] = r2_score(zt, tr.z_pred)
        row["r2_filt_learned"] = r2_score(zt, tr.z_filt)
        row["r2_smooth_learned"] = r2_score(zt, smooth_decode(sm, yt))
    except CELL_ERRORS as exc:
        _warn("decoding", model_id, N, exc)
    return row


def run_decoding(cfg: ExperimentConfig, threads=1):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = _map(decoding_cell, [(cfg, m) for m in range(cfg.n_models)], threads, "decoding")
    write_csv(out / "decoding.csv", DECODING_COLUMNS, rows)
    write_csv(out / "models.csv", MODEL_COLUMNS, model_rows(cfg))
    return rows


# --- shifted baseline ----------------------------------------------------

def shift_cell(args):
    cfg, model_id = args
    N = cfg.sample_sizes[-1]
    true_m = model_for(cfg, model_id)
    y, z, yt, zt = _train_test(cfg, true_m, model_id, N)
    ip, i_f, _ = ideal_decode(true_m, yt, zt)
    row = {"model_id": model_id, "r2_ideal_pred": ip, "r2_ideal_filt": i_f}
    dims = _dims(true_m, true_m.n_x, cfg.horizon_i)
    try:
        row["r2_shifted"] = r2_score(zt, shifted_decode(shifted_psid_baseline(y, z, dims), yt))
    except CELL_ERRORS as exc:
        _warn("shift-baseline", model_id, N, exc)
    try:
        row["r2_psid_filtering"] = r2_score(zt, kalman_filter(psid_with_filtering(y, z, dims), yt).z_filt)
    except CELL_ERRORS as exc:
        _warn("shift-baseline", model_id, N, exc)
    return row


def run_shift_baseline(cfg: ExperimentConfig, threads=1):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = _map(shift_cell, [(cfg, m) for m in range(cfg.n_models)], threads, "shift-baseline")
    write_csv(out / "shift_baseline.csv", SHIFT_COLUMNS, rows)
    means = {"model_id": None}
    for c in SHIFT_COLUMNS[1:]:
        vals = [r[c] for r in rows if r.get(c) is not None]
        means[c] = float(np.mean(vals)) if vals else None
    write_csv(out / "shift_baseline_summary.csv", SHIFT_COLUMNS[1:], [means])
    write_csv(out / "models.csv", MODEL_COLUMNS, model_rows(cfg))
    return rows


# --- backward models -----------------------------------------------------

def backward_targets(true_m):
    bw = backward_stochastic_form(true_m)
    p = bw.predictor()
    return p, {
        "A": p.A, "C_y": p.Cy, "C_z": p.Cz, "G_y": p.G_y, "K": p.K, "K_f": bw.Kf_bw,
        "Sigma_y": p.Sigma_y, "C_zK_f": bw.CzKf_bw,
    }


def backward_cell(args):
    cfg, model_id, N = args
    true_m = model_for(cfg, model_id)
    rows = {v: {"model_id": model_id, "N": N} for v in ("z", "residual")}
    try:
        y, z, _ = simulate(true_m, N, cell_rng(cfg.seed, model_id, N, "train"))
        y_align, _, _ = simulate(true_m, cfg.align_N, cell_rng(cfg.seed, model_id, 0, "align"))
        true_bw, targets = backward_targets(true_m)
    except CELL_ERRORS as exc:
        _warn("backward-compare", model_id, N, exc)
        return rows
    dims = _dims(true_m, true_m.n_x, cfg.horizon_i)
    fits = {
        "z": lambda: psid_with_filtering(y[::-1], z[::-1], dims),
        "residual": lambda: psid_with_smoothing(y, z, dims).backward,
    }
    for name, fit in fits.items():
        try:
            bw = fit()
            _, aligned = align_models(true_bw, bw, y_align[::-1])
            err = compare_parameters(targets, aligned)
            kf = learned_kf(aligned, use="Cz")
            err["K_f"] = None if kf is None else float(
                np.linalg.norm(kf - targets["K_f"]) / np.linalg.norm(targets["K_f"]))
            rows[name].update(err)
        except CELL_ERRORS as exc:
            _warn("backward-compare", model_id, N, exc)
    return rows


def run_backward_compare(cfg: ExperimentConfig, threads=1):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(cfg, m, N) for m in range(cfg.n_models) for N in cfg.sample_sizes]
    results = _map(backward_cell, tasks, threads, "backward-compare")
    z_rows = [r["z"] for r in results]
    res_rows = [r["residual"] for r in results]
    write_csv(out / "backward_ztrained.csv", CONVERGENCE_COLUMNS, z_rows)
    write_csv(out / "backward_residual.csv", CONVERGENCE_COLUMNS, res_rows)
    write_csv(out / "backward_ztrained_summary.csv", ("N", "parameter", "count", "mean", "sem"), summarize(z_rows, PARAMETERS))
    write_csv(out / "backward_residual_summary.csv", ("N", "parameter", "count", "mean", "sem"), summarize(res_rows, PARAMETERS))
    write_csv(out / "models.csv", MODEL_COLUMNS, model_rows(cfg))
    return z_rows, res_rows


RUNNERS = {
    "convergence": run_convergence,
    "decoding": run_decoding,
    "shift_baseline": run_shift_baseline,
    "backward_compare": run_backward_compare,
}


def run_experiment(cfg: ExperimentConfig, threads=1):
    return RUNNERS[cfg.experiment](cfg, threads=threads)


__all__ = [
    "NA", "cell_rng", "is_observable", "model_for", "write_csv", "read_csv", "summarize",
    "run_convergence", "run_decoding", "run_shift_baseline", "run_backward_compare", "run_experiment",
]
