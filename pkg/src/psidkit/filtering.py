"""PSID with filtering: learning the innovation-to-``z`` update gain ``Cz Kf``."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, SingularGram, TooFewSamples
from .kalman import _as_signal, kalman_predict
from .lssm import COND_LIMIT, Dims, FilteringModel, PredictorModel, extended_observability
from .subspace import psid_identify

__all__ = [
    "FilteringModel", "NotObservable", "NOT_OBSERVABLE", "innovation_residuals",
    "reduced_rank_regression", "learn_filter_gain", "recover_kf", "psid_with_filtering",
]


class NotObservable:
    """Returned by :func:`recover_kf` when ``Kf`` cannot be pinned down by the readout."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NotObservable"

    def __bool__(self):
        return False


NOT_OBSERVABLE = NotObservable()


def innovation_residuals(model: PredictorModel, y, z):
    """One-step-ahead residuals ``y - Cy x[k|k-1]`` and ``z - Cz x[k|k-1]``."""
    y = _as_signal(y, model.n_y)
    z = _as_signal(z, model.n_z)
    if y.shape[0] != z.shape[0]:
        raise DimensionMismatch("y and z must have the same length")
    tr = kalman_predict(model, y)
    return y - tr.y_pred, z - tr.z_pred


def _sym_sqrt(G):
    w, V = np.linalg.eigh(G)
    return (V * np.sqrt(w)) @ V.T, (V / np.sqrt(w)) @ V.T


def reduced_rank_regression(Z, Y, r):
    """Minimise ``||Z - M Y||_F`` over ``M`` of rank at most ``r``.

    ``Z`` is ``n_z x M`` and ``Y`` is ``n_y x M`` (samples in columns). The
    OLS fit is whitened by ``(Y Y')^(1/2)``, truncated by SVD and mapped back.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Z.shape[1] != Y.shape[1]:
        raise DimensionMismatch("Z and Y need the same number of columns")
    M = Y.shape[1]
    Gyy = Y @ Y.T / M
    if M < Y.shape[0] or not np.all(np.isfinite(Gyy)) or np.linalg.cond(Gyy) > COND_LIMIT:
        raise SingularGram("Y Y' is singular")
    Gzy = Z @ Y.T / M
    B = np.linalg.solve(Gyy, Gzy.T).T
    r = int(r)
    if r >= min(Z.shape[0], Y.shape[0]):
        return B
    if r <= 0:
        return np.zeros_like(B)
    W, Winv = _sym_sqrt((Gyy + Gyy.T) / 2)
    U, s, Vt = np.linalg.svd(B @ W, full_matrices=False)
    return (U[:, :r] * s[:r]) @ Vt[:r] @ Winv


def learn_filter_gain(model: PredictorModel, y, z, variant="direct", i=None, rank=None) -> FilteringModel:
    """Fit the filter update gain on one-step residuals.

    ``direct`` regresses ``z - z[k|k-1]`` on the innovation. ``horizon`` stacks
    ``z[k+l] - Cz A^l x[k|k-1]`` for ``l < i`` and regresses the stack, giving
    ``Gamma_z Kf`` whose first ``n_z`` rows are ``Cz Kf``.
    """
    y = _as_signal(y, model.n_y)
    z = _as_signal(z, model.n_z)
    nx, ny, nz = model.n_x, model.n_y, model.n_z
    tr = kalman_predict(model, y)
    y_t = y - tr.y_pred
    if variant == "direct":
        r = min(nx, ny, nz) if rank is None else rank
        CzKf = reduced_rank_regression((z - tr.z_pred).T, y_t.T, r)
        return FilteringModel(predictor=model, CzKf=CzKf)
    if variant != "horizon":
        raise ValueError(f"unknown variant {variant!r}")
    i = 10 if i is None else int(i)
    N = y.shape[0]
    M = N - i + 1
    if M < ny:
        raise TooFewSamples(f"{N} samples are too few for lookahead {i}")
    # The last i - 1 samples lack a full lookahead window and are dropped.
    Gz = extended_observability(model.Cz, model.A, i)
    stack = np.empty((i * nz, M))
    for l in range(i):
        stack[l * nz:(l + 1) * nz] = z[l:l + M].T - Gz[l * nz:(l + 1) * nz] @ tr.x_pred[:M].T
    r = min(nx, ny) if rank is None else rank
    GKf = reduced_rank_regression(stack, y_t[:M].T, r)
    return FilteringModel(predictor=model, CzKf=GKf[:nz], GammaZKf=GKf)


def recover_kf(fm: FilteringModel, use="Cz", rtol=1e-10):
    """Left-invert ``Cz`` (or ``Gamma_z``) to get ``Kf``; :data:`NOT_OBSERVABLE` if it has rank below ``n_x``."""
    if use == "Cz":
        if fm.CzKf is None:
            raise ValueError("model has no CzKf")
        O, OKf = fm.Cz, fm.CzKf
    elif use == "GammaZ":
        if fm.GammaZKf is None:
            raise ValueError("model has no GammaZKf")
        O = extended_observability(fm.Cz, fm.A, fm.GammaZKf.shape[0] // fm.n_z)
        OKf = fm.GammaZKf
    else:
        raise ValueError(f"unknown readout {use!r}")
    s = np.linalg.svd(O, compute_uv=False)
    if O.shape[0] < fm.n_x or s.size < fm.n_x or s[0] == 0 or s[fm.n_x - 1] <= rtol * s[0]:
        return NOT_OBSERVABLE
    return np.linalg.pinv(O) @ OKf


def psid_with_filtering(y, z, dims: Dims, variant="direct", i=None) -> FilteringModel:
    """Identify with PSID, then learn ``Cz Kf`` on the predictor's residuals."""
    model = psid_identify(y, z, dims)
    return learn_filter_gain(model, y, z, variant=variant, i=dims.horizon_i if i is None else i)
