"""Kalman prediction, filtering and smoothing over whole sequences.

All routines start from ``x[0|-1] = 0``. The time-varying recursions start
from an error covariance of ``I`` unless told otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, MissingGain, RequiresZeroS, SingularNoise
from .lssm import COND_LIMIT, FilteringModel, StochasticModel, solve_dare, to_predictor_form
from .metrics import r2_score


@dataclass
class EstimateTrace:
    x_pred: np.ndarray
    y_pred: np.ndarray
    z_pred: np.ndarray
    x_filt: np.ndarray | None = None
    z_filt: np.ndarray | None = None
    x_smooth: np.ndarray | None = None
    z_smooth: np.ndarray | None = None

    def __len__(self):
        return self.x_pred.shape[0]


def _as_signal(y, n):
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2 or y.shape[1] != n:
        raise DimensionMismatch(f"expected an N x {n} signal, got shape {y.shape}")
    return np.ascontiguousarray(y)


def kalman_predict(model, y) -> EstimateTrace:
    """Steady-state one-step-ahead prediction ``x[k+1|k] = (A - K Cy) x[k|k-1] + K y[k]``."""
    A, Cy, K = model.A, model.Cy, model.K
    y = _as_signal(y, Cy.shape[0])
    F = np.ascontiguousarray(A - K @ Cy)
    U = np.ascontiguousarray(y @ K.T)
    x = _kernels.linear_recursion(F, U, np.zeros(A.shape[0]))
    return EstimateTrace(x_pred=x, y_pred=x @ Cy.T, z_pred=x @ model.Cz.T)


def kalman_filter(model: FilteringModel, y) -> EstimateTrace:
    """Prediction plus the update step for ``z`` (and for ``x`` when ``Kf`` is known).

    Only ``CzKf`` is needed for the filtered secondary signal; the predicted
    state trace is left untouched when ``Kf`` is absent.
    """
    if getattr(model, "CzKf", None) is None:
        raise MissingGain("model carries neither CzKf nor Kf")
    trace = kalman_predict(model, y)
    innov = _as_signal(y, model.Cy.shape[0]) - trace.y_pred
    trace.z_filt = trace.z_pred + innov @ model.CzKf.T
    if model.Kf is not None:
        trace.x_filt = trace.x_pred + innov @ model.Kf.T
    return trace


def _time_varying(model: StochasticModel, y, P0):
    y = _as_signal(y, model.n_y)
    P0 = np.eye(model.n_x) if P0 is None else np.atleast_2d(np.asarray(P0, dtype=float))
    args = [np.ascontiguousarray(m) for m in (model.A, model.Cy, model.Q, model.R, model.S)]
    return y, _kernels.time_varying_filter(*args, y, np.ascontiguousarray(P0))


def time_varying_filter(model: StochasticModel, y, P0=None):
    """Run the full Riccati-recursion filter; returns the trace and the covariance sequences."""
    _, (x_pred, x_filt, P_filt, P_next) = _time_varying(model, y, P0)
    trace = EstimateTrace(
        x_pred=x_pred, y_pred=x_pred @ model.Cy.T, z_pred=x_pred @ model.Cz.T,
        x_filt=x_filt, z_filt=x_filt @ model.Cz.T,
    )
    return trace, P_filt, P_next


def rts_smooth(model: StochasticModel, y, P0=None) -> EstimateTrace:
    """Rauch-Tung-Striebel smoother on top of the time-varying filter.

    With ``S != 0`` the backward gain uses ``A - S R^-1 Cy``, the transition
    matrix after decorrelating the state noise from the measurement noise.
    For ``S = 0`` this is the textbook recursion.
    """
    y, (x_pred, x_filt, P_filt, P_next) = _time_varying(model, y, P0)
    A_bar = model.A
    if np.any(model.S != 0):
        if np.linalg.cond(model.R) > COND_LIMIT:
            raise SingularNoise("R must be invertible to smooth with S != 0")
        A_bar = model.A - np.linalg.solve(model.R.T, model.S.T).T @ model.Cy
    x_next = np.empty_like(x_pred)
    x_next[:-1] = x_pred[1:]
    x_next[-1] = 0.0
    xs = _kernels.rts_backward(np.ascontiguousarray(A_bar), x_filt, x_next, P_filt, P_next, 1e-12)
    return EstimateTrace(
        x_pred=x_pred, y_pred=x_pred @ model.Cy.T, z_pred=x_pred @ model.Cz.T,
        x_filt=x_filt, z_filt=x_filt @ model.Cz.T, x_smooth=xs, z_smooth=xs @ model.Cz.T,
    )


def two_filter_smooth(model: StochasticModel, y, P0=None, return_backward=False):
    """Forward Kalman filter combined with a backward information filter (``S = 0`` only)."""
    if np.any(model.S != 0):
        raise RequiresZeroS("the two-filter smoother assumes uncorrelated state and measurement noise")
    for name in ("Q", "R"):
        if np.linalg.cond(getattr(model, name)) > COND_LIMIT:
            raise SingularNoise(f"{name} must be invertible")
    y, (x_pred, x_filt, P_filt, _) = _time_varying(model, y, P0)
    Qinv = np.linalg.inv(model.Q)
    Rinv = np.linalg.inv(model.R)
    b_pred, I_pred = _kernels.information_backward(
        np.ascontiguousarray(model.A), np.ascontiguousarray(model.Cy), Qinv, Rinv, y
    )
    Pf_inv = np.linalg.inv(P_filt)
    P_s = np.linalg.inv(Pf_inv + I_pred)
    rhs = np.einsum("kij,kj->ki", Pf_inv, x_filt) + b_pred
    xs = np.einsum("kij,kj->ki", P_s, rhs)
    trace = EstimateTrace(
        x_pred=x_pred, y_pred=x_pred @ model.Cy.T, z_pred=x_pred @ model.Cz.T,
        x_filt=x_filt, z_filt=x_filt @ model.Cz.T, x_smooth=xs, z_smooth=xs @ model.Cz.T,
    )
    if return_backward:
        return trace, b_pred, I_pred
    return trace


def ideal_filtering_model(model: StochasticModel) -> FilteringModel:
    """Steady-state predictor and filter gain of a known stochastic model."""
    sol = solve_dare(model.A, model.Cy, model.Q, model.R, model.S)
    return FilteringModel(predictor=to_predictor_form(model), CzKf=model.Cz @ sol.K_f, Kf=sol.K_f)


def ideal_decode(true_model: StochasticModel, y, z):
    """R2 of the true model's predicted, filtered and smoothed estimates of ``z``."""
    z = _as_signal(z, true_model.n_z)
    fm = ideal_filtering_model(true_model)
    tr = kalman_filter(fm, y)
    sm = rts_smooth(true_model, y)
    return r2_score(z, tr.z_pred), r2_score(z, tr.z_filt), r2_score(z, sm.z_smooth)
