"""Compiled inner loops for long recursions."""

import numba
import numpy as np


@numba.njit(cache=True)
def linear_recursion(F, U, x0):
    """Return X with X[0] = x0 and X[k+1] = F X[k] + U[k] for k < N-1."""
    N = U.shape[0]
    n = F.shape[0]
    X = np.empty((N, n))
    x = x0.copy()
    for k in range(N):
        X[k] = x
        x = F @ x + U[k]
    return X


@numba.njit(cache=True)
def time_varying_filter(A, C, Q, R, S, y, P0):
    """Time-varying Kalman filter from x[0|-1] = 0, P[0|-1] = P0.

    Returns predicted/filtered states and the filtered and one-step covariances
    ``P[k|k]`` and ``P[k+1|k]``.
    """
    N = y.shape[0]
    n = A.shape[0]
    x_pred = np.zeros((N, n))
    x_filt = np.zeros((N, n))
    P_filt = np.zeros((N, n, n))
    P_next = np.zeros((N, n, n))
    x = np.zeros(n)
    P = P0.copy()
    for k in range(N):
        x_pred[k] = x
        Re = C @ P @ C.T + R
        Re_inv = np.linalg.inv(Re)
        Kf = P @ C.T @ Re_inv
        Kv = S @ Re_inv
        e = y[k] - C @ x
        xf = x + Kf @ e
        Pf = P - Kf @ C @ P
        Pf = (Pf + Pf.T) / 2
        x_filt[k] = xf
        P_filt[k] = Pf
        x = A @ xf + Kv @ e
        M = A @ P @ C.T + S
        P = A @ P @ A.T + Q - M @ Re_inv @ M.T
        P = (P + P.T) / 2
        P_next[k] = P
    return x_pred, x_filt, P_filt, P_next


@numba.njit(cache=True)
def rts_backward(Abar, x_filt, x_pred_next, P_filt, P_next, rcond):
    """RTS backward pass; ``x_pred_next[k]`` is x[k+1|k]."""
    N, n = x_filt.shape
    xs = np.empty((N, n))
    xs[N - 1] = x_filt[N - 1]
    for k in range(N - 2, -1, -1):
        L = P_filt[k] @ Abar.T @ np.linalg.pinv(P_next[k], rcond)
        xs[k] = x_filt[k] + L @ (xs[k + 1] - x_pred_next[k])
    return xs


@numba.njit(cache=True)
def information_backward(A, C, Qinv, Rinv, y):
    """Backward information filter; returns b[k|k+1] and its information matrix for each k."""
    N = y.shape[0]
    n = A.shape[0]
    b_pred = np.zeros((N, n))
    I_pred = np.zeros((N, n, n))
    b = np.zeros(n)
    Ib = np.zeros((n, n))
    CtRi = C.T @ Rinv
    CtRiC = CtRi @ C
    eye = np.eye(n)
    for k in range(N - 1, -1, -1):
        b_pred[k] = b
        I_pred[k] = Ib
        bu = b + CtRi @ y[k]
        Iu = Ib + CtRiC
        J = Iu @ np.linalg.inv(Iu + Qinv)
        b = A.T @ ((eye - J) @ bu)
        Ib = A.T @ (eye - J) @ Iu @ A
        Ib = (Ib + Ib.T) / 2
    return b_pred, I_pred
