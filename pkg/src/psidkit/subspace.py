"""Two-stage preferential subspace identification (PSID).

Stage 1 extracts ``n_1`` latent states from the projection of future ``z``
onto past ``y``; stage 2 extracts the remaining ``n_x - n_1`` states from the
part of future ``y`` those states leave unexplained. The state sequences are
never materialised: every projection is expressed as a linear functional of
one stacked block-Hankel data matrix, whose Gram matrix is accumulated in
chunks. Memory therefore stays bounded for millions of samples.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonConvergent, RankDeficient, SingularInnovation, TooFewSamples
from .kalman import kalman_predict
from .lssm import Dims, PredictorModel, innovation_from_covariances, solve_dare, spectral_radius, symmetrize

log = logging.getLogger(__name__)

CHUNK_ELEMENTS = 4_000_000
WEIGHTING = "cva"


@dataclass(frozen=True)
class HankelBlock:
    data: np.ndarray
    i: int
    dim: int

    @property
    def M(self):
        return self.data.shape[1]


def build_hankel(signal, i, start=0, n_cols=None) -> HankelBlock:
    """Stack ``i`` consecutive samples per column: block row ``l`` of column ``j`` is ``signal[start + j + l]``."""
    signal = np.asarray(signal, dtype=float)
    if signal.ndim == 1:
        signal = signal[:, None]
    N, dim = signal.shape
    avail = N - start - i + 1
    if avail < 1:
        raise TooFewSamples(f"need at least {start + i} samples for horizon {i}, got {N}")
    M = avail if n_cols is None else int(n_cols)
    if M > avail or M < 1:
        raise TooFewSamples(f"cannot build {M} columns from {N} samples")
    return HankelBlock(data=_windows(signal, i, start, M), i=i, dim=dim)


class _Layout:
    """Row offsets of the stacked data vector ``[y[k-i..k+i-1]; z[k..k+i-1]]``."""

    def __init__(self, ny, nz, i):
        self.ny, self.nz, self.i = ny, nz, i
        self.d = 2 * i * ny + i * nz

    def select(self, rows):
        E = np.zeros((len(rows), self.d))
        E[np.arange(len(rows)), rows] = 1.0
        return E

    def y_blocks(self, lo, hi):
        return self.select(np.arange(lo * self.ny, hi * self.ny))

    def z_blocks(self, lo, hi):
        off = 2 * self.i * self.ny
        return self.select(np.arange(off + lo * self.nz, off + hi * self.nz))


def _windows(signal, rows, start, M):
    dim = signal.shape[1]
    out = np.empty((rows * dim, M))
    for l in range(rows):
        out[l * dim:(l + 1) * dim] = signal[start + l:start + l + M].T
    return out


def _stacked_chunks(y, z, i):
    """Yield ``(c0, W)`` column chunks of the stacked data matrix."""
    M = y.shape[0] - 2 * i + 1
    d = 2 * i * y.shape[1] + i * z.shape[1]
    chunk = max(1, CHUNK_ELEMENTS // d)
    for c0 in range(0, M, chunk):
        m = min(chunk, M - c0)
        yield c0, np.vstack([_windows(y, 2 * i, c0, m), _windows(z, i, c0 + i, m)])


def stacked_gram(y, z, i):
    """Gram matrix (divided by the column count) of the stacked past/future Hankel data."""
    M = y.shape[0] - 2 * i + 1
    d = 2 * i * y.shape[1] + i * z.shape[1]
    G = np.zeros((d, d))
    for _, W in _stacked_chunks(y, z, i):
        G += W @ W.T
    return G / M, M


def _ridge_inv(Gm):
    n = Gm.shape[0]
    eps = 1e-8 * np.trace(Gm) / max(n, 1)
    return np.linalg.inv(Gm + eps * np.eye(n))


def _sign_fix(U):
    for j in range(U.shape[1]):
        col = U[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * np.max(np.abs(col)))
        if nz.size and col[nz[0]] < 0:
            U[:, j] = -col
    return U


def _inv_sqrt(C):
    w, V = np.linalg.eigh(symmetrize(C))
    w = np.maximum(w, 1e-12 * max(w.max(), 1e-300))
    return (V / np.sqrt(w)) @ V.T, (V * np.sqrt(w)) @ V.T


def _stage(G, F_fut, F_fut_minus, E_p, E_pp, n, block, weighting):
    """Project a future functional onto the past and return the state functionals at k and k+1."""
    Gpp_inv = _ridge_inv(E_p @ G @ E_p.T)
    Gppp_inv = _ridge_inv(E_pp @ G @ E_pp.T)
    Phi = F_fut @ G @ E_p.T @ Gpp_inv
    cov = symmetrize(Phi @ E_p @ G @ F_fut.T)
    if weighting == "cva":
        # Normalise by the future's own covariance so singular values become canonical
        # correlations and weak directions are not buried under high-variance outputs.
        W, W_inv = _inv_sqrt(F_fut @ G @ F_fut.T)
        cov = symmetrize(W @ cov @ W)
    lam, U = np.linalg.eigh(cov)
    order = np.argsort(lam)[::-1]
    lam, U = np.clip(lam[order], 0, None), _sign_fix(U[:, order])
    if lam[0] <= 0 or lam[n - 1] <= 1e-12 * lam[0]:
        raise RankDeficient(f"projection has fewer than {n} significant directions")
    Gamma = U[:, :n] * lam[:n] ** 0.25
    if weighting == "cva":
        Gamma = W_inv @ Gamma
    Lk = np.linalg.pinv(Gamma) @ Phi @ E_p
    Phi_m = F_fut_minus @ G @ E_pp.T @ Gppp_inv
    Lk1 = np.linalg.pinv(Gamma[:-block]) @ Phi_m @ E_pp
    return Lk, Lk1, np.sqrt(lam)


def _error_covariances(A, Cy, Q, R, S):
    """Error covariances of the residual-noise realisation, or NaN when it has no steady state."""
    try:
        sol = solve_dare(A, Cy, Q, R, S, max_iter=10_000)
        return sol.P_pred, sol.P_filt
    except (NonConvergent, SingularInnovation):
        nan = np.full(A.shape, np.nan)
        return nan, nan


@dataclass(frozen=True)
class PsidFit:
    """Identified model plus the intermediate noise statistics of the state regression."""

    model: PredictorModel
    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray
    singular_values: tuple


def _as_2d(a):
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def psid_fit(y, z, dims: Dims, refit_cz=True, weighting=None) -> PsidFit:
    y, z = _as_2d(y), _as_2d(z)
    if y.shape[0] != z.shape[0]:
        raise DimensionMismatch("y and z must have the same number of samples")
    if y.shape[1] != dims.n_y or z.shape[1] != dims.n_z:
        raise DimensionMismatch("signal dimensions do not match dims")
    ny, nz, nx, n1, i = dims.n_y, dims.n_z, dims.n_x, dims.n_1, dims.horizon_i
    weighting = WEIGHTING if weighting is None else weighting
    if weighting not in ("none", "cva"):
        raise ValueError(f"unknown weighting {weighting!r}")
    lay = _Layout(ny, nz, i)
    if y.shape[0] - 2 * i + 1 < lay.d:
        raise TooFewSamples(f"{y.shape[0]} samples are too few for horizon {i} with n_y={ny}, n_z={nz}")
    G, _ = stacked_gram(y, z, i)

    E_p, E_pp = lay.y_blocks(0, i), lay.y_blocks(0, i + 1)
    E_yf, E_yfm, E_yk = lay.y_blocks(i, 2 * i), lay.y_blocks(i + 1, 2 * i), lay.y_blocks(i, i + 1)
    E_zf, E_zfm, E_zk = lay.z_blocks(0, i), lay.z_blocks(1, i), lay.z_blocks(0, 1)

    Lk_parts, Lk1_parts, svals = [], [], []
    if n1 > 0:
        L1, L1p, sv = _stage(G, E_zf, E_zfm, E_p, E_pp, n1, nz, weighting)
        Lk_parts.append(L1)
        Lk1_parts.append(L1p)
        svals.append(sv)
    n2 = nx - n1
    if n2 > 0:
        R_yf, R_yfm = E_yf, E_yfm
        if n1 > 0:
            Oy1 = (E_yf @ G @ L1.T) @ _ridge_inv(L1 @ G @ L1.T)
            R_yf = E_yf - Oy1 @ L1
            R_yfm = E_yfm - Oy1[:-ny] @ L1p
        L2, L2p, sv = _stage(G, R_yf, R_yfm, E_p, E_pp, n2, ny, weighting)
        Lk_parts.append(L2)
        Lk1_parts.append(L2p)
        svals.append(sv)
    Lk, Lk1 = np.vstack(Lk_parts), np.vstack(Lk1_parts)

    Gxx_inv = _ridge_inv(Lk @ G @ Lk.T)
    A = np.zeros((nx, nx))
    if n1 > 0:
        A[:n1, :n1] = (Lk1[:n1] @ G @ Lk[:n1].T) @ _ridge_inv(Lk[:n1] @ G @ Lk[:n1].T)
    if n2 > 0:
        A[n1:, :] = (Lk1[n1:] @ G @ Lk.T) @ Gxx_inv
    Cy = (E_yk @ G @ Lk.T) @ Gxx_inv
    Cz = (E_zk @ G @ Lk.T) @ Gxx_inv

    Fw = Lk1 - A @ Lk
    Fv = E_yk - Cy @ Lk
    Q = symmetrize(Fw @ G @ Fw.T)
    R = symmetrize(Fv @ G @ Fv.T)
    S = Fw @ G @ Fv.T

    Sigma_y = symmetrize(E_yk @ G @ E_yk.T)
    G_y = Lk1 @ G @ E_yk.T
    try:
        K, Sigma_e, _ = innovation_from_covariances(A, Cy, G_y, Sigma_y)
    except NonConvergent:
        # Finite-sample output statistics need not be positive real; fall back to the
        # gain of the residual noise statistics.
        log.info("output covariances are not positive real; using residual noise statistics")
        sol = solve_dare(A, Cy, Q, R, S)
        K, Sigma_e = sol.K, sol.Sigma_e
    P_pred, P_filt = _error_covariances(A, Cy, Q, R, S)
    model = PredictorModel(
        A=A, Cy=Cy, Cz=Cz, K=K, Sigma_y=Sigma_y, G_y=G_y, Sigma_e=Sigma_e,
        P_pred=P_pred, P_filt=P_filt,
    )
    if refit_cz and model.is_stable():
        # Regress z on the steady-state predicted states; cheaper estimators than this are biased
        # when the horizon is short relative to the predictor's memory.
        xh = kalman_predict(model, y).x_pred
        Cz = np.linalg.lstsq(xh, z, rcond=None)[0].T
        model = model.replace(Cz=Cz)
    return PsidFit(model=model, Q=Q, R=R, S=S, singular_values=tuple(np.concatenate(svals)))


def psid_identify(y, z, dims: Dims, refit_cz=True) -> PredictorModel:
    """Identify predictor-form parameters ``{A, Cy, Cz, K, Sigma_y}`` from paired signals.

    ``dims.n_1 = 0`` gives standard stochastic subspace identification of ``y``
    with ``Cz`` fitted afterwards by regression of ``z`` on the Kalman states.
    """
    try:
        return psid_fit(y, z, dims, refit_cz=refit_cz).model
    except (SingularInnovation, NonConvergent) as exc:
        raise RankDeficient(f"identified model has no valid Kalman filter: {exc}") from exc
