"""Linear state-space model forms and the covariance algebra that links them.

A model with latent state ``x``, primary signal ``y`` and secondary signal ``z``::

    x[k+1] = A x[k] + w[k]
    y[k]   = Cy x[k] + v[k]
    z[k]   = Cz x[k] + eps[k]

can be written in stochastic form (noise covariances Q, R, S, Rz, Sxz) or in
predictor form (steady-state Kalman gain K and innovation covariance). The
functions here convert between the two, solve the Lyapunov and Riccati
equations involved, and build the time-reversed (backward) stochastic model.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidCovariance,
    NonConvergent,
    SingularCovariance,
    SingularInnovation,
    SingularTransform,
)

COND_LIMIT = 1e12
PSD_RTOL = 1e-8


def _frozen(a, ndim=2):
    arr = np.array(a, dtype=float, copy=True)
    if arr.ndim == 0 and ndim == 2:
        arr = arr.reshape(1, 1)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def symmetrize(M):
    return (M + M.T) / 2


def spectral_radius(A):
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def is_psd(M, rtol=PSD_RTOL):
    """True when the symmetric part of ``M`` has min eigenvalue >= -rtol*(1 + max eigenvalue)."""
    if M.size == 0:
        return True
    ev = np.linalg.eigvalsh(symmetrize(M))
    return bool(ev[0] >= -rtol * (1.0 + max(ev[-1], 0.0)))


def right_solve(B, M, what="matrix"):
    """Return ``B @ inv(M)`` via an LU solve, refusing numerically singular ``M``."""
    if M.size and np.linalg.cond(M) > COND_LIMIT:
        raise SingularCovariance(f"{what} is numerically singular")
    return np.linalg.solve(M.T, B.T).T


@dataclass(frozen=True)
class Dims:
    n_x: int
    n_y: int
    n_z: int
    n_1: int | None = None
    horizon_i: int = 10

    def __post_init__(self):
        if self.n_1 is None:
            object.__setattr__(self, "n_1", self.n_x)
        if min(self.n_x, self.n_y, self.n_z) < 1:
            raise ValueError("n_x, n_y and n_z must be >= 1")
        if not 0 <= self.n_1 <= self.n_x:
            raise ValueError(f"n_1={self.n_1} must lie in [0, n_x={self.n_x}]")
        if self.horizon_i < 2:
            raise ValueError("horizon_i must be >= 2")
        if self.horizon_i * self.n_y < self.n_x:
            raise ValueError("horizon_i * n_y must be >= n_x")
        if self.n_1 > self.horizon_i * self.n_z:
            raise ValueError("n_1 must be <= horizon_i * n_z")


@dataclass(frozen=True)
class StochasticModel:
    A: np.ndarray
    Cy: np.ndarray
    Cz: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray
    Rz: np.ndarray
    Sxz: np.ndarray

    def __post_init__(self):
        for f in dataclasses.fields(self):
            object.__setattr__(self, f.name, _frozen(getattr(self, f.name)))
        nx, ny, nz = self.n_x, self.n_y, self.n_z
        shapes = {
            "A": (nx, nx), "Cy": (ny, nx), "Cz": (nz, nx), "Q": (nx, nx),
            "R": (ny, ny), "S": (nx, ny), "Rz": (nz, nz), "Sxz": (nx, nz),
        }
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise DimensionMismatch(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def n_x(self):
        return self.A.shape[0]

    @property
    def n_y(self):
        return self.Cy.shape[0]

    @property
    def n_z(self):
        return self.Cz.shape[0]

    @property
    def noise_block(self):
        return np.block([[self.Q, self.S], [self.S.T, self.R]])

    def check(self):
        """Raise if the model violates stability or noise-PSD requirements."""
        if spectral_radius(self.A) >= 1:
            raise NonConvergent("A is not stable")
        if not is_psd(self.noise_block):
            raise InvalidCovariance("[[Q, S], [S', R]] is not PSD")
        if not is_psd(self.Rz):
            raise InvalidCovariance("Rz is not PSD")
        return self

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def transform(self, T, Tinv):
        return StochasticModel(
            A=T @ self.A @ Tinv, Cy=self.Cy @ Tinv, Cz=self.Cz @ Tinv,
            Q=T @ self.Q @ T.T, R=self.R, S=T @ self.S, Rz=self.Rz, Sxz=T @ self.Sxz,
        )


@dataclass(frozen=True)
class CovarianceSet:
    Sigma_x: np.ndarray
    Sigma_y: np.ndarray
    G_y: np.ndarray
    G_z: np.ndarray

    def transform(self, T, Tinv):
        return CovarianceSet(T @ self.Sigma_x @ T.T, self.Sigma_y, T @ self.G_y, T @ self.G_z)


@dataclass(frozen=True)
class PredictorModel:
    """Steady-state Kalman predictor form ``{A, Cy, Cz, K, Sigma_y}`` plus derived quantities."""

    A: np.ndarray
    Cy: np.ndarray
    Cz: np.ndarray
    K: np.ndarray
    Sigma_y: np.ndarray
    G_y: np.ndarray
    Sigma_e: np.ndarray
    P_pred: np.ndarray
    P_filt: np.ndarray

    def __post_init__(self):
        for f in dataclasses.fields(self):
            object.__setattr__(self, f.name, _frozen(getattr(self, f.name)))
        nx, ny = self.A.shape[0], self.Cy.shape[0]
        if self.K.shape != (nx, ny) or self.Cy.shape[1] != nx or self.Cz.shape[1] != nx:
            raise DimensionMismatch("inconsistent predictor dimensions")

    @property
    def n_x(self):
        return self.A.shape[0]

    @property
    def n_y(self):
        return self.Cy.shape[0]

    @property
    def n_z(self):
        return self.Cz.shape[0]

    @property
    def P_x(self):
        """Covariance of the predicted state itself."""
        return solve_lyapunov(self.A, self.K @ self.Sigma_e @ self.K.T)

    def is_stable(self):
        return spectral_radius(self.A - self.K @ self.Cy) < 1

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def transform(self, T, Tinv):
        return PredictorModel(
            A=T @ self.A @ Tinv, Cy=self.Cy @ Tinv, Cz=self.Cz @ Tinv, K=T @ self.K,
            Sigma_y=self.Sigma_y, G_y=T @ self.G_y, Sigma_e=self.Sigma_e,
            P_pred=T @ self.P_pred @ T.T, P_filt=T @ self.P_filt @ T.T,
        )


@dataclass(frozen=True)
class FilteringModel:
    """Predictor model plus the learned update gain used for filtered estimates of ``z``.

    ``CzKf`` maps the primary-signal innovation to the secondary-signal update.
    ``GammaZKf`` (stacked multi-step version) and ``Kf`` (full filter gain) are
    only present when they were learned or recovered.
    """

    predictor: PredictorModel
    CzKf: np.ndarray | None = None
    GammaZKf: np.ndarray | None = None
    Kf: np.ndarray | None = None

    def __post_init__(self):
        if self.CzKf is None and self.Kf is not None:
            object.__setattr__(self, "CzKf", self.predictor.Cz @ np.asarray(self.Kf, dtype=float))
        for name in ("CzKf", "GammaZKf", "Kf"):
            if getattr(self, name) is not None:
                object.__setattr__(self, name, _frozen(getattr(self, name)))
        p = self.predictor
        if self.CzKf is not None and self.CzKf.shape != (p.n_z, p.n_y):
            raise DimensionMismatch(f"CzKf has shape {self.CzKf.shape}, expected {(p.n_z, p.n_y)}")
        if self.Kf is not None and self.Kf.shape != (p.n_x, p.n_y):
            raise DimensionMismatch("Kf must be n_x by n_y")

    def __getattr__(self, name):
        # Delegate predictor parameters (A, Cy, Cz, K, ...) so a FilteringModel can stand in for one.
        if name.startswith("__") or name == "predictor":
            raise AttributeError(name)
        return getattr(self.predictor, name)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def transform(self, T, Tinv):
        return FilteringModel(
            predictor=self.predictor.transform(T, Tinv), CzKf=self.CzKf, GammaZKf=self.GammaZKf,
            Kf=None if self.Kf is None else T @ self.Kf,
        )


@dataclass(frozen=True)
class DareSolution:
    P_pred: np.ndarray
    P_filt: np.ndarray
    K: np.ndarray
    K_f: np.ndarray
    K_v: np.ndarray
    Sigma_e: np.ndarray
    iterations: int = 0


@dataclass(frozen=True)
class BackwardStochasticParams:
    """Time-reversed equivalent of a forward stochastic model (state ``inv(Sigma_x) x[k+1]``)."""

    A_bw: np.ndarray
    Cy_bw: np.ndarray
    Cz_bw: np.ndarray
    Gy_bw: np.ndarray
    Sigma_y_bw: np.ndarray
    K_bw: np.ndarray
    Kf_bw: np.ndarray
    CzKf_bw: np.ndarray
    Sigma_e_bw: np.ndarray
    P_pred_bw: np.ndarray
    P_filt_bw: np.ndarray
    Q_bw: np.ndarray = field(repr=False)
    R_bw: np.ndarray = field(repr=False)
    S_bw: np.ndarray = field(repr=False)

    def predictor(self) -> PredictorModel:
        return PredictorModel(
            A=self.A_bw, Cy=self.Cy_bw, Cz=self.Cz_bw, K=self.K_bw, Sigma_y=self.Sigma_y_bw,
            G_y=self.Gy_bw, Sigma_e=self.Sigma_e_bw, P_pred=self.P_pred_bw, P_filt=self.P_filt_bw,
        )


def solve_lyapunov(A, Q, tol=1e-14, max_doublings=200):
    """Solve ``X = A X A' + Q`` for stable ``A`` by the doubling iteration."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if A.size == 0:
        return np.zeros((0, 0))
    if spectral_radius(A) >= 1:
        raise NonConvergent("Lyapunov equation requires a stable A")
    X = Q.copy()
    Ak = A.copy()
    for _ in range(max_doublings):
        dX = Ak @ X @ Ak.T
        X = X + dX
        Ak = Ak @ Ak
        nX = np.linalg.norm(X)
        if np.linalg.norm(dX) <= tol * max(nX, 1e-300) or nX == 0.0:
            return symmetrize(X)
    raise NonConvergent("Lyapunov doubling did not converge")


def riccati_step(P, A, C, Q, R, S):
    """One step of the predicted error-covariance recursion."""
    Re = C @ P @ C.T + R
    M = A @ P @ C.T + S
    return symmetrize(A @ P @ A.T + Q - right_solve(M, Re, "innovation covariance") @ M.T)


def riccati_residual(P, A, C, Q, R, S):
    """Relative residual of the steady-state prediction Riccati equation."""
    return np.linalg.norm(riccati_step(P, A, C, Q, R, S) - P) / max(np.linalg.norm(P), 1.0)


def solve_dare(A, Cy, Q, R, S, tol=1e-12, max_iter=100_000, P0=None) -> DareSolution:
    """Steady-state Kalman filter by fixed-point iteration of the Riccati recursion from ``P = I``."""
    A, Cy, Q, R, S = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, Cy, Q, R, S))
    nx = A.shape[0]
    P = np.eye(nx) if P0 is None else np.array(P0, dtype=float)
    # Relative to the noise scale as well, so a solution at P = 0 is reachable.
    floor = np.linalg.norm(Q) + np.linalg.norm(R)
    for it in range(1, max_iter + 1):
        Re = Cy @ P @ Cy.T + R
        if np.linalg.cond(Re) > COND_LIMIT:
            raise SingularInnovation("C P C' + R is numerically singular")
        M = A @ P @ Cy.T + S
        P_new = symmetrize(A @ P @ A.T + Q - np.linalg.solve(Re.T, M.T).T @ M.T)
        if not np.all(np.isfinite(P_new)):
            raise NonConvergent("Riccati iteration diverged")
        change = np.linalg.norm(P_new - P)
        P = P_new
        if change <= tol * max(np.linalg.norm(P), floor, 1e-300):
            break
    else:
        raise NonConvergent(f"Riccati iteration did not converge in {max_iter} iterations")
    Sigma_e = symmetrize(Cy @ P @ Cy.T + R)
    if np.linalg.cond(Sigma_e) > COND_LIMIT:
        raise SingularInnovation("innovation covariance is numerically singular")
    K_f = right_solve(P @ Cy.T, Sigma_e)
    K_v = right_solve(S, Sigma_e)
    K = A @ K_f + K_v
    P_filt = symmetrize(P - K_f @ Cy @ P)
    return DareSolution(P_pred=P, P_filt=P_filt, K=K, K_f=K_f, K_v=K_v, Sigma_e=Sigma_e, iterations=it)


def innovation_from_covariances(A, Cy, G_y, Sigma_y, tol=1e-12, max_iter=100_000):
    """Predictor gain from output statistics alone.

    Iterates ``P = A P A' + (G - A P C') (Sigma_y - C P C')^-1 (G - A P C')'``
    from ``P = 0``; the limit is the covariance of the predicted state. Returns
    ``(K, Sigma_e, P)``. Raises :class:`NonConvergent` when the statistics are
    not positive real, which happens with noisy finite-sample estimates.
    """
    A, Cy, G_y, Sigma_y = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, Cy, G_y, Sigma_y))
    P = np.zeros_like(A)
    for _ in range(max_iter):
        Se = symmetrize(Sigma_y - Cy @ P @ Cy.T)
        if not is_psd(Se) or np.linalg.cond(Se) > COND_LIMIT:
            raise NonConvergent("output statistics are not positive real")
        M = G_y - A @ P @ Cy.T
        P_new = symmetrize(A @ P @ A.T + np.linalg.solve(Se.T, M.T).T @ M.T)
        if not np.all(np.isfinite(P_new)):
            raise NonConvergent("covariance Riccati iteration diverged")
        change = np.linalg.norm(P_new - P)
        P = P_new
        if change <= tol * max(np.linalg.norm(P), 1e-300):
            break
    else:
        raise NonConvergent("covariance Riccati iteration did not converge")
    Se = symmetrize(Sigma_y - Cy @ P @ Cy.T)
    if not is_psd(Se) or np.linalg.cond(Se) > COND_LIMIT:
        raise NonConvergent("output statistics are not positive real")
    K = right_solve(G_y - A @ P @ Cy.T, Se)
    return K, Se, P


def covariances_from_stochastic(model: StochasticModel) -> CovarianceSet:
    Sx = solve_lyapunov(model.A, model.Q)
    Sy = symmetrize(model.Cy @ Sx @ model.Cy.T + model.R)
    Gy = model.A @ Sx @ model.Cy.T + model.S
    Gz = model.A @ Sx @ model.Cz.T + model.Sxz
    return CovarianceSet(Sigma_x=Sx, Sigma_y=Sy, G_y=Gy, G_z=Gz)


def stochastic_from_covariances(A, Cy, Sigma_x, Sigma_y, G_y):
    """Return the noise triple ``(Q, R, S)`` implied by a state covariance choice."""
    A, Cy, Sigma_x, Sigma_y, G_y = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, Cy, Sigma_x, Sigma_y, G_y))
    if not is_psd(Sigma_x):
        raise InvalidCovariance("Sigma_x is not PSD")
    Q = symmetrize(Sigma_x - A @ Sigma_x @ A.T)
    R = symmetrize(Sigma_y - Cy @ Sigma_x @ Cy.T)
    S = G_y - A @ Sigma_x @ Cy.T
    if not is_psd(np.block([[Q, S], [S.T, R]])):
        raise InvalidCovariance("Sigma_x lies outside the set of valid state covariances")
    return Q, R, S


def to_predictor_form(model: StochasticModel) -> PredictorModel:
    cov = covariances_from_stochastic(model)
    sol = solve_dare(model.A, model.Cy, model.Q, model.R, model.S)
    return PredictorModel(
        A=model.A, Cy=model.Cy, Cz=model.Cz, K=sol.K, Sigma_y=cov.Sigma_y, G_y=cov.G_y,
        Sigma_e=sol.Sigma_e, P_pred=sol.P_pred, P_filt=sol.P_filt,
    )


def predictor_from_output(A, Cy, Cz, K, Sigma_y) -> PredictorModel:
    """Complete a predictor model given only ``{A, Cy, Cz, K, Sigma_y}``.

    The predicted-state covariance satisfies the linear equation
    ``P = A P A' + K (Sigma_y - Cy P Cy') K'``, solved here in vectorised form;
    ``Sigma_e`` and ``G_y`` follow from it. Error covariances are not
    determined by these parameters and are left as NaN.
    """
    A, Cy, Cz, K, Sigma_y = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, Cy, Cz, K, Sigma_y))
    n = A.shape[0]
    KC = K @ Cy
    M = np.eye(n * n) - np.kron(A, A) + np.kron(KC, KC)
    if np.linalg.cond(M) > COND_LIMIT:
        raise SingularCovariance("predictor parameters do not determine a state covariance")
    P = symmetrize(np.linalg.solve(M, (K @ Sigma_y @ K.T).reshape(-1)).reshape(n, n))
    Sigma_e = symmetrize(Sigma_y - Cy @ P @ Cy.T)
    nan = np.full((n, n), np.nan)
    return PredictorModel(
        A=A, Cy=Cy, Cz=Cz, K=K, Sigma_y=Sigma_y, G_y=A @ P @ Cy.T + K @ Sigma_e,
        Sigma_e=Sigma_e, P_pred=nan, P_filt=nan,
    )


def predictor_state_covariance(model: StochasticModel):
    """``Sigma_x - P_pred``: covariance of the Kalman-predicted state."""
    cov = covariances_from_stochastic(model)
    sol = solve_dare(model.A, model.Cy, model.Q, model.R, model.S)
    return symmetrize(cov.Sigma_x - sol.P_pred)


def backward_stochastic_form(model: StochasticModel) -> BackwardStochasticParams:
    cov = covariances_from_stochastic(model)
    Sx = cov.Sigma_x
    if np.linalg.cond(Sx) > COND_LIMIT:
        raise SingularCovariance("Sigma_x is not invertible")
    Sxi = symmetrize(np.linalg.inv(Sx))
    A_bw = model.A.T
    Cy_bw = cov.G_y.T
    Cz_bw = cov.G_z.T
    Q_bw = symmetrize(Sxi - A_bw @ Sxi @ A_bw.T)
    R_bw = symmetrize(cov.Sigma_y - cov.G_y.T @ Sxi @ cov.G_y)
    S_bw = model.Cy.T - model.A.T @ Sxi @ cov.G_y
    sol = solve_dare(A_bw, Cy_bw, Q_bw, R_bw, S_bw)
    # eps_bw is correlated with v_bw, so the optimal secondary update picks up a direct term
    # beyond Cz_bw @ Kf_bw.
    Syz_bw = model.Cz @ Sx @ model.Cy.T - cov.G_z.T @ Sxi @ cov.G_y
    CzKf_bw = Cz_bw @ sol.K_f + right_solve(Syz_bw, sol.Sigma_e)
    return BackwardStochasticParams(
        A_bw=A_bw, Cy_bw=Cy_bw, Cz_bw=Cz_bw, Gy_bw=model.Cy.T, Sigma_y_bw=cov.Sigma_y,
        K_bw=sol.K, Kf_bw=sol.K_f, CzKf_bw=CzKf_bw, Sigma_e_bw=sol.Sigma_e,
        P_pred_bw=sol.P_pred, P_filt_bw=sol.P_filt, Q_bw=Q_bw, R_bw=R_bw, S_bw=S_bw,
    )


def apply_similarity(model, T):
    """Change the latent basis ``x -> T x``; works for any model type exposing ``transform``."""
    T = np.atleast_2d(np.asarray(T, dtype=float))
    if T.shape[0] != T.shape[1] or T.shape[0] != model.A.shape[0]:
        raise DimensionMismatch("T must be n_x by n_x")
    if np.linalg.cond(T) > COND_LIMIT:
        raise SingularTransform("similarity transform is singular")
    return model.transform(T, np.linalg.inv(T))


def extended_observability(C, A, i):
    """Stack ``C, C A, ..., C A^(i-1)``."""
    blocks = [C]
    for _ in range(i - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)
