"""Random ground-truth models and data generation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from . import _kernels
from .errors import ConfigError
from .lssm import StochasticModel, covariances_from_stochastic, is_psd, symmetrize

MAX_BASIS_COND = 100.0


@dataclass(frozen=True)
class GenConfig:
    n_x: tuple[int, int] = (1, 6)
    n_y: tuple[int, int] = (1, 10)
    n_z: tuple[int, int] = (1, 10)
    eig_magnitude: tuple[float, float] = (0.3, 0.95)
    noise_scale: float = 1.0
    allow_Sxz: bool = False
    correlated_S: bool = False
    n1_policy: str = "full"
    seed: int = 0
    min_eig_gap: float = 0.1
    min_canonical_corr: float = 0.1

    def __post_init__(self):
        for name in ("n_x", "n_y", "n_z"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ConfigError(f"{name} range {lo}..{hi} is empty or non-positive")
        lo, hi = self.eig_magnitude
        if not 0 < lo <= hi < 1:
            raise ConfigError("eigenvalue magnitude interval must lie inside (0, 1)")
        if self.n1_policy not in ("full", "random"):
            raise ConfigError("n1_policy must be 'full' or 'random'")
        if self.noise_scale <= 0:
            raise ConfigError("noise_scale must be positive")
        if self.min_eig_gap < 0:
            raise ConfigError("min_eig_gap must be non-negative")
        if not 0 <= self.min_canonical_corr < 1:
            raise ConfigError("min_canonical_corr must lie in [0, 1)")


def z_relevant_states(model: StochasticModel) -> int:
    """Number of states that reach ``z`` in a generated model (its nonzero ``Cz`` columns)."""
    return int(np.count_nonzero(np.any(model.Cz != 0, axis=0)))


def _random_eigenvalues(n, lo, hi, rng, min_gap=0.0, avoid=(), max_tries=1000):
    # Nearly repeated eigenvalues make some states all but invisible in the data, so draws
    # closer than min_gap (conjugate partners included) are rejected.
    for _ in range(max_tries):
        vals = _draw_eigenvalues(n, lo, hi, rng)
        v = np.concatenate([np.asarray(vals, dtype=complex), np.asarray(avoid, dtype=complex)])
        gaps = np.abs(v[:, None] - v[None, :])
        np.fill_diagonal(gaps, np.inf)
        if v.size < 2 or gaps.min() >= min_gap:
            return vals
    raise RuntimeError("could not draw well-separated eigenvalues")


def _draw_eigenvalues(n, lo, hi, rng):
    vals = []
    while len(vals) < n:
        mag = rng.uniform(lo, hi)
        if n - len(vals) >= 2 and rng.random() < 0.5:
            ang = rng.uniform(0.05, np.pi - 0.05)
            vals.append(mag * np.exp(1j * ang))
            vals.append(mag * np.exp(-1j * ang))
        else:
            vals.append(mag * rng.choice([-1.0, 1.0]))
    return vals


def _real_block_form(eigs):
    blocks = []
    k = 0
    while k < len(eigs):
        lam = eigs[k]
        if abs(np.imag(lam)) > 0:
            a, b = np.real(lam), np.imag(lam)
            blocks.append(np.array([[a, b], [-b, a]]))
            k += 2
        else:
            blocks.append(np.array([[np.real(lam)]]))
            k += 1
    return block_diag(*blocks)


def _well_conditioned_basis(n, rng, max_tries=1000):
    for _ in range(max_tries):
        T = rng.standard_normal((n, n))
        if np.linalg.cond(T) < MAX_BASIS_COND:
            return T
    raise RuntimeError("could not draw a well-conditioned basis")


def _random_dynamics(n, cfg, rng, avoid=()):
    eigs = _random_eigenvalues(n, *cfg.eig_magnitude, rng, cfg.min_eig_gap, avoid)
    T = _well_conditioned_basis(n, rng)
    return T @ _real_block_form(eigs) @ np.linalg.inv(T), eigs


def generate_random_model(cfg: GenConfig, rng: np.random.Generator, max_tries=1000) -> StochasticModel:
    """Draw a stable model with random dimensions, dynamics and noise statistics.

    Under ``n1_policy="random"`` only the first ``n_1`` states drive ``z``; the
    rest form a decoupled block of ``A`` with zero ``Cz`` columns, so the pair
    ``(Cz, A)`` is unobservable whenever ``n_1 < n_x``. Draws whose weakest
    state is nearly invisible in the data (see :func:`canonical_correlations`)
    are rejected and redrawn.
    """
    for _ in range(max_tries):
        model = _draw_model(cfg, rng)
        if cfg.min_canonical_corr <= 0:
            return model
        cc_y, cc_z = canonical_correlations(model)
        n1 = z_relevant_states(model)
        if cc_y[model.n_x - 1] >= cfg.min_canonical_corr and (n1 == 0 or cc_z[n1 - 1] >= cfg.min_canonical_corr):
            return model
    raise RuntimeError("could not draw a model meeting the identifiability floor")


def _wishart(n, rng):
    # Twice as many columns as rows keeps the draw well conditioned.
    W = rng.standard_normal((n, 2 * n)) / np.sqrt(2 * n)
    return W @ W.T


def _draw_model(cfg, rng):
    nx = int(rng.integers(cfg.n_x[0], cfg.n_x[1] + 1))
    ny = int(rng.integers(cfg.n_y[0], cfg.n_y[1] + 1))
    nz = int(rng.integers(cfg.n_z[0], cfg.n_z[1] + 1))
    n1 = nx if cfg.n1_policy == "full" else int(rng.integers(1, nx + 1))

    if n1 < nx:
        A1, eigs1 = _random_dynamics(n1, cfg, rng)
        A2, _ = _random_dynamics(nx - n1, cfg, rng, avoid=eigs1)
        A = block_diag(A1, A2)
    else:
        A, _ = _random_dynamics(nx, cfg, rng)
    Cy = rng.standard_normal((ny, nx))
    Cz = rng.standard_normal((nz, nx))
    Cz[:, n1:] = 0.0

    scale = np.concatenate([np.ones(nx), np.full(ny, cfg.noise_scale)])
    joint = _wishart(nx + ny, rng) * np.outer(scale, scale)
    Q, S, R = joint[:nx, :nx], joint[:nx, nx:], joint[nx:, nx:]
    if not cfg.correlated_S:
        S = np.zeros_like(S)

    Rz = _wishart(nz, rng) * cfg.noise_scale ** 2
    Sxz = np.zeros((nx, nz))
    if cfg.allow_Sxz:
        # eps = F w_perp + eta with w_perp the part of w uncorrelated with v, so eps stays independent of v.
        Q_perp = symmetrize(Q - S @ np.linalg.solve(R, S.T))
        F = rng.standard_normal((nz, nx)) / np.sqrt(nx)
        Sxz = Q_perp @ F.T
        Rz = Rz + F @ Q_perp @ F.T
    model = StochasticModel(A=A, Cy=Cy, Cz=Cz, Q=symmetrize(Q), R=symmetrize(R), S=S, Rz=symmetrize(Rz), Sxz=Sxz)
    return model.check()


def _block_toeplitz(lags, i, transpose=False):
    """Covariance of ``[s[k], s[k+1], ...]`` (or of ``[s[k-1], s[k-2], ...]`` with ``transpose``)."""
    d = lags[0].shape[0]
    T = np.empty((i * d, i * d))
    for a in range(i):
        for b in range(i):
            L = lags[a - b] if a >= b else lags[b - a].T
            T[a * d:(a + 1) * d, b * d:(b + 1) * d] = L.T if transpose else L
    return T


def _canonical(F, Sf, Sp):
    Wf = np.linalg.inv(np.linalg.cholesky(symmetrize(Sf)))
    Wp = np.linalg.inv(np.linalg.cholesky(symmetrize(Sp)))
    return np.linalg.svd(Wf @ F @ Wp.T, compute_uv=False)


def canonical_correlations(model: StochasticModel, i=20):
    """Canonical correlations of future ``y`` and of future ``z`` with past ``y`` over horizon ``i``.

    The ``n``-th correlation measures how visible the ``n``-th state direction is
    in the data; values near zero mean that state is practically unidentifiable.
    """
    cov = covariances_from_stochastic(model)
    A, Cy, Cz = model.A, model.Cy, model.Cz
    powers = [np.eye(model.n_x)]
    for _ in range(2 * i):
        powers.append(powers[-1] @ A)
    lam_y = [cov.Sigma_y] + [Cy @ powers[l - 1] @ cov.G_y for l in range(1, i)]
    Sz = symmetrize(Cz @ cov.Sigma_x @ Cz.T + model.Rz)
    lam_z = [Sz] + [Cz @ powers[l - 1] @ cov.G_z for l in range(1, i)]
    Sp = _block_toeplitz(lam_y, i, transpose=True)
    Delta = np.hstack([powers[l] @ cov.G_y for l in range(i)])
    Oy = np.vstack([Cy @ powers[l] for l in range(i)])
    Oz = np.vstack([Cz @ powers[l] for l in range(i)])
    cc_y = _canonical(Oy @ Delta, _block_toeplitz(lam_y, i), Sp)
    cc_z = _canonical(Oz @ Delta, _block_toeplitz(lam_z, i), Sp)
    return cc_y, cc_z


def _psd_factor(M):
    w, V = np.linalg.eigh(symmetrize(M))
    return V * np.sqrt(np.clip(w, 0, None))


def simulate(model: StochasticModel, N: int, rng: np.random.Generator, x0=None):
    """Draw ``(y, z, x)`` of length ``N`` from the stationary process.

    ``x0`` defaults to a draw from the stationary state distribution.
    """
    nx, ny, nz = model.n_x, model.n_y, model.n_z
    joint = np.zeros((nx + ny + nz, nx + ny + nz))
    joint[: nx + ny, : nx + ny] = model.noise_block
    joint[:nx, nx + ny:] = model.Sxz
    joint[nx + ny:, :nx] = model.Sxz.T
    joint[nx + ny:, nx + ny:] = model.Rz
    if not is_psd(joint):
        raise ValueError("joint noise covariance is not PSD")
    L = _psd_factor(joint)
    noise = rng.standard_normal((N, L.shape[1])) @ L.T
    w, v, eps = noise[:, :nx], noise[:, nx:nx + ny], noise[:, nx + ny:]
    if x0 is None:
        Sx = covariances_from_stochastic(model).Sigma_x
        x0 = _psd_factor(Sx) @ rng.standard_normal(nx)
    x = _kernels.linear_recursion(np.ascontiguousarray(model.A), np.ascontiguousarray(w), np.asarray(x0, dtype=float))
    y = x @ model.Cy.T + v
    z = x @ model.Cz.T + eps
    return y, z, x
