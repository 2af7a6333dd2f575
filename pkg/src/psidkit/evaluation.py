"""Alignment of learned models to ground truth and the comparison metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateAlignment
from .kalman import _as_signal, kalman_predict
from .lssm import COND_LIMIT, Dims, FilteringModel, StochasticModel, apply_similarity, solve_dare, to_predictor_form
from .metrics import normalized_error, r2_score
from .subspace import psid_identify

__all__ = [
    "MetricsRecord", "PARAMETERS", "align_models", "eigenvalue_error", "match_eigenvalues",
    "compare_parameters", "shifted_psid_baseline", "shifted_decode", "r2_score",
]

PARAMETERS = ("A", "C_y", "C_z", "G_y", "K", "K_f", "Sigma_y", "C_zK_f", "eigA")


@dataclass
class MetricsRecord:
    model_id: int
    N: int
    seed: int
    errors: dict = field(default_factory=dict)
    r2_learned: tuple | None = None
    r2_ideal: tuple | None = None


def align_models(true_m, learned, y_align):
    """Similarity-transform ``learned`` into the true model's latent basis.

    Both predictors run on ``y_align`` and ``T`` is the least-squares map from
    learned to true predicted states. ``true_m`` may be a stochastic model or
    a predictor. Returns ``(T, aligned)``.
    """
    true_p = to_predictor_form(true_m) if isinstance(true_m, StochasticModel) else true_m
    y_align = _as_signal(y_align, true_m.n_y)
    if learned.n_x != true_p.n_x:
        raise DegenerateAlignment("state dimensions differ")
    xt = kalman_predict(true_p, y_align).x_pred
    xl = kalman_predict(learned, y_align).x_pred
    G = xl.T @ xl
    if not np.all(np.isfinite(G)) or np.linalg.cond(G) > COND_LIMIT:
        raise DegenerateAlignment("learned state trajectory is rank deficient")
    T = np.linalg.solve(G, xl.T @ xt).T
    if np.linalg.cond(T) > COND_LIMIT:
        raise DegenerateAlignment("alignment transform is singular")
    return T, apply_similarity(learned, T)


def match_eigenvalues(true_eigs, learned_eigs):
    """Greedy nearest pairing; true eigenvalues are visited by magnitude, then angle."""
    true_eigs = np.asarray(true_eigs, dtype=complex)
    remaining = list(np.asarray(learned_eigs, dtype=complex))
    order = sorted(range(len(true_eigs)), key=lambda j: (abs(true_eigs[j]), np.angle(true_eigs[j])))
    matched = np.empty(len(true_eigs), dtype=complex)
    for j in order:
        d = [abs(true_eigs[j] - e) for e in remaining]
        matched[j] = remaining.pop(int(np.argmin(d)))
    return matched


def eigenvalue_error(A_learned, A_true):
    et = np.linalg.eigvals(A_true)
    el = match_eigenvalues(et, np.linalg.eigvals(A_learned))
    denom = np.linalg.norm(et)
    return float(np.linalg.norm(el - et) / denom) if denom > 0 else float(np.linalg.norm(el))


def true_targets(true_m: StochasticModel) -> dict:
    p = to_predictor_form(true_m)
    Kf = solve_dare(true_m.A, true_m.Cy, true_m.Q, true_m.R, true_m.S).K_f
    return {
        "A": p.A, "C_y": p.Cy, "C_z": p.Cz, "G_y": p.G_y, "K": p.K, "K_f": Kf,
        "Sigma_y": p.Sigma_y, "C_zK_f": p.Cz @ Kf,
    }


def compare_parameters(targets: dict, learned) -> dict:
    """Normalised Frobenius errors of each learned parameter against ``targets``.

    ``targets`` maps parameter names (see :data:`PARAMETERS`) to true values in
    the learned model's basis. Parameters that either side lacks map to
    ``None``.
    """
    got = {
        "A": learned.A, "C_y": learned.Cy, "C_z": learned.Cz, "G_y": learned.G_y, "K": learned.K,
        "Sigma_y": learned.Sigma_y, "K_f": getattr(learned, "Kf", None), "C_zK_f": getattr(learned, "CzKf", None),
    }
    out = {}
    for name in PARAMETERS:
        if name == "eigA":
            out[name] = eigenvalue_error(learned.A, targets["A"])
            continue
        a, b = got.get(name), targets.get(name)
        out[name] = None if a is None or b is None else normalized_error(a, b)
    return out


def shifted_psid_baseline(y, z, dims: Dims):
    """PSID trained with ``y`` one step ahead of ``z``: pairs ``(y[k+1], z[k])``.

    Its one-step prediction of the shifted target sees ``y`` up to the same
    sample, so it acts as a filter; decode with :func:`shifted_decode`.
    """
    y = _as_signal(y, dims.n_y)
    z = _as_signal(z, dims.n_z)
    return psid_identify(y[1:], z[:-1], dims)


def shifted_decode(model, y):
    """Estimate ``z[k]`` from ``y[0..k]`` with a model from :func:`shifted_psid_baseline`."""
    y = _as_signal(y, model.n_y)
    x = kalman_predict(model, y).x_pred
    F = model.A - model.K @ model.Cy
    x_next = np.vstack([x[1:], x[-1:] @ F.T + y[-1:] @ model.K.T])
    return x_next @ model.Cz.T


def learned_kf(fm: FilteringModel, use="auto"):
    """Recovered ``Kf`` or ``None``; ``auto`` picks ``Cz`` when ``n_z >= n_x`` and ``Gamma_z`` otherwise."""
    from .filtering import recover_kf

    if use == "auto":
        use = "Cz" if fm.n_z >= fm.n_x or fm.GammaZKf is None else "GammaZ"
    kf = recover_kf(fm, use=use)
    return kf if isinstance(kf, np.ndarray) else None
