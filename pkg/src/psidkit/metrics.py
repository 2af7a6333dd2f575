"""Scalar error and goodness-of-fit measures."""

import numpy as np

from .errors import DegenerateTarget, DimensionMismatch


def r2_score(z_true, z_hat):
    """Coefficient of determination averaged over target dimensions.

    Dimensions of ``z_true`` with zero variance are skipped; if every
    dimension is constant, :class:`DegenerateTarget` is raised.
    """
    z_true = np.asarray(z_true, dtype=float)
    z_hat = np.asarray(z_hat, dtype=float)
    if z_true.ndim == 1:
        z_true = z_true[:, None]
    if z_hat.ndim == 1:
        z_hat = z_hat[:, None]
    if z_true.shape != z_hat.shape:
        raise DimensionMismatch(f"shapes differ: {z_true.shape} vs {z_hat.shape}")
    if z_true.shape[0] < 2:
        raise DegenerateTarget("need at least two samples")
    ss_tot = np.sum((z_true - z_true.mean(axis=0)) ** 2, axis=0)
    ss_res = np.sum((z_true - z_hat) ** 2, axis=0)
    keep = ss_tot > 0
    if not np.any(keep):
        raise DegenerateTarget("every target dimension is constant")
    return float(np.mean(1.0 - ss_res[keep] / ss_tot[keep]))


def normalized_error(learned, true):
    """``||learned - true||_F / ||true||_F``."""
    learned = np.asarray(learned, dtype=float)
    true = np.asarray(true, dtype=float)
    denom = np.linalg.norm(true)
    if denom == 0:
        return float(np.linalg.norm(learned))
    return float(np.linalg.norm(learned - true) / denom)
