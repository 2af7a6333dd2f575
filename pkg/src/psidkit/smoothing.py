"""Forward-backward PSID smoothing of the secondary signal."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .filtering import psid_with_filtering
from .kalman import _as_signal, kalman_filter
from .lssm import Dims, FilteringModel

COMBINES = ("sum", "mean")


@dataclass(frozen=True)
class SmoothingModel:
    """A forward filter plus a filter trained on time-reversed data.

    With ``combine="sum"`` the backward model estimates the forward filter's
    residual and the two estimates add. With ``"mean"`` both estimate ``z``
    itself and are averaged.
    """

    forward: FilteringModel
    backward: FilteringModel
    combine: str = "sum"

    def __post_init__(self):
        if self.combine not in COMBINES:
            raise ValueError(f"combine must be one of {COMBINES}")
        if self.forward.n_y != self.backward.n_y or self.forward.n_z != self.backward.n_z:
            raise DimensionMismatch("forward and backward models disagree on signal dimensions")


def _backward_dims(dims: Dims, dims_bwd: Dims | None):
    return dims if dims_bwd is None else dims_bwd


def psid_with_smoothing(y, z, dims: Dims, dims_bwd: Dims | None = None) -> SmoothingModel:
    """Filter forward, then fit a second filter on reversed ``y`` against the reversed filtered residual."""
    fwd = psid_with_filtering(y, z, dims)
    y = _as_signal(y, dims.n_y)
    z = _as_signal(z, dims.n_z)
    resid = z - kalman_filter(fwd, y).z_filt
    bwd = psid_with_filtering(y[::-1], resid[::-1], _backward_dims(dims, dims_bwd))
    return SmoothingModel(forward=fwd, backward=bwd, combine="sum")


def psid_smoothing_alt(y, z, dims: Dims, dims_bwd: Dims | None = None) -> SmoothingModel:
    """Variant whose backward filter is trained on reversed ``z`` itself; estimates are averaged."""
    fwd = psid_with_filtering(y, z, dims)
    y = _as_signal(y, dims.n_y)
    z = _as_signal(z, dims.n_z)
    bwd = psid_with_filtering(y[::-1], z[::-1], _backward_dims(dims, dims_bwd))
    return SmoothingModel(forward=fwd, backward=bwd, combine="mean")


def smooth_decode(sm: SmoothingModel, y):
    """Smoothed estimate of ``z`` for every sample of ``y``."""
    y = _as_signal(y, sm.forward.n_y)
    zf = kalman_filter(sm.forward, y).z_filt
    zb = kalman_filter(sm.backward, y[::-1]).z_filt[::-1]
    if sm.combine == "sum":
        return zf + zb
    return (zf + zb) / 2
