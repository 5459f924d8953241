"""Training-time augmentation: random flip, axial rotation, Gaussian noise.

Volumes are ``[3, D, H, W]`` with the axial plane spanned by (H, W) and the
left-right axis being W.  Random draws happen in a fixed order (one uniform
per flip axis, then the angle, then the noise field) so a given generator
state always yields the same transform.  The timepoints of one patient
share the flip and rotation so the series stays spatially aligned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_AXES = {"D": -3, "H": -2, "W": -1}


@dataclass(frozen=True)
class AugmentSpec:
    flip_p: float = 0.5
    flip_axes: tuple = ("W",)
    max_angle: float = 180.0
    noise: bool = True
    noise_std: float = 0.3

    def __post_init__(self):
        for ax in self.flip_axes:
            if ax not in _AXES:
                raise ValueError(f"flip axis must be one of {sorted(_AXES)}, got {ax!r}")
        if not 0.0 <= self.flip_p <= 1.0:
            raise ValueError(f"flip_p must be in [0, 1], got {self.flip_p}")


def flip(volume: np.ndarray, axis: str = "W") -> np.ndarray:
    return np.flip(volume, axis=_AXES[axis]).copy()


def rotate_axial(volume: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate every axial slice about its centre with bilinear sampling and zero fill.

    Accepts ``[..., 3, D, H, W]``; the mask channel is re-thresholded at 0.5.
    """
    if degrees == 0.0:
        return volume.copy()
    H, W = volume.shape[-2:]
    cy, cx = (H - 1) / 2.0, (W - 1) / 2.0
    theta = math.radians(degrees)
    c, s = math.cos(theta), math.sin(theta)
    yy, xx = np.meshgrid(np.arange(H, dtype=float), np.arange(W, dtype=float), indexing="ij")
    # inverse map: output pixel -> source location
    sy = cy + c * (yy - cy) - s * (xx - cx)
    sx = cx + s * (yy - cy) + c * (xx - cx)
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    fy, fx = sy - y0, sx - x0
    out = np.zeros_like(volume)
    for dy, dx, wgt in ((0, 0, (1 - fy) * (1 - fx)), (0, 1, (1 - fy) * fx),
                        (1, 0, fy * (1 - fx)), (1, 1, fy * fx)):
        yi, xi = y0 + dy, x0 + dx
        ok = (yi >= 0) & (yi < H) & (xi >= 0) & (xi < W) & (wgt != 0)
        out[..., ok] += wgt[ok] * volume[..., yi[ok], xi[ok]]
    out[..., 2, :, :, :] = (out[..., 2, :, :, :] >= 0.5)
    return out


def augment_series(volumes, spec: AugmentSpec, rng: np.random.Generator) -> list:
    """Augment the timepoints of one patient with a shared flip/rotation.

    Noise, when enabled, is drawn independently per timepoint, in order.
    """
    flips = [ax for ax in spec.flip_axes if rng.random() < spec.flip_p]
    angle = float(rng.uniform(-spec.max_angle, spec.max_angle)) if spec.max_angle > 0 else 0.0
    stack = np.stack(volumes)
    for ax in flips:
        stack = np.flip(stack, axis=_AXES[ax])
    out = list(rotate_axial(stack, angle))
    if spec.noise and spec.noise_std > 0:
        for vol in out:
            vol[:2] += rng.normal(0.0, spec.noise_std, size=vol[:2].shape)
    return out


def augment(volume: np.ndarray, spec: AugmentSpec, rng: np.random.Generator) -> np.ndarray:
    return augment_series([volume], spec, rng)[0]
