"""Low-frequency coefficient selection and variance-weighted search masks.

The attack perturbs only the upper-left r x r corner of each patch's DCT
coefficients (the lowest horizontal and vertical frequencies), and scales
each patch's corner by how textured that patch is relative to the busiest
patch in the image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateImageError


@dataclass(frozen=True)
class BinaryMask:
    """Per-patch 0/1 indicator keeping the r x r lowest-frequency corner."""

    d: int
    r: int
    rows: int
    cols: int

    def __post_init__(self):
        if self.d <= 0:
            raise ValueError(f"patch size must be positive, got {self.d}")
        if not 1 <= self.r <= self.d:
            raise ValueError(f"corner size must satisfy 1 <= r <= d, got r={self.r}")
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError(f"grid must be non-empty, got {self.rows}x{self.cols}")

    @property
    def n(self) -> int:
        return self.rows * self.cols

    @property
    def reduction_ratio(self) -> float:
        """Fraction of each frequency axis kept (r / d)."""
        return self.r / self.d

    def patch_template(self) -> np.ndarray:
        """The (d, d) 0/1 float template shared by every patch."""
        template = np.zeros((self.d, self.d), dtype=np.float64)
        template[: self.r, : self.r] = 1.0
        return template


def lowfreq_mask(d: int, r: int, rows: int, cols: int) -> BinaryMask:
    """Build the binary low-frequency mask for a rows x cols grid of d x d patches."""
    return BinaryMask(d=d, r=r, rows=rows, cols=cols)


def normalize_variances(variances) -> np.ndarray:
    """Scale patch variances by the maximum, mapping them into [0, 1].

    Raises DegenerateImageError when every variance is zero (a constant
    image), since the weights would be identically zero.
    """
    q = np.asarray(variances, dtype=np.float64)
    if q.ndim != 1 or q.size == 0:
        raise ValueError(f"expected a non-empty 1-D variance vector, got shape {q.shape}")
    if np.any(q < 0):
        raise ValueError("variances must be non-negative")
    top = float(q.max())
    if top <= 0.0:
        raise DegenerateImageError(
            "every patch is constant; variance weights are undefined"
        )
    return q / top


@dataclass(frozen=True)
class WeightMask:
    """Dense per-coefficient weights: alpha * q_norm[i] on patch i's corner."""

    values: np.ndarray  # (n, d, d, C)
    alpha: float
    q_norm: np.ndarray  # (n,)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def weight_mask(q_norm, bmask: BinaryMask, alpha: float, channels: int = 3) -> WeightMask:
    """Combine normalized variances with the binary corner into a weight tensor.

    The weight of patch i is alpha * q_norm[i] over its r x r corner and zero
    elsewhere, replicated identically across all channels.
    """
    q = np.asarray(q_norm, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != bmask.n:
        raise ValueError(
            f"got {q.shape} variance weights for a mask of {bmask.n} patches"
        )
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if channels <= 0:
        raise ValueError(f"channel count must be positive, got {channels}")
    template = bmask.patch_template()
    per_patch = alpha * q[:, None, None, None] * template[None, :, :, None]
    values = np.repeat(per_patch, channels, axis=3)
    return WeightMask(values=values, alpha=float(alpha), q_norm=q.copy())
