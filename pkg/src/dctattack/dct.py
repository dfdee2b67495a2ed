"""Per-patch 2-D DCT-II and its inverse, orthonormal convention.

The basis is scaled so the transform matrix B satisfies B @ B.T = I, which
makes the block transform an isometry: L2 norms agree between the pixel and
coefficient domains, and the inverse is exactly the transpose.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .image import PatchGrid, _check_blocks


@lru_cache(maxsize=None)
def dct_basis(d: int) -> np.ndarray:
    """Orthonormal DCT-II matrix of size d x d.

    B[u, s] = a(u) * cos((2s + 1) * u * pi / (2d)) with a(0) = sqrt(1/d) and
    a(u > 0) = sqrt(2/d). Cached per size; the array is frozen because it is
    shared between callers.
    """
    if d <= 0:
        raise ValueError(f"basis size must be positive, got {d}")
    s = np.arange(d, dtype=np.float64)
    u = np.arange(d, dtype=np.float64)[:, None]
    basis = np.sqrt(2.0 / d) * np.cos((2.0 * s + 1.0) * u * np.pi / (2.0 * d))
    basis[0, :] /= np.sqrt(2.0)
    basis.setflags(write=False)
    return basis


def _separable(blocks: np.ndarray, mat: np.ndarray) -> np.ndarray:
    # (n, d, d, C): apply mat on the row axis and mat on the column axis.
    moved = np.moveaxis(blocks, 3, 1)  # (n, C, d, d)
    out = mat @ moved @ mat.T
    return np.moveaxis(out, 1, 3)


def dct_blocks(blocks: np.ndarray) -> np.ndarray:
    """Forward 2-D DCT-II of every (d, d) slice of an (n, d, d, C) stack."""
    return _separable(blocks, dct_basis(blocks.shape[1]))


def idct_blocks(coeffs: np.ndarray) -> np.ndarray:
    """Exact inverse of dct_blocks."""
    return _separable(coeffs, dct_basis(coeffs.shape[1]).T)


@dataclass(frozen=True)
class DctMatrix:
    """Per-patch DCT coefficients, congruent to the PatchGrid they came from."""

    coeffs: np.ndarray  # (n, d, d, C)
    rows: int
    cols: int

    def __post_init__(self):
        _check_blocks(self.coeffs, self.rows, self.cols)

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]

    @property
    def d(self) -> int:
        return self.coeffs.shape[1]

    @property
    def channels(self) -> int:
        return self.coeffs.shape[3]


def block_dct(grid: PatchGrid) -> DctMatrix:
    """Transform every patch of a PatchGrid, preserving the grid layout."""
    return DctMatrix(coeffs=dct_blocks(grid.patches), rows=grid.rows, cols=grid.cols)


def block_idct(mat: DctMatrix) -> PatchGrid:
    """Invert block_dct; round-tripping recovers patches to float precision."""
    return PatchGrid(patches=idct_blocks(mat.coeffs), rows=mat.rows, cols=mat.cols)
