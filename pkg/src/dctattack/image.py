"""Image tensors, patch decomposition, per-patch statistics, and file IO.

An image is a float64 numpy array of shape (H, W, C) with values in [0, 1].
Helper types treat their arrays as immutable after construction; nothing in
this package writes into an image it was handed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import PatchLayoutError

RAW_MAGIC = b"IMGT"
RAW_HEADER = struct.Struct("<4sIII")  # magic, width, height, channels


def as_image(data) -> np.ndarray:
    """Coerce input to a float64 (H, W, C) array.

    2-D input is promoted to a single channel. Raises ValueError for
    anything that is not a non-empty 2-D or 3-D array.
    """
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or min(arr.shape) == 0:
        raise ValueError(f"expected a (H, W, C) image array, got shape {arr.shape}")
    return arr


def _check_blocks(data: np.ndarray, rows: int, cols: int) -> None:
    if data.ndim != 4 or data.shape[1] != data.shape[2]:
        raise PatchLayoutError(f"blocks must have shape (n, d, d, C), got {data.shape}")
    if min(data.shape) == 0:
        raise PatchLayoutError(f"blocks must be non-empty, got shape {data.shape}")
    if rows <= 0 or cols <= 0 or data.shape[0] != rows * cols:
        raise PatchLayoutError(
            f"{data.shape[0]} blocks cannot tile a {rows}x{cols} grid"
        )


@dataclass(frozen=True)
class PatchGrid:
    """Non-overlapping d x d x C pixel blocks of an image, in row-major order."""

    patches: np.ndarray  # (n, d, d, C)
    rows: int
    cols: int

    def __post_init__(self):
        _check_blocks(self.patches, self.rows, self.cols)

    @property
    def n(self) -> int:
        return self.patches.shape[0]

    @property
    def d(self) -> int:
        return self.patches.shape[1]

    @property
    def channels(self) -> int:
        return self.patches.shape[3]


def image_to_blocks(arr: np.ndarray, d: int) -> tuple[np.ndarray, int, int]:
    """Split (H, W, C) into ((rows*cols, d, d, C), rows, cols) without validation frills.

    Fast path shared by crop_patches and the attack engine.
    """
    h, w, c = arr.shape
    rows, cols = h // d, w // d
    blocks = (
        arr.reshape(rows, d, cols, d, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(rows * cols, d, d, c)
    )
    return blocks, rows, cols


def blocks_to_image(blocks: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of image_to_blocks; bit-exact reassembly."""
    n, d, _, c = blocks.shape
    return (
        blocks.reshape(rows, cols, d, d, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(rows * d, cols * d, c)
    )


def crop_patches(img, d: int) -> PatchGrid:
    """Cut an image into non-overlapping d x d blocks, row-major.

    Raises PatchLayoutError when H or W is not a multiple of d.
    """
    arr = as_image(img)
    if d <= 0:
        raise PatchLayoutError(f"patch size must be positive, got {d}")
    h, w, _ = arr.shape
    if h % d or w % d:
        raise PatchLayoutError(
            f"{w}x{h} image does not divide into {d}x{d} patches"
        )
    blocks, rows, cols = image_to_blocks(arr, d)
    return PatchGrid(patches=blocks, rows=rows, cols=cols)


def assemble_patches(grid: PatchGrid) -> np.ndarray:
    """Reassemble a PatchGrid into the (H, W, C) image it was cropped from.

    Exact inverse of crop_patches: round-tripping is bit-identical.
    """
    return blocks_to_image(grid.patches, grid.rows, grid.cols)


def patch_variances(grid: PatchGrid) -> np.ndarray:
    """Population variance of each patch, over all d*d*C values jointly.

    Returns a float64 vector of length grid.n, in patch order.
    """
    flat = grid.patches.reshape(grid.n, -1)
    return flat.var(axis=1)


def load_png(path) -> np.ndarray:
    """Load an 8-bit PNG (or any format Pillow reads) as float64 in [0, 1].

    Grayscale files come back with a single channel, everything else as RGB.
    """
    with Image.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.float64)[:, :, None]
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_png(path, img) -> None:
    """Save an image tensor as an 8-bit PNG, rounding to the nearest level."""
    arr = as_image(img)
    quantized = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    if quantized.shape[2] == 1:
        pil = Image.fromarray(quantized[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(quantized, mode="RGB")
    pil.save(path, format="PNG")


def save_raw(path, img) -> None:
    """Write the lossless tensor format: IMGT header plus float64 LE payload."""
    arr = as_image(img)
    h, w, c = arr.shape
    with open(path, "wb") as fh:
        fh.write(RAW_HEADER.pack(RAW_MAGIC, w, h, c))
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_raw(path) -> np.ndarray:
    """Read a tensor written by save_raw, byte-exactly."""
    data = Path(path).read_bytes()
    if len(data) < RAW_HEADER.size:
        raise ValueError(f"{path}: truncated tensor file")
    magic, w, h, c = RAW_HEADER.unpack_from(data)
    if magic != RAW_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, not a raw image tensor")
    expected = RAW_HEADER.size + 8 * w * h * c
    if w == 0 or h == 0 or c == 0 or len(data) != expected:
        raise ValueError(
            f"{path}: payload size {len(data)} does not match header {w}x{h}x{c}"
        )
    flat = np.frombuffer(data, dtype="<f8", offset=RAW_HEADER.size)
    return flat.reshape(h, w, c).astype(np.float64)


def fit_to_size(img, height: int, width: int) -> np.ndarray:
    """Center-crop (when large enough) or bilinearly resize to height x width."""
    arr = as_image(img)
    h, w, c = arr.shape
    if h == height and w == width:
        return arr
    if h >= height and w >= width:
        top = (h - height) // 2
        left = (w - width) // 2
        return arr[top : top + height, left : left + width, :].copy()
    stacked = [
        np.asarray(
            Image.fromarray((arr[:, :, k] * 255.0).astype(np.uint8), mode="L").resize(
                (width, height), Image.BILINEAR
            ),
            dtype=np.float64,
        )
        / 255.0
        for k in range(c)
    ]
    return np.stack(stacked, axis=2)
