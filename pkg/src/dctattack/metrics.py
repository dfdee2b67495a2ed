"""Distortion and perceptual-quality metrics, plus per-run aggregation.

All metrics assume float64 images in [0, 1] with matching shapes. Aggregates
use the lower median (the (n-1)//2-th order statistic) so reported numbers
always correspond to an actual run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import as_image

PSNR_IDENTICAL_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(x, x_hat) -> tuple[np.ndarray, np.ndarray]:
    a = as_image(x)
    b = as_image(x_hat)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def l2_distortion(x, x_hat) -> float:
    """Euclidean norm of the difference, over all pixels and channels."""
    a, b = _pair(x, x_hat)
    return float(np.linalg.norm((a - b).ravel()))


def psnr(x, x_hat) -> float:
    """Peak signal-to-noise ratio in dB for unit dynamic range.

    Identical images would be infinite, so they report a 99 dB cap instead.
    """
    a, b = _pair(x, x_hat)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_IDENTICAL_CAP
    return float(10.0 * np.log10(1.0 / mse))


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    radius = (size - 1) // 2
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-0.5 * (offsets / sigma) ** 2)
    taps /= taps.sum()
    return np.outer(taps, taps)


def _windowed_mean(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    windows = np.lib.stride_tricks.sliding_window_view(plane, kernel.shape)
    return np.tensordot(windows, kernel, axes=([2, 3], [0, 1]))


def ssim(x, x_hat) -> float:
    """Single-scale structural similarity with an 11x11 Gaussian window.

    Statistics are weighted by a sigma=1.5 Gaussian, computed on the interior
    (windows fully inside the image), averaged over the map and then over
    channels. Stabilizers use K1=0.01, K2=0.03 at unit dynamic range.
    """
    a, b = _pair(x, x_hat)
    h, w, c = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ValueError(
            f"image {w}x{h} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    kernel = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    scores = []
    for k in range(c):
        pa = a[:, :, k]
        pb = b[:, :, k]
        mu_a = _windowed_mean(pa, kernel)
        mu_b = _windowed_mean(pb, kernel)
        var_a = _windowed_mean(pa * pa, kernel) - mu_a**2
        var_b = _windowed_mean(pb * pb, kernel) - mu_b**2
        cov = _windowed_mean(pa * pb, kernel) - mu_a * mu_b
        num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
        den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


def lower_median(values) -> float:
    """The (n-1)//2-th order statistic: an element of the data, not a midpoint."""
    vals = sorted(float(v) for v in values)
    if not vals:
        raise ValueError("median of an empty sequence")
    return vals[(len(vals) - 1) // 2]


@dataclass(frozen=True)
class ImageMetrics:
    """Per-image outcome row consumed by aggregation."""

    l2: float
    psnr: float
    ssim: float
    succeeded: bool
    queries_used: int


def success_rate(results, threshold: float, budget: int | None = None) -> float:
    """Fraction of results that found an adversarial example with L2 <= threshold.

    The denominator is all results. With budget set, only queries_used <=
    budget counts as a success, giving rate-versus-budget curves.
    """
    rows = list(results)
    if not rows:
        raise ValueError("success rate of an empty result set")
    hits = 0
    for row in rows:
        if not row.succeeded or row.l2 > threshold:
            continue
        if budget is not None and row.queries_used > budget:
            continue
        hits += 1
    return hits / len(rows)


@dataclass(frozen=True)
class MetricReport:
    """Aggregate view over per-image metrics."""

    entries: tuple[ImageMetrics, ...]
    epsilon_threshold: float = 5.0

    @property
    def count(self) -> int:
        return len(self.entries)

    @property
    def l2_values(self) -> tuple[float, ...]:
        return tuple(e.l2 for e in self.entries)

    @property
    def psnr_values(self) -> tuple[float, ...]:
        return tuple(e.psnr for e in self.entries)

    @property
    def ssim_values(self) -> tuple[float, ...]:
        return tuple(e.ssim for e in self.entries)

    @property
    def mean_l2(self) -> float:
        return float(np.mean(self.l2_values))

    @property
    def median_l2(self) -> float:
        return lower_median(self.l2_values)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr_values))

    @property
    def median_psnr(self) -> float:
        return lower_median(self.psnr_values)

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim_values))

    @property
    def median_ssim(self) -> float:
        return lower_median(self.ssim_values)

    @property
    def success_fraction(self) -> float:
        return success_rate(self.entries, self.epsilon_threshold)

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "epsilon_threshold": self.epsilon_threshold,
            "mean_l2": self.mean_l2,
            "median_l2": self.median_l2,
            "mean_psnr": self.mean_psnr,
            "median_psnr": self.median_psnr,
            "mean_ssim": self.mean_ssim,
            "median_ssim": self.median_ssim,
            "success_fraction": self.success_fraction,
        }


def aggregate(entries, epsilon_threshold: float = 5.0) -> MetricReport:
    """Bundle per-image metrics into a MetricReport; empty input is an error."""
    rows = tuple(entries)
    if not rows:
        raise ValueError("cannot aggregate an empty metric set")
    return MetricReport(entries=rows, epsilon_threshold=float(epsilon_threshold))
