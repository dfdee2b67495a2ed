"""Shared fixtures and reference oracles for the test suite."""

import numpy as np
from scipy.ndimage import gaussian_filter

from dctattack import HardLabelOracle, LinearOracle


def smooth_image(seed, height=32, width=32, channels=3):
    """Deterministic textured image in [0.15, 0.85]; every patch non-constant."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((height, width, channels))
    img = gaussian_filter(noise, sigma=(4.0, 4.0, 0.0))
    return 0.15 + 0.7 * (img - img.min()) / (img.max() - img.min())


def aligned_linear_oracle(img, margin=0.5, seed=42):
    """Hyperplane oracle whose boundary sits `margin` away from this image."""
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(img.shape)
    w /= np.linalg.norm(w.ravel())
    b = float(np.vdot(w, img)) + margin
    return LinearOracle(w, b)


class CountingOracle(HardLabelOracle):
    """Transparent wrapper that counts raw predict() calls."""

    def __init__(self, inner):
        self.inner = inner
        self.num_classes = inner.num_classes
        self.calls = 0

    def predict(self, x):
        self.calls += 1
        return self.inner.predict(x)


class FailingOracle(HardLabelOracle):
    """Raises on the n-th predict call; earlier calls delegate."""

    def __init__(self, inner, fail_at):
        self.inner = inner
        self.num_classes = inner.num_classes
        self.fail_at = fail_at
        self.calls = 0

    def predict(self, x):
        self.calls += 1
        if self.calls == self.fail_at:
            raise RuntimeError("simulated oracle outage")
        return self.inner.predict(x)


class EverywhereElseOracle(HardLabelOracle):
    """Label 0 exactly at the reference image, 1 anywhere else."""

    num_classes = 2

    def __init__(self, x0):
        self.x0 = np.clip(np.asarray(x0, dtype=np.float64), 0.0, 1.0)

    def predict(self, x):
        return 0 if np.array_equal(x, self.x0) else 1


class ConstantOracle(HardLabelOracle):
    """Always the same label; nothing is ever adversarial."""

    num_classes = 2

    def __init__(self, label=0):
        self.label = label

    def predict(self, x):
        return self.label
