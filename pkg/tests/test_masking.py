"""Low-frequency masks and variance-weighted search weights."""

import numpy as np
import pytest

from dctattack import (
    DegenerateImageError,
    lowfreq_mask,
    normalize_variances,
    weight_mask,
)


def test_template_keeps_exactly_the_low_corner():
    bmask = lowfreq_mask(16, 3, 2, 2)
    t = bmask.patch_template()
    assert t.shape == (16, 16)
    assert t.sum() == 9.0
    assert np.array_equal(t[:3, :3], np.ones((3, 3)))
    t2 = t.copy()
    t2[:3, :3] = 0.0
    assert not t2.any()
    assert bmask.reduction_ratio == 3 / 16


def test_corner_size_bounds():
    lowfreq_mask(16, 1, 1, 1)
    lowfreq_mask(16, 16, 1, 1)  # full corner is legal
    with pytest.raises(ValueError):
        lowfreq_mask(16, 0, 1, 1)
    with pytest.raises(ValueError):
        lowfreq_mask(16, 17, 1, 1)
    with pytest.raises(ValueError):
        lowfreq_mask(16, 3, 0, 2)


def test_normalize_variances_scales_by_max():
    out = normalize_variances([4.0, 1.0, 0.0])
    assert np.array_equal(out, [1.0, 0.25, 0.0])
    assert normalize_variances([7.0]).tolist() == [1.0]


def test_normalize_variances_rejects_degenerate_and_invalid():
    with pytest.raises(DegenerateImageError):
        normalize_variances([0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        normalize_variances([])
    with pytest.raises(ValueError):
        normalize_variances([1.0, -0.5])


def test_weight_mask_values_and_replication():
    bmask = lowfreq_mask(16, 3, 2, 2)
    q = np.array([1.0, 0.25, 0.0, 0.5])
    wm = weight_mask(q, bmask, alpha=4.0, channels=3)
    assert wm.values.shape == (4, 16, 16, 3)
    # corner of patch i carries alpha * q[i], identically across channels
    for i, qi in enumerate(q):
        corner = wm.values[i, :3, :3, :]
        assert np.all(corner == 4.0 * qi)
        outside = wm.values[i].copy()
        outside[:3, :3, :] = 0.0
        assert not outside.any()
    assert np.array_equal(wm.values[:, :, :, 0], wm.values[:, :, :, 2])


def test_weight_mask_is_linear_in_alpha():
    bmask = lowfreq_mask(16, 3, 1, 2)
    q = np.array([1.0, 0.5])
    one = weight_mask(q, bmask, alpha=1.0, channels=3).values
    four = weight_mask(q, bmask, alpha=4.0, channels=3).values
    assert np.array_equal(four, 4.0 * one)


def test_weight_mask_validates_inputs():
    bmask = lowfreq_mask(16, 3, 2, 2)
    with pytest.raises(ValueError):
        weight_mask([1.0, 0.5], bmask, alpha=4.0)  # 2 weights, 4 patches
    with pytest.raises(ValueError):
        weight_mask([1.0] * 4, bmask, alpha=0.0)
    with pytest.raises(ValueError):
        weight_mask([1.0] * 4, bmask, alpha=4.0, channels=0)
