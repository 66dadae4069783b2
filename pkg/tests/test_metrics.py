"""Metric exactness and agreement with naive reference implementations."""

from __future__ import annotations

import numpy as np
import pytest

from actdiff.metrics import latent_l2, mse, pool_frame, psnr, ssim


def _naive_ssim(pred, target, window=8, k1=0.01, k2=0.03):
    """Double-loop reference with the same definition, different code path."""
    c1 = (k1 * 1.0) ** 2
    c2 = (k2 * 1.0) ** 2
    scores = []
    for top in range(16 - window + 1):
        for left in range(16 - window + 1):
            wp = pred[top : top + window, left : left + window]
            wt = target[top : top + window, left : left + window]
            mu_p = wp.mean()
            mu_t = wt.mean()
            var_p = ((wp - mu_p) ** 2).mean()
            var_t = ((wt - mu_t) ** 2).mean()
            cov = ((wp - mu_p) * (wt - mu_t)).mean()
            scores.append(
                ((2 * mu_p * mu_t + c1) * (2 * cov + c2))
                / ((mu_p**2 + mu_t**2 + c1) * (var_p + var_t + c2))
            )
    return float(np.mean(scores))


def test_psnr_is_exact_at_mse_hundredth():
    base = np.zeros((16, 16))
    assert mse(base, np.full((16, 16), 0.1)) == 0.1**2
    assert psnr(base, np.full((16, 16), 0.1)) == 20.0
    assert psnr(base, np.full((16, 16), 0.01)) == 40.0


def test_psnr_perfect_and_capped():
    frame = np.random.default_rng(0).uniform(0, 1, (16, 16))
    assert psnr(frame, frame) == 100.0
    almost = frame.copy()
    almost[0, 0] = np.nextafter(frame[0, 0], 1.0)
    assert psnr(frame, almost) == 100.0


def test_psnr_decreases_with_error():
    base = np.zeros((16, 16))
    assert psnr(base, np.full((16, 16), 0.2)) < psnr(base, np.full((16, 16), 0.1))


def test_metrics_validate_inputs():
    with pytest.raises(ValueError):
        psnr(np.zeros((8, 8)), np.zeros((8, 8)))
    with pytest.raises(ValueError):
        psnr(np.zeros((16, 16)), np.full((16, 16), 1.5))
    with pytest.raises(ValueError):
        ssim(np.zeros((16, 16)), np.full((16, 16), np.nan))


def test_ssim_identical_frames_is_exactly_one():
    rng = np.random.default_rng(1)
    for _ in range(5):
        frame = rng.uniform(0, 1, (16, 16))
        assert ssim(frame, frame) == 1.0


def test_ssim_matches_naive_reference():
    rng = np.random.default_rng(2)
    for _ in range(5):
        pred = rng.uniform(0, 1, (16, 16))
        target = rng.uniform(0, 1, (16, 16))
        assert ssim(pred, target) == pytest.approx(_naive_ssim(pred, target), abs=1e-9)


def test_ssim_below_one_for_different_frames():
    rng = np.random.default_rng(3)
    pred = rng.uniform(0, 1, (16, 16))
    target = rng.uniform(0, 1, (16, 16))
    assert ssim(pred, target) < 1.0


def test_pool_frame_block_means():
    frame = np.zeros((16, 16))
    frame[0:4, 0:4] = 1.0
    frame[4:8, 4:8] = 0.5
    pooled = pool_frame(frame)
    assert pooled.shape == (4, 4)
    assert pooled[0, 0] == 1.0
    assert pooled[1, 1] == 0.5
    assert pooled[3, 3] == 0.0


def test_latent_l2_uniform_offset_is_exact():
    pred = np.full((5, 16, 16), 0.3)
    target = np.full((5, 16, 16), 0.2)
    assert latent_l2(pred, target) == pytest.approx(0.1, abs=1e-15)
    assert latent_l2(pred, pred) == 0.0


def test_latent_l2_validation():
    with pytest.raises(ValueError):
        latent_l2(np.zeros((2, 16, 16)), np.zeros((3, 16, 16)))
    with pytest.raises(ValueError):
        latent_l2(np.zeros((0, 16, 16)), np.zeros((0, 16, 16)))
    with pytest.raises(ValueError):
        latent_l2(np.zeros((16, 16)), np.zeros((16, 16)))
