"""Frame-comparison metrics for 16x16 grayscale frames in [0, 1].

PSNR computes the mean squared error with compensated summation so that
analytically exact cases (for example a uniform 0.1 offset) hit their
closed-form values to the last bit, and caps the result at 100 dB to keep
perfect reconstructions finite. SSIM uses an 8x8 sliding window at stride 1
with uniform weights and population (ddof=0) moments. The latent distance
works on 4x4 average-pooled frames, normalized by the square root of the
pooled pixel count.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .validation import FRAME_SIZE, check_frame

PSNR_CAP = 100.0
SSIM_WINDOW = 8
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_RANGE = 1.0
POOL_FACTOR = 4


def mse(pred, target) -> float:
    """Mean squared error with order-independent compensated summation."""
    pred = check_frame(pred)
    target = check_frame(target)
    diff = (pred - target).ravel()
    return math.fsum(d * d for d in diff) / diff.size


def psnr(pred, target) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100."""
    err = mse(pred, target)
    if err == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, -10.0 * math.log10(err))


def ssim(pred, target) -> float:
    """Mean structural similarity over all 8x8 windows at stride 1."""
    pred = check_frame(pred)
    target = check_frame(target)
    c1 = (SSIM_K1 * SSIM_RANGE) ** 2
    c2 = (SSIM_K2 * SSIM_RANGE) ** 2
    wp = sliding_window_view(pred, (SSIM_WINDOW, SSIM_WINDOW)).reshape(-1, SSIM_WINDOW**2)
    wt = sliding_window_view(target, (SSIM_WINDOW, SSIM_WINDOW)).reshape(-1, SSIM_WINDOW**2)
    mu_p = wp.mean(axis=1)
    mu_t = wt.mean(axis=1)
    dp = wp - mu_p[:, None]
    dt = wt - mu_t[:, None]
    # One expression route for variances and covariance keeps identical
    # inputs exactly at score 1.0.
    var_p = (dp * dp).mean(axis=1)
    var_t = (dt * dt).mean(axis=1)
    cov = (dp * dt).mean(axis=1)
    score = ((2 * mu_p * mu_t + c1) * (2 * cov + c2)) / (
        (mu_p**2 + mu_t**2 + c1) * (var_p + var_t + c2)
    )
    return float(score.mean())


def pool_frame(frame) -> np.ndarray:
    """Average-pool a 16x16 frame with non-overlapping 4x4 blocks."""
    frame = check_frame(frame)
    side = FRAME_SIZE // POOL_FACTOR
    return frame.reshape(side, POOL_FACTOR, side, POOL_FACTOR).mean(axis=(1, 3))


def latent_l2(pred_frames, target_frames) -> float:
    """Mean per-frame L2 distance between 4x4 average-pooled frames.

    Each frame's distance is ||pooled diff||_2 / sqrt(pooled pixel count),
    so a uniform offset of c gives exactly c.
    """
    pred_frames = np.asarray(pred_frames, dtype=np.float64)
    target_frames = np.asarray(target_frames, dtype=np.float64)
    if pred_frames.shape != target_frames.shape or pred_frames.ndim != 3:
        raise ValueError("need two equal-shape stacks of frames (n, 16, 16)")
    if pred_frames.shape[0] == 0:
        raise ValueError("need at least one frame")
    dists = []
    for p, t in zip(pred_frames, target_frames):
        diff = pool_frame(p) - pool_frame(t)
        dists.append(np.linalg.norm(diff) / math.sqrt(diff.size))
    return float(np.mean(dists))
