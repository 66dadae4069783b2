"""Toy world rendering, dynamics, generation, and dataset files."""

from __future__ import annotations

import math

import numpy as np
import pytest

from actdiff.exceptions import DatasetError
from actdiff.world import (
    Episode,
    dataset_seed_of,
    episode_seed,
    generate_dataset,
    generate_episode,
    load_dataset,
    mean_action_norm,
    render_frame,
    save_dataset,
    step_dynamics,
)

BLOB_SUM_CENTER = 14.13716170169692  # render_frame((8, 8)).sum(), frozen
MEAN_NORM_SEED42_200 = 1.6490961693768549  # mean_action_norm, 200 episodes, frozen


def test_render_center_peak_and_frozen_sum():
    frame = render_frame((8.0, 8.0))
    assert frame.shape == (16, 16)
    assert frame[8, 8] == 1.0
    assert frame.sum() == pytest.approx(BLOB_SUM_CENTER, abs=1e-12)
    # independent double-loop evaluation of the same kernel
    ref = 0.0
    for i in range(16):
        for j in range(16):
            ref += math.exp(-((i - 8.0) ** 2 + (j - 8.0) ** 2) / (2 * 1.5**2))
    assert frame.sum() == pytest.approx(ref, abs=1e-12)


def test_render_position_is_x_then_y():
    frame = render_frame((2.0, 12.0))
    assert np.unravel_index(np.argmax(frame), frame.shape) == (12, 2)


def test_render_subpixel_center_is_symmetric():
    frame = render_frame((3.5, 8.0))
    assert frame[8, 3] == pytest.approx(frame[8, 4], abs=1e-15)
    assert frame[8, 3] == pytest.approx(math.exp(-0.25 / 4.5), abs=1e-12)
    assert frame.max() < 1.0


def test_step_dynamics_moves_and_clamps():
    np.testing.assert_allclose(step_dynamics((5.0, 5.0), (1.5, -2.0)), [6.5, 3.0])
    np.testing.assert_allclose(step_dynamics((0.5, 15.0), (-3.0, 3.0)), [0.0, 15.0])
    np.testing.assert_allclose(step_dynamics((14.0, 1.0), (3.0, -3.0)), [15.0, 0.0])


def test_generate_episode_is_deterministic_and_consistent():
    ep1 = generate_episode(12345)
    ep2 = generate_episode(12345)
    assert np.array_equal(ep1.frames, ep2.frames)
    assert np.array_equal(ep1.actions, ep2.actions)
    assert ep1.n_frames == 16
    assert ep1.actions.shape == (15, 2)
    # every frame renders its position, every position follows the dynamics
    for k in range(ep1.n_frames):
        np.testing.assert_array_equal(ep1.frames[k], render_frame(ep1.positions[k]))
    for k in range(15):
        np.testing.assert_allclose(
            ep1.positions[k + 1], step_dynamics(ep1.positions[k], ep1.actions[k])
        )
    assert np.all(ep1.positions[0] >= 3.0) and np.all(ep1.positions[0] <= 12.0)
    assert np.all(np.abs(ep1.actions) <= 3.0)


def test_generate_dataset_per_episode_seeds():
    eps = generate_dataset(4, seed=7)
    assert len(eps) == 4
    assert len({ep.seed for ep in eps}) == 4
    assert eps[2].seed == episode_seed(7, 2)
    again = generate_dataset(4, seed=7)
    for a, b in zip(eps, again):
        assert np.array_equal(a.frames, b.frames)
    other = generate_dataset(4, seed=8)
    assert not np.array_equal(eps[0].frames, other[0].frames)


def test_action_mixture_small_action_fraction():
    eps = generate_dataset(700, seed=123)
    norms = np.concatenate([np.linalg.norm(ep.actions, axis=1) for ep in eps])
    assert norms.size == 700 * 15
    small = float((norms < 0.3).mean())
    assert abs(small - 0.3) < 0.02


def test_mean_action_norm_frozen_and_brute_force():
    eps = generate_dataset(200, seed=42)
    mu = mean_action_norm(eps)
    assert mu == pytest.approx(MEAN_NORM_SEED42_200, abs=1e-12)
    total, count = 0.0, 0
    for ep in eps:
        for ax, ay in ep.actions:
            total += math.hypot(ax, ay)
            count += 1
    assert mu == pytest.approx(total / count, abs=1e-12)


def test_save_load_round_trip(tmp_path):
    eps = generate_dataset(3, seed=5)
    path = tmp_path / "data.bin"
    save_dataset(path, eps, seed=5)
    loaded = load_dataset(path)
    assert len(loaded) == 3
    assert dataset_seed_of(path) == 5
    for orig, back in zip(eps, loaded):
        assert back.seed == orig.seed
        np.testing.assert_array_equal(back.frames, orig.frames.astype(np.float32))
        np.testing.assert_array_equal(back.actions, orig.actions.astype(np.float32))
        np.testing.assert_array_equal(back.positions, orig.positions.astype(np.float32))
    # saving what was loaded reproduces the file byte for byte
    path2 = tmp_path / "again.bin"
    save_dataset(path2, loaded, seed=5)
    assert path.read_bytes() == path2.read_bytes()


def test_dataset_corruption_errors(tmp_path):
    eps = generate_dataset(2, seed=1)
    path = tmp_path / "data.bin"
    save_dataset(path, eps, seed=1)
    blob = bytearray(path.read_bytes())

    bad_magic = tmp_path / "magic.bin"
    bad_magic.write_bytes(b"XXXX" + bytes(blob[4:]))
    with pytest.raises(DatasetError, match="magic"):
        load_dataset(bad_magic)

    truncated = tmp_path / "short.bin"
    truncated.write_bytes(bytes(blob[: len(blob) // 2]))
    with pytest.raises(DatasetError, match="truncated"):
        load_dataset(truncated)

    trailing = tmp_path / "trailing.bin"
    trailing.write_bytes(bytes(blob) + b"\0")
    with pytest.raises(DatasetError, match="trailing"):
        load_dataset(trailing)

    versioned = bytearray(blob)
    versioned[4] = 99
    bad_version = tmp_path / "version.bin"
    bad_version.write_bytes(bytes(versioned))
    with pytest.raises(DatasetError, match="version"):
        load_dataset(bad_version)


def test_save_dataset_rejects_bad_inputs(tmp_path):
    with pytest.raises(DatasetError):
        save_dataset(tmp_path / "x.bin", [])
    short = generate_episode(0, n_steps=5)
    long = generate_episode(1, n_steps=7)
    with pytest.raises(DatasetError, match="same length"):
        save_dataset(tmp_path / "x.bin", [short, long])


def test_episode_validation():
    ep = generate_episode(3)
    with pytest.raises(ValueError):
        Episode(frames=ep.frames, actions=ep.actions[:-1], positions=ep.positions, seed=0)
    with pytest.raises(ValueError):
        Episode(frames=ep.frames[:, :8, :], actions=ep.actions, positions=ep.positions, seed=0)
    bad = ep.actions.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        Episode(frames=ep.frames, actions=bad, positions=ep.positions, seed=0)
