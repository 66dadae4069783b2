"""Toy pixel world: a Gaussian blob agent on a 16x16 grid.

State is a continuous position p in [0, 15]^2 stored as (x, y). An action
a in [-3, 3]^2 moves the agent to clamp(p + a). Frames render the blob as
``exp(-((i - y)^2 + (j - x)^2) / (2 sigma_blob^2))`` at pixel (row i, col j),
so intensity peaks at 1.0 when the center sits on a pixel.

Datasets are lists of fixed-length episodes serialized to a little-endian
binary file: a header (magic, version, counts, dims, seed), per-episode
seeds, then flat float32 frame, action, and position payloads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import DatasetError
from .validation import (
    ACTION_DIM,
    FRAME_SIZE,
    POSITION_HIGH,
    POSITION_LOW,
    check_action,
    check_position,
)

BLOB_SIGMA = 1.5
ACTION_LOW = -3.0
ACTION_HIGH = 3.0
INIT_POSITION_LOW = 3.0
INIT_POSITION_HIGH = 12.0
NOISE_ACTION_PROB = 0.3
NOISE_ACTION_STD = 0.1
DEFAULT_EPISODE_STEPS = 15

DATASET_MAGIC = b"TWDS"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4sIIIIIIq")

_ROWS = np.arange(FRAME_SIZE, dtype=np.float64)[:, None]
_COLS = np.arange(FRAME_SIZE, dtype=np.float64)[None, :]


def render_frame(position, blob_sigma: float = BLOB_SIGMA) -> np.ndarray:
    """Render the blob at a continuous (x, y) position to a 16x16 frame."""
    p = check_position(position)
    d2 = (_ROWS - p[1]) ** 2 + (_COLS - p[0]) ** 2
    return np.exp(-d2 / (2.0 * blob_sigma**2))


def step_dynamics(position, action) -> np.ndarray:
    """Move the agent by one action, clamped to the grid."""
    p = check_position(position)
    a = check_action(action, dim=ACTION_DIM)
    return np.clip(p + a, POSITION_LOW, POSITION_HIGH)


@dataclass(frozen=True)
class Episode:
    """One fixed-length trajectory: n frames, n-1 actions, n positions."""

    frames: np.ndarray
    actions: np.ndarray
    positions: np.ndarray
    seed: int

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        actions = np.asarray(self.actions, dtype=np.float64)
        positions = np.asarray(self.positions, dtype=np.float64)
        n = frames.shape[0]
        if frames.shape != (n, FRAME_SIZE, FRAME_SIZE) or n < 2:
            raise ValueError("frames must have shape (n, 16, 16) with n >= 2")
        if actions.shape != (n - 1, ACTION_DIM):
            raise ValueError("actions must have shape (n - 1, 2)")
        if positions.shape != (n, ACTION_DIM):
            raise ValueError("positions must have shape (n, 2)")
        for name, arr in (("frames", frames), ("actions", actions), ("positions", positions)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "positions", positions)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def sample_action(rng: np.random.Generator) -> np.ndarray:
    """Draw one action from the small-noise/uniform mixture, clamped."""
    if rng.uniform() < NOISE_ACTION_PROB:
        a = rng.normal(0.0, NOISE_ACTION_STD, ACTION_DIM)
    else:
        a = rng.uniform(ACTION_LOW, ACTION_HIGH, ACTION_DIM)
    return np.clip(a, ACTION_LOW, ACTION_HIGH)


def generate_episode(seed: int, n_steps: int = DEFAULT_EPISODE_STEPS) -> Episode:
    """Roll the scripted dynamics for n_steps actions from one seed."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    rng = np.random.default_rng(seed)
    positions = np.empty((n_steps + 1, ACTION_DIM))
    actions = np.empty((n_steps, ACTION_DIM))
    positions[0] = rng.uniform(INIT_POSITION_LOW, INIT_POSITION_HIGH, ACTION_DIM)
    for k in range(n_steps):
        actions[k] = sample_action(rng)
        positions[k + 1] = step_dynamics(positions[k], actions[k])
    frames = np.stack([render_frame(p) for p in positions])
    return Episode(frames=frames, actions=actions, positions=positions, seed=seed)


def episode_seed(dataset_seed: int, index: int) -> int:
    """Derive the per-episode generator seed for one dataset slot."""
    ss = np.random.SeedSequence([int(dataset_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def generate_dataset(
    n_episodes: int, seed: int, n_steps: int = DEFAULT_EPISODE_STEPS
) -> list[Episode]:
    """Generate episodes deterministically from (seed, episode index)."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    return [generate_episode(episode_seed(seed, i), n_steps) for i in range(n_episodes)]


def mean_action_norm(episodes: list[Episode]) -> float:
    """Mean Euclidean action norm over every step of every episode."""
    norms = np.concatenate([np.linalg.norm(ep.actions, axis=1) for ep in episodes])
    return float(norms.mean())


def save_dataset(path, episodes: list[Episode], seed: int = 0) -> None:
    """Write episodes to the binary dataset format (float32 payload)."""
    if not episodes:
        raise DatasetError("cannot save an empty dataset")
    n_frames = episodes[0].n_frames
    if any(ep.n_frames != n_frames for ep in episodes):
        raise DatasetError("all episodes in a dataset must have the same length")
    header = _HEADER.pack(
        DATASET_MAGIC,
        DATASET_VERSION,
        len(episodes),
        n_frames,
        FRAME_SIZE,
        FRAME_SIZE,
        ACTION_DIM,
        int(seed),
    )
    seeds = np.array([ep.seed for ep in episodes], dtype="<u8")
    frames = np.stack([ep.frames for ep in episodes]).astype("<f4")
    actions = np.stack([ep.actions for ep in episodes]).astype("<f4")
    positions = np.stack([ep.positions for ep in episodes]).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(seeds.tobytes())
        fh.write(frames.tobytes())
        fh.write(actions.tobytes())
        fh.write(positions.tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DatasetError(f"dataset file truncated while reading {what}")
    return buf


def load_dataset(path) -> list[Episode]:
    """Read a dataset file back into float64 episodes."""
    with open(path, "rb") as fh:
        magic, version, n_episodes, n_frames, h, w, a_dim, _seed = _HEADER.unpack(
            _read_exact(fh, _HEADER.size, "header")
        )
        if magic != DATASET_MAGIC:
            raise DatasetError("not a dataset file (bad magic)")
        if version != DATASET_VERSION:
            raise DatasetError(f"unsupported dataset version {version}")
        if (h, w, a_dim) != (FRAME_SIZE, FRAME_SIZE, ACTION_DIM):
            raise DatasetError(f"unsupported dataset dims {(h, w, a_dim)}")
        if n_episodes < 1 or n_frames < 2:
            raise DatasetError("dataset header has invalid counts")
        seeds = np.frombuffer(_read_exact(fh, 8 * n_episodes, "seeds"), dtype="<u8")
        frames = np.frombuffer(
            _read_exact(fh, 4 * n_episodes * n_frames * h * w, "frames"), dtype="<f4"
        ).reshape(n_episodes, n_frames, h, w)
        actions = np.frombuffer(
            _read_exact(fh, 4 * n_episodes * (n_frames - 1) * a_dim, "actions"), dtype="<f4"
        ).reshape(n_episodes, n_frames - 1, a_dim)
        positions = np.frombuffer(
            _read_exact(fh, 4 * n_episodes * n_frames * a_dim, "positions"), dtype="<f4"
        ).reshape(n_episodes, n_frames, a_dim)
        if fh.read(1):
            raise DatasetError("dataset file has trailing bytes")
    return [
        Episode(
            frames=frames[i].astype(np.float64),
            actions=actions[i].astype(np.float64),
            positions=positions[i].astype(np.float64),
            seed=int(seeds[i]),
        )
        for i in range(n_episodes)
    ]


def dataset_seed_of(path) -> int:
    """Read just the dataset-level seed recorded in the header."""
    with open(path, "rb") as fh:
        magic, version, *_rest, seed = _HEADER.unpack(_read_exact(fh, _HEADER.size, "header"))
    if magic != DATASET_MAGIC or version != DATASET_VERSION:
        raise DatasetError("not a readable dataset file")
    return int(seed)
