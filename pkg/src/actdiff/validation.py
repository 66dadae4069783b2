"""Input validation helpers.

Small checked conversions in the spirit of sklearn's ``check_array``:
every public entry point funnels raw inputs through one of these so the
numerical code below can assume clean float64 arrays.
"""

from __future__ import annotations

import numpy as np

FRAME_SIZE = 16
ACTION_DIM = 2
POSITION_LOW = 0.0
POSITION_HIGH = 15.0


def check_action(a, dim: int | None = None) -> np.ndarray:
    """Validate an action vector and return it as a float64 1-D array.

    Raises ValueError on empty, non-1-D, non-finite, or wrong-dimension input.
    """
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"action must be a nonempty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("action contains non-finite entries")
    if dim is not None and arr.size != dim:
        raise ValueError(f"action has dimension {arr.size}, expected {dim}")
    return arr


def check_frame(frame) -> np.ndarray:
    """Validate a 16x16 frame with pixels in [0, 1]; returns float64 array."""
    arr = np.asarray(frame, dtype=np.float64)
    if arr.shape != (FRAME_SIZE, FRAME_SIZE):
        raise ValueError(f"frame must be {FRAME_SIZE}x{FRAME_SIZE}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("frame contains non-finite pixels")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("frame pixels must lie in [0, 1]")
    return arr


def check_latent(x, like: np.ndarray | None = None) -> np.ndarray:
    """Validate a latent vector (or batch of latents) as float64.

    Accepts shape ``(d,)`` or ``(batch, d)``. When ``like`` is given, the
    trailing dimension must match.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim not in (1, 2) or arr.shape[-1] < 1:
        raise ValueError(f"latent must have shape (d,) or (batch, d), got {arr.shape}")
    if like is not None and arr.shape[-1] != np.shape(like)[-1]:
        raise ValueError(
            f"latent dimension {arr.shape[-1]} does not match expected {np.shape(like)[-1]}"
        )
    return arr


def check_position(p) -> np.ndarray:
    """Validate a 2-D position inside the pixel grid [0, 15]^2."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.shape != (2,):
        raise ValueError(f"position must be a 2-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("position contains non-finite entries")
    if arr.min() < POSITION_LOW or arr.max() > POSITION_HIGH:
        raise ValueError(f"position {arr} outside [{POSITION_LOW}, {POSITION_HIGH}]^2")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "arrays") -> None:
    """Raise ValueError unless the two arrays have identical shapes."""
    if np.shape(a) != np.shape(b):
        raise ValueError(f"{what} must have identical shapes: {np.shape(a)} vs {np.shape(b)}")


def check_step_index(t: int, total: int) -> int:
    """Validate a 1-based noise-level index against the schedule length."""
    t = int(t)
    if not 1 <= t <= total:
        raise ValueError(f"step index {t} outside [1, {total}]")
    return t


def as_rng(seed_or_rng) -> np.random.Generator:
    """Coerce a seed, SeedSequence, or Generator into a Generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)
