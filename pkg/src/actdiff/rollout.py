"""Autoregressive frame rollouts driven by the reverse diffusion sampler.

Frame k+1 is sampled conditioned on (frame k, action k); only the episode's
first frame is ever taken from ground truth, everything after it is the
model's own prediction. Randomness for frame k comes from a generator
seeded by (rollout seed, global frame index), so different control variants
sharing a rollout seed consume identical noise streams.

Long rollouts chain fixed-length passes: the pass boundary only matters to
truncation when the initial-latent limit derives from the per-pass mean
action norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffusion import Condition, DiffusionSchedule, sample
from .guidance import GuidanceConfig
from .truncation import TruncationConfig, action_norm_for_limit, init_latent_from_norm
from .validation import FRAME_SIZE
from .world import Episode

LATENT_DIM = FRAME_SIZE * FRAME_SIZE


@dataclass(frozen=True)
class SamplingControls:
    """Every inference-time knob for one rollout variant."""

    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    truncation: TruncationConfig = field(default_factory=TruncationConfig)
    sampler: str = "deterministic"
    clip_x0: float | None = 3.0


def rollout_seed(run_seed: int, episode_index: int) -> int:
    """Derive one episode's rollout seed from a run-level seed.

    The variant being evaluated is deliberately not part of the derivation,
    so paired variants share noise streams.
    """
    ss = np.random.SeedSequence([int(run_seed), int(episode_index)])
    return int(ss.generate_state(1, np.uint64)[0])


def frame_rng(seed: int, frame_index: int) -> np.random.Generator:
    """Generator for one frame, independent of other frames in the rollout."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(frame_index)]))


def _generate_segment(
    denoiser,
    reference: np.ndarray,
    actions: np.ndarray,
    schedule: DiffusionSchedule,
    controls: SamplingControls,
    seed: int,
    frame_offset: int,
    out: np.ndarray,
) -> np.ndarray:
    """Fill ``out`` with predictions for one pass; returns its last frame."""
    segment_norm = float(np.linalg.norm(actions, axis=1).mean())
    prev = reference
    for k, action in enumerate(actions):
        rng = frame_rng(seed, frame_offset + k)
        norm = action_norm_for_limit(action, segment_norm, controls.truncation)
        z0 = init_latent_from_norm(norm, (LATENT_DIM,), controls.truncation, rng)
        latent = sample(
            denoiser,
            Condition(action=action, prev_frame=prev),
            z0,
            schedule,
            guidance=controls.guidance,
            rng=rng,
            sampler=controls.sampler,
            clip_x0=controls.clip_x0,
        )
        prev = np.clip(latent, 0.0, 1.0).reshape(FRAME_SIZE, FRAME_SIZE)
        out[frame_offset + k] = prev
    return prev


def rollout_short(
    denoiser,
    episode: Episode,
    schedule: DiffusionSchedule,
    controls: SamplingControls,
    seed: int,
) -> np.ndarray:
    """Predict every post-reference frame of one episode.

    Returns an array of shape (n_frames - 1, 16, 16) aligned with
    ``episode.frames[1:]``.
    """
    out = np.empty((episode.n_frames - 1, FRAME_SIZE, FRAME_SIZE))
    _generate_segment(
        denoiser, episode.frames[0], episode.actions, schedule, controls, seed, 0, out
    )
    return out


def rollout_long(
    denoiser,
    episode: Episode,
    schedule: DiffusionSchedule,
    controls: SamplingControls,
    seed: int,
    passes: int,
) -> np.ndarray:
    """Chain several equal-length passes over one long episode.

    Pass k starts from the final predicted frame of pass k-1 (pass 0 starts
    from the ground-truth reference), so with one pass this is exactly the
    short rollout.
    """
    if passes < 1:
        raise ValueError("passes must be >= 1")
    n_actions = episode.actions.shape[0]
    if n_actions % passes != 0:
        raise ValueError(f"{n_actions} actions do not split into {passes} equal passes")
    per_pass = n_actions // passes
    out = np.empty((n_actions, FRAME_SIZE, FRAME_SIZE))
    reference = episode.frames[0]
    for p in range(passes):
        lo = p * per_pass
        reference = _generate_segment(
            denoiser,
            reference,
            episode.actions[lo : lo + per_pass],
            schedule,
            controls,
            seed,
            lo,
            out,
        )
    return out
