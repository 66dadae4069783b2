"""Shared fixtures: a small trained model reused by the fast tests."""

from __future__ import annotations

import pytest

from actdiff.config import ExperimentConfig
from actdiff.denoiser import TrainConfig, train
from actdiff.diffusion import make_schedule
from actdiff.world import generate_dataset, mean_action_norm


@pytest.fixture(scope="session")
def tiny_cfg():
    return ExperimentConfig(
        timesteps=10,
        train_episodes=6,
        val_episodes=2,
        test_episodes=3,
        long_test_episodes=2,
        train_steps=40,
        batch_size=16,
    )


@pytest.fixture(scope="session")
def tiny_setup(tiny_cfg):
    """Episodes plus a briefly trained model on a 10-step schedule."""
    episodes = generate_dataset(tiny_cfg.train_episodes, tiny_cfg.seed, tiny_cfg.episode_steps)
    schedule = make_schedule(tiny_cfg.timesteps, tiny_cfg.beta_start, tiny_cfg.beta_end)
    params, losses = train(
        episodes,
        schedule,
        TrainConfig(steps=tiny_cfg.train_steps, batch_size=tiny_cfg.batch_size, seed=tiny_cfg.seed),
    )
    return {
        "cfg": tiny_cfg,
        "episodes": episodes,
        "schedule": schedule,
        "params": params,
        "losses": losses,
        "mu": mean_action_norm(episodes),
    }
