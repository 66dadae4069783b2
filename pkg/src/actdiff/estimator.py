"""Scikit-learn style front end to the train/rollout pipeline.

``fit`` trains the noise predictor on a list of episodes; ``predict`` runs
action-conditioned rollouts that regenerate every post-reference frame.
Constructor arguments are stored verbatim (get_params/set_params work as
usual) and validated when first used.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .denoiser import LAYER_DIMS, TrainConfig, load_checkpoint, make_denoiser, train
from .diffusion import make_schedule
from .guidance import GuidanceConfig
from .metrics import psnr
from .rollout import SamplingControls, rollout_long, rollout_short, rollout_seed
from .truncation import TruncationConfig
from .world import Episode, mean_action_norm


class DiffusionFramePredictor(BaseEstimator):
    """Action-conditioned next-frame generator with inference-time controls.

    guidance: "off", "action_scaled" (weight scales with the action norm,
    active only in the early, noisiest sampling steps), or "fixed".
    truncation: "off", "action_scaled" (initial-latent bound follows a
    sigmoid of the action norm), or "fixed".
    """

    def __init__(
        self,
        timesteps: int = 100,
        beta_start: float = 1e-4,
        beta_end: float = 0.02,
        train_steps: int = 20000,
        batch_size: int = 64,
        learning_rate: float = 1e-3,
        guidance: str = "off",
        guidance_scale: float = 1.0,
        fixed_guidance_weight: float = 1.0,
        guidance_parameterization: str = "conditional_anchor",
        guidance_active_fraction: float = 0.5,
        truncation: str = "off",
        truncation_min: float = 0.5,
        truncation_max: float = 1.5,
        fixed_truncation_limit: float = 1.0,
        truncation_norm_source: str = "episode_mean",
        sampler: str = "deterministic",
        clip_x0: float | None = 3.0,
        random_state: int = 0,
    ):
        self.timesteps = timesteps
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.train_steps = train_steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.guidance = guidance
        self.guidance_scale = guidance_scale
        self.fixed_guidance_weight = fixed_guidance_weight
        self.guidance_parameterization = guidance_parameterization
        self.guidance_active_fraction = guidance_active_fraction
        self.truncation = truncation
        self.truncation_min = truncation_min
        self.truncation_max = truncation_max
        self.fixed_truncation_limit = fixed_truncation_limit
        self.truncation_norm_source = truncation_norm_source
        self.sampler = sampler
        self.clip_x0 = clip_x0
        self.random_state = random_state

    @staticmethod
    def _check_episodes(X) -> list[Episode]:
        if isinstance(X, Episode):
            X = [X]
        episodes = list(X)
        if not episodes or not all(isinstance(ep, Episode) for ep in episodes):
            raise ValueError("X must be a nonempty sequence of Episode objects")
        return episodes

    def fit(self, X, y=None):
        """Train the noise predictor on episodes X (y is ignored)."""
        episodes = self._check_episodes(X)
        self.schedule_ = make_schedule(self.timesteps, self.beta_start, self.beta_end)
        cfg = TrainConfig(
            steps=self.train_steps,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.random_state,
        )
        self.params_, self.loss_history_ = train(episodes, self.schedule_, cfg)
        self.mean_action_norm_ = mean_action_norm(episodes)
        return self

    @classmethod
    def from_checkpoint(cls, path, mean_action_norm: float, **params):
        """Rebuild a fitted predictor from a saved checkpoint."""
        est = cls(**params)
        est.schedule_ = make_schedule(est.timesteps, est.beta_start, est.beta_end)
        est.params_ = load_checkpoint(path, expect_dims=LAYER_DIMS)
        est.loss_history_ = np.empty(0)
        est.mean_action_norm_ = float(mean_action_norm)
        return est

    def sampling_controls(self) -> SamplingControls:
        """Bundle the configured inference-time controls."""
        check_is_fitted(self, "mean_action_norm_")
        guidance = GuidanceConfig(
            mode=self.guidance,
            scale=self.guidance_scale,
            fixed_weight=self.fixed_guidance_weight,
            parameterization=self.guidance_parameterization,
            active_fraction=self.guidance_active_fraction,
        )
        truncation = TruncationConfig(
            mode=self.truncation,
            limit_min=self.truncation_min,
            limit_max=self.truncation_max,
            mean_action_norm=self.mean_action_norm_,
            fixed_limit=self.fixed_truncation_limit,
            norm_source=self.truncation_norm_source,
        )
        return SamplingControls(
            guidance=guidance,
            truncation=truncation,
            sampler=self.sampler,
            clip_x0=self.clip_x0,
        )

    def predict(self, X, seed: int | None = None, passes: int = 1):
        """Generate predicted frames for each episode in X.

        Returns a list of arrays shaped (n_frames - 1, 16, 16); passing a
        single Episode returns one array. ``passes > 1`` chains equal-length
        passes for long-horizon rollouts.
        """
        check_is_fitted(self, "params_")
        single = isinstance(X, Episode)
        episodes = self._check_episodes(X)
        controls = self.sampling_controls()
        denoiser = make_denoiser(self.params_, self.schedule_.timesteps)
        base = self.random_state if seed is None else seed
        outputs = []
        for i, ep in enumerate(episodes):
            ep_seed = rollout_seed(base, i)
            if passes == 1:
                outputs.append(rollout_short(denoiser, ep, self.schedule_, controls, ep_seed))
            else:
                outputs.append(
                    rollout_long(denoiser, ep, self.schedule_, controls, ep_seed, passes)
                )
        return outputs[0] if single else outputs

    def score(self, X, y=None, seed: int | None = None) -> float:
        """Mean per-frame PSNR of predictions against ground truth."""
        episodes = self._check_episodes(X)
        predictions = self.predict(episodes, seed=seed)
        values = [
            psnr(pred, gt)
            for ep, frames in zip(episodes, predictions)
            for pred, gt in zip(frames, ep.frames[1:])
        ]
        return float(np.mean(values))
