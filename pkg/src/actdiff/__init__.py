"""Action-conditioned frame diffusion with training-free inference controls.

Two controls steer a trained (or exact) noise predictor at sampling time:
guidance that contrasts predictions under the action and its negation with
a weight scaled by the action magnitude, and initial-latent truncation
whose bound follows the action magnitude. The package bundles a toy pixel
world, an exactly solvable linear-Gaussian world for verification, a small
trainable predictor, rollout evaluation, and a CLI harness.
"""

from .config import ArtifactPaths, ExperimentConfig, parse_config, parse_config_text, write_config
from .denoiser import (
    MLPParams,
    TrainConfig,
    load_checkpoint,
    make_denoiser,
    save_checkpoint,
    train,
)
from .diffusion import (
    Condition,
    CountingDenoiser,
    DiffusionSchedule,
    forward_noise,
    make_schedule,
    sample,
)
from .estimator import DiffusionFramePredictor
from .exceptions import (
    ActdiffError,
    CheckpointError,
    ConfigError,
    DatasetError,
    NumericalFailure,
    TrainingDivergence,
)
from .guidance import GuidanceConfig, guidance_weight, guided_epsilon
from .metrics import latent_l2, psnr, ssim
from .oracle import GaussianWorld, exact_epsilon, guided_equals_amplified_check
from .rollout import SamplingControls, rollout_long, rollout_seed, rollout_short
from .truncation import (
    TruncationConfig,
    init_latent,
    sample_truncated_normal,
    truncation_limit,
    truncated_normal_variance,
)
from .world import (
    Episode,
    generate_dataset,
    load_dataset,
    mean_action_norm,
    render_frame,
    save_dataset,
    step_dynamics,
)

__version__ = "0.1.0"

__all__ = [
    "ArtifactPaths",
    "ActdiffError",
    "CheckpointError",
    "Condition",
    "ConfigError",
    "CountingDenoiser",
    "DatasetError",
    "DiffusionFramePredictor",
    "DiffusionSchedule",
    "Episode",
    "ExperimentConfig",
    "GaussianWorld",
    "GuidanceConfig",
    "MLPParams",
    "NumericalFailure",
    "SamplingControls",
    "TrainConfig",
    "TrainingDivergence",
    "TruncationConfig",
    "exact_epsilon",
    "forward_noise",
    "generate_dataset",
    "guidance_weight",
    "guided_epsilon",
    "guided_equals_amplified_check",
    "init_latent",
    "latent_l2",
    "load_checkpoint",
    "load_dataset",
    "make_denoiser",
    "make_schedule",
    "mean_action_norm",
    "parse_config",
    "parse_config_text",
    "psnr",
    "render_frame",
    "rollout_long",
    "rollout_seed",
    "rollout_short",
    "sample",
    "sample_truncated_normal",
    "save_checkpoint",
    "save_dataset",
    "ssim",
    "step_dynamics",
    "train",
    "truncation_limit",
    "truncated_normal_variance",
    "write_config",
]
