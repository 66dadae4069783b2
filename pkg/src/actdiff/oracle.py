"""Closed-form denoiser for a linear-Gaussian world.

The world draws clean latents from ``x0 | a ~ N(W a, sigma0^2 I)``. After
forward noising to level t, the marginal is
``x_t | a ~ N(sqrt(ab_t) W a, (ab_t sigma0^2 + 1 - ab_t) I)``, so the
conditional expectation of the injected noise is available exactly:

    eps*(x_t, t, a) = sqrt(1 - ab_t) (x_t - sqrt(ab_t) W a) / (ab_t sigma0^2 + 1 - ab_t)

which also equals ``-sqrt(1 - ab_t)`` times the score of the marginal.
This makes the guidance algebra exactly checkable: with the conditional
anchor, combining eps*(a) and eps*(-a) with weight w is identical to
eps* evaluated at the amplified action (1 + 2w) a.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diffusion import Condition, DiffusionSchedule
from .guidance import guided_epsilon
from .validation import check_action

DEFAULT_SIGMA0 = 0.3


def _default_mean_map() -> np.ndarray:
    return np.tile(np.array([[1.0, 0.5], [-0.5, 2.0]]), (2, 1))


@dataclass(frozen=True)
class GaussianWorld:
    """Conditional-mean map and noise level of the linear-Gaussian world."""

    mean_map: np.ndarray = field(default_factory=_default_mean_map)
    sigma0: float = DEFAULT_SIGMA0

    def __post_init__(self):
        w = np.asarray(self.mean_map, dtype=np.float64)
        if w.ndim != 2 or not np.all(np.isfinite(w)):
            raise ValueError("mean_map must be a finite 2-D matrix")
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        object.__setattr__(self, "mean_map", w)

    @property
    def latent_dim(self) -> int:
        return self.mean_map.shape[0]

    @property
    def action_dim(self) -> int:
        return self.mean_map.shape[1]

    def conditional_mean(self, a) -> np.ndarray:
        return self.mean_map @ check_action(a, dim=self.action_dim)


def marginal_variance(world: GaussianWorld, t: int, schedule: DiffusionSchedule) -> float:
    """Per-coordinate variance of the noised marginal at level t."""
    ab = schedule.alpha_bar_at(t)
    return ab * world.sigma0**2 + (1.0 - ab)


def exact_epsilon(
    x_t: np.ndarray, t: int, a, world: GaussianWorld, schedule: DiffusionSchedule
) -> np.ndarray:
    """Exact conditional noise prediction for the linear-Gaussian world."""
    x_t = np.asarray(x_t, dtype=np.float64)
    ab = schedule.alpha_bar_at(t)
    mean = math.sqrt(ab) * world.conditional_mean(a)
    return math.sqrt(1.0 - ab) * (x_t - mean) / marginal_variance(world, t, schedule)


def make_oracle_denoiser(world: GaussianWorld, schedule: DiffusionSchedule):
    """Adapt the closed form to the denoiser contract (prev_frame is unused)."""

    def denoiser(x_t, t, condition: Condition):
        return exact_epsilon(x_t, t, condition.action, world, schedule)

    return denoiser


def log_marginal_density(
    x_t: np.ndarray, t: int, a, world: GaussianWorld, schedule: DiffusionSchedule
) -> float:
    """Log density of the noised marginal x_t | a, up to its constant."""
    x_t = np.asarray(x_t, dtype=np.float64)
    ab = schedule.alpha_bar_at(t)
    mean = math.sqrt(ab) * world.conditional_mean(a)
    return -0.5 * float(np.sum((x_t - mean) ** 2)) / marginal_variance(world, t, schedule)


def finite_difference_epsilon(
    x_t: np.ndarray,
    t: int,
    a,
    world: GaussianWorld,
    schedule: DiffusionSchedule,
    h: float = 1e-5,
) -> np.ndarray:
    """Noise prediction from a central-difference score of the marginal.

    Independent route to exact_epsilon: eps = -sqrt(1 - ab_t) * score.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    score = np.empty_like(x_t)
    for i in range(x_t.size):
        bump = np.zeros_like(x_t)
        bump[i] = h
        up = log_marginal_density(x_t + bump, t, a, world, schedule)
        down = log_marginal_density(x_t - bump, t, a, world, schedule)
        score[i] = (up - down) / (2.0 * h)
    return -math.sqrt(1.0 - schedule.alpha_bar_at(t)) * score


def guided_equals_amplified_check(
    x_t: np.ndarray,
    t: int,
    a,
    weight: float,
    world: GaussianWorld,
    schedule: DiffusionSchedule,
    tol: float = 1e-9,
) -> tuple[bool, float]:
    """Verify the guided combination equals the amplified-action prediction.

    Uses the conditional-anchor parameterization. Returns (within_tol,
    max elementwise residual).
    """
    a = check_action(a, dim=world.action_dim)
    eps_pos = exact_epsilon(x_t, t, a, world, schedule)
    eps_neg = exact_epsilon(x_t, t, -a, world, schedule)
    combined = guided_epsilon(eps_pos, eps_neg, weight, "conditional_anchor")
    amplified = exact_epsilon(x_t, t, (1.0 + 2.0 * weight) * a, world, schedule)
    residual = float(np.max(np.abs(combined - amplified)))
    return residual <= tol, residual
