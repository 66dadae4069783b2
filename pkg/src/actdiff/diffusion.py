"""Noise schedule, forward noising, and guided reverse sampling.

The denoiser contract is a pure callable ``(x_t, t, condition) -> eps_hat``
where ``t`` is the 1-based noise level (``t = T`` is the noisiest) and the
output has the same shape as ``x_t``. Latents may be single vectors
``(d,)`` or batches ``(batch, d)``; every update broadcasts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import NumericalFailure
from .guidance import GuidanceConfig, guidance_weight, guided_epsilon, negate_action
from .validation import as_rng, check_action, check_same_shape, check_step_index

SAMPLERS = ("ancestral", "deterministic")

DEFAULT_TIMESTEPS = 100
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True)
class DiffusionSchedule:
    """Linear-beta schedule tables; entry ``t-1`` belongs to noise level t."""

    timesteps: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def alpha_bar_at(self, t: int) -> float:
        """Cumulative retention at level t, with the t=0 convention of 1."""
        if t == 0:
            return 1.0
        return float(self.alpha_bar[check_step_index(t, self.timesteps) - 1])


@dataclass(frozen=True)
class Condition:
    """Conditioning bundle for one denoiser evaluation."""

    action: np.ndarray
    prev_frame: np.ndarray | None = None

    def negated(self) -> "Condition":
        return Condition(action=negate_action(self.action), prev_frame=self.prev_frame)


class CountingDenoiser:
    """Wraps a denoiser callable and counts evaluations."""

    def __init__(self, denoiser):
        self.denoiser = denoiser
        self.calls = 0

    def __call__(self, x_t, t, condition):
        self.calls += 1
        return self.denoiser(x_t, t, condition)


def make_schedule(
    timesteps: int = DEFAULT_TIMESTEPS,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> DiffusionSchedule:
    """Linear beta schedule with derived alpha and alpha_bar tables."""
    if timesteps < 2:
        raise ValueError("need at least 2 timesteps")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError("need 0 < beta_start <= beta_end < 1")
    beta = np.linspace(beta_start, beta_end, timesteps, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return DiffusionSchedule(timesteps=int(timesteps), beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def forward_noise(x0: np.ndarray, t: int, eps: np.ndarray, schedule: DiffusionSchedule) -> np.ndarray:
    """Noise a clean latent to level t: sqrt(ab_t) x0 + sqrt(1 - ab_t) eps."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    check_same_shape(x0, eps, "x0 and eps")
    ab = schedule.alpha_bar_at(check_step_index(t, schedule.timesteps))
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps


def _check_finite(arr: np.ndarray, step: int, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericalFailure(f"non-finite {what} during sampling", step=step)


def sample(
    denoiser,
    condition: Condition,
    z0: np.ndarray,
    schedule: DiffusionSchedule,
    guidance: GuidanceConfig | None = None,
    rng=None,
    sampler: str = "deterministic",
    clip_x0: float | None = 3.0,
) -> np.ndarray:
    """Run the reverse process from an initial latent and return the x0 estimate.

    Each step evaluates the denoiser on the positive condition and, only
    when the guidance weight is strictly positive, a second time on the
    negated-action condition; the two predictions are combined with
    ``guided_epsilon``. "deterministic" applies the eta=0 implicit update
    (the output is a pure function of ``z0`` and the condition);
    "ancestral" adds scheduled Gaussian noise from ``rng`` for t > 1.

    ``clip_x0`` bounds the predicted clean latent each step (stabilizer
    for learned denoisers); pass None to disable.
    """
    if guidance is None:
        guidance = GuidanceConfig(mode="off")
    if sampler not in SAMPLERS:
        raise ValueError(f"unknown sampler {sampler!r}, expected one of {SAMPLERS}")
    if sampler == "ancestral":
        if rng is None:
            raise ValueError("ancestral sampling requires an explicit rng")
        rng = as_rng(rng)

    action = check_action(condition.action)
    x = np.array(z0, dtype=np.float64)
    total = schedule.timesteps
    neg_condition = condition.negated()

    for t in range(total, 0, -1):
        weight = guidance_weight(action, t, total, guidance)
        eps_pos = np.asarray(denoiser(x, t, condition), dtype=np.float64)
        if weight > 0.0:
            eps_neg = np.asarray(denoiser(x, t, neg_condition), dtype=np.float64)
            eps_hat = guided_epsilon(eps_pos, eps_neg, weight, guidance.parameterization)
        else:
            eps_hat = eps_pos
        _check_finite(eps_hat, t, "noise prediction")

        ab_t = schedule.alpha_bar_at(t)
        ab_prev = schedule.alpha_bar_at(t - 1)
        sqrt_ab_t = math.sqrt(ab_t)
        sqrt_one_minus_ab_t = math.sqrt(1.0 - ab_t)

        x0_pred = (x - sqrt_one_minus_ab_t * eps_hat) / sqrt_ab_t
        if clip_x0 is not None:
            x0_pred = np.clip(x0_pred, -clip_x0, clip_x0)

        if sampler == "deterministic":
            # Re-derive eps from the (possibly clipped) clean estimate so the
            # implicit update stays consistent with it.
            eps_use = (x - sqrt_ab_t * x0_pred) / sqrt_one_minus_ab_t
            x = math.sqrt(ab_prev) * x0_pred + math.sqrt(1.0 - ab_prev) * eps_use
        else:
            beta_t = float(schedule.beta[t - 1])
            alpha_t = float(schedule.alpha[t - 1])
            mean = (
                math.sqrt(ab_prev) * beta_t * x0_pred
                + math.sqrt(alpha_t) * (1.0 - ab_prev) * x
            ) / (1.0 - ab_t)
            if t > 1:
                posterior_var = (1.0 - ab_prev) / (1.0 - ab_t) * beta_t
                x = mean + math.sqrt(posterior_var) * rng.standard_normal(x.shape)
            else:
                x = mean
        _check_finite(x, t, "latent")

    return x
