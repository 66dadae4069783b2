"""Action-scaled classifier-free guidance.

Instead of an unconditional denoiser, the reference prediction conditions
on the negated action, and the guidance weight is tied to the action
magnitude: ``weight = scale * ||a||_2`` while the current noise level is
in the active (early, high-noise) portion of sampling, and 0 afterwards.

Two combination parameterizations are supported:

* ``conditional_anchor``: ``eps_pos + w * (eps_pos - eps_neg)``, i.e. the
  conditional prediction is the anchor and ``w = 0`` disables guidance.
* ``negative_anchor``:    ``eps_neg + w * (eps_pos - eps_neg)``, i.e. the
  classic form where ``w = 1`` recovers the purely conditional prediction.

``conditional_anchor`` with weight ``w`` is identical to
``negative_anchor`` with weight ``w + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import check_action, check_same_shape, check_step_index

GUIDANCE_MODES = ("off", "action_scaled", "fixed")
PARAMETERIZATIONS = ("conditional_anchor", "negative_anchor")


@dataclass(frozen=True)
class GuidanceConfig:
    """Knobs for the guided noise combination.

    mode: "off" (no guidance), "action_scaled" (weight = scale * ||a||_2
        on active steps), or "fixed" (constant ``fixed_weight`` on all steps).
    scale: multiplier on the action norm in action_scaled mode.
    fixed_weight: constant weight used in fixed mode.
    parameterization: which prediction anchors the combination.
    active_fraction: cutoff for action_scaled mode as a fraction of total
        noise levels: the weight is nonzero only while
        ``t > total_steps * active_fraction``, i.e. during the noisiest
        steps (with 0.5, the early half of sampling).
    """

    mode: str = "off"
    scale: float = 1.0
    fixed_weight: float = 1.0
    parameterization: str = "conditional_anchor"
    active_fraction: float = 0.5

    def __post_init__(self):
        if self.mode not in GUIDANCE_MODES:
            raise ValueError(f"unknown guidance mode {self.mode!r}, expected one of {GUIDANCE_MODES}")
        if self.parameterization not in PARAMETERIZATIONS:
            raise ValueError(
                f"unknown parameterization {self.parameterization!r}, expected one of {PARAMETERIZATIONS}"
            )
        if self.scale < 0:
            raise ValueError("scale must be nonnegative")
        if self.fixed_weight < 0:
            raise ValueError("fixed_weight must be nonnegative")
        if not 0.0 < self.active_fraction <= 1.0:
            raise ValueError("active_fraction must lie in (0, 1]")


def action_norm(a) -> float:
    """Euclidean norm of an action vector; zero iff the action is zero."""
    return float(np.linalg.norm(check_action(a)))


def negate_action(a) -> np.ndarray:
    """Entrywise negation of an action vector (its own inverse)."""
    return -check_action(a)


def guidance_weight(a, t: int, total_steps: int, cfg: GuidanceConfig) -> float:
    """Guidance weight at noise level ``t`` of ``total_steps``.

    ``t = total_steps`` is the first (noisiest) sampling step, so the
    ``t > total_steps * active_fraction`` indicator activates guidance
    during the early, low-frequency half of sampling.
    """
    t = check_step_index(t, total_steps)
    if cfg.mode == "off":
        return 0.0
    if cfg.mode == "fixed":
        return float(cfg.fixed_weight)
    if t > total_steps * cfg.active_fraction:
        return cfg.scale * action_norm(a)
    return 0.0


def guided_epsilon(
    eps_pos: np.ndarray,
    eps_neg: np.ndarray,
    weight: float,
    parameterization: str = "conditional_anchor",
) -> np.ndarray:
    """Combine positive- and negative-condition noise predictions.

    Both inputs must have identical shapes; the result has the same shape.
    """
    eps_pos = np.asarray(eps_pos, dtype=np.float64)
    eps_neg = np.asarray(eps_neg, dtype=np.float64)
    check_same_shape(eps_pos, eps_neg, "eps_pos and eps_neg")
    if not np.isfinite(weight):
        raise ValueError("guidance weight must be finite")
    if parameterization == "conditional_anchor":
        return eps_pos + weight * (eps_pos - eps_neg)
    if parameterization == "negative_anchor":
        return eps_neg + weight * (eps_pos - eps_neg)
    raise ValueError(f"unknown parameterization {parameterization!r}")
