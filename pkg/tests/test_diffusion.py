"""Schedule tables, forward noising, and reverse samplers.

The sampler tests exploit that with the linear-Gaussian oracle denoiser
(and clipping disabled) every reverse update is affine, so the exact mean
and variance of the output can be computed by a scalar recursion that is
independent of the sampler implementation.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from actdiff.diffusion import (
    Condition,
    CountingDenoiser,
    forward_noise,
    make_schedule,
    sample,
)
from actdiff.exceptions import NumericalFailure
from actdiff.guidance import GuidanceConfig
from actdiff.oracle import GaussianWorld, make_oracle_denoiser

ALPHA_BAR_100 = 0.3635632480554922  # default schedule, frozen


def test_schedule_matches_independent_product():
    sched = make_schedule()
    for t in (1, 2, 37, 99, 100):
        prod = 1.0
        for s in range(t):
            prod *= 1.0 - float(sched.beta[s])
        assert sched.alpha_bar_at(t) == pytest.approx(prod, rel=1e-14)


def test_schedule_endpoints_and_frozen_value():
    sched = make_schedule()
    assert sched.beta[0] == pytest.approx(1e-4)
    assert sched.beta[-1] == pytest.approx(0.02)
    assert sched.alpha_bar_at(100) == pytest.approx(ALPHA_BAR_100, abs=1e-15)
    assert sched.alpha_bar_at(0) == 1.0


def test_schedule_validation():
    with pytest.raises(ValueError):
        make_schedule(timesteps=1)
    with pytest.raises(ValueError):
        make_schedule(beta_start=0.0)
    with pytest.raises(ValueError):
        make_schedule(beta_start=0.3, beta_end=0.2)
    with pytest.raises(ValueError):
        make_schedule(beta_end=1.0)


def test_forward_noise_closed_form():
    sched = make_schedule(timesteps=10)
    x0 = np.ones(4)
    ab = sched.alpha_bar_at(7)
    got = forward_noise(x0, 7, np.zeros(4), sched)
    np.testing.assert_allclose(got, math.sqrt(ab) * x0, atol=1e-15)
    got = forward_noise(np.zeros(4), 7, x0, sched)
    np.testing.assert_allclose(got, math.sqrt(1.0 - ab) * x0, atol=1e-15)


def test_forward_noise_validation():
    sched = make_schedule(timesteps=10)
    with pytest.raises(ValueError):
        forward_noise(np.zeros(4), 7, np.zeros(5), sched)
    with pytest.raises(ValueError):
        forward_noise(np.zeros(4), 11, np.zeros(4), sched)


def _affine_moments(schedule, world, sampler):
    """Exact (mean coefficient, variance) of the output per coordinate.

    Starts from the true noised marginal at t = T and applies the affine
    form of each reverse update: x0_hat = k x + r m with
    k = sqrt(ab) s0^2 / v and r = (1 - ab) / v.
    """
    s0sq = world.sigma0**2
    ab_t = schedule.alpha_bar_at(schedule.timesteps)
    c = math.sqrt(ab_t)  # coefficient on the conditional mean m
    var = ab_t * s0sq + (1.0 - ab_t)
    for t in range(schedule.timesteps, 0, -1):
        ab = schedule.alpha_bar_at(t)
        ab_prev = schedule.alpha_bar_at(t - 1)
        v = ab * s0sq + (1.0 - ab)
        k = math.sqrt(ab) * s0sq / v
        r = (1.0 - ab) / v
        if sampler == "deterministic":
            a_coef = math.sqrt(ab_prev) - math.sqrt(1.0 - ab_prev) * math.sqrt(ab) / math.sqrt(1.0 - ab)
            b_coef = math.sqrt(1.0 - ab_prev) / math.sqrt(1.0 - ab)
            noise_var = 0.0
        else:
            beta = float(schedule.beta[t - 1])
            alpha = float(schedule.alpha[t - 1])
            a_coef = math.sqrt(ab_prev) * beta / (1.0 - ab)
            b_coef = math.sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab)
            noise_var = (1.0 - ab_prev) / (1.0 - ab) * beta if t > 1 else 0.0
        gain = a_coef * k + b_coef
        c = gain * c + a_coef * r
        var = gain**2 * var + noise_var
    return c, var


@pytest.mark.parametrize("sampler", ["deterministic", "ancestral"])
def test_sampler_moments_match_affine_recursion(sampler):
    world = GaussianWorld()
    sched = make_schedule()
    denoiser = make_oracle_denoiser(world, sched)
    a = np.array([1.2, -0.8])
    m = world.conditional_mean(a)
    c, var = _affine_moments(sched, world, sampler)

    n = 4000
    rng = np.random.default_rng(17)
    ab_t = sched.alpha_bar_at(sched.timesteps)
    v_t = ab_t * world.sigma0**2 + (1.0 - ab_t)
    z0 = math.sqrt(ab_t) * m + math.sqrt(v_t) * rng.standard_normal((n, 4))
    out = sample(
        denoiser, Condition(action=a), z0, sched,
        sampler=sampler, rng=np.random.default_rng(18), clip_x0=None,
    )
    sd = math.sqrt(var)
    mean_tol = 5.0 * sd / math.sqrt(n)
    var_tol = 5.0 * var * math.sqrt(2.0 / (n - 1))
    np.testing.assert_allclose(out.mean(axis=0), c * m, atol=mean_tol)
    np.testing.assert_allclose(out.var(axis=0), var, atol=var_tol)
    # the exact chain keeps nearly all of the conditional mean
    assert c == pytest.approx(1.0, abs=0.02)


def test_deterministic_sampler_is_affine():
    world = GaussianWorld()
    sched = make_schedule(timesteps=30)
    denoiser = make_oracle_denoiser(world, sched)
    cond = Condition(action=np.array([0.4, 0.9]))
    rng = np.random.default_rng(1)
    z1 = rng.standard_normal(4)
    z2 = rng.standard_normal(4)
    lam = 0.3
    lhs = sample(denoiser, cond, lam * z1 + (1 - lam) * z2, sched, clip_x0=None)
    rhs = lam * sample(denoiser, cond, z1, sched, clip_x0=None) + (1 - lam) * sample(
        denoiser, cond, z2, sched, clip_x0=None
    )
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_deterministic_sampler_is_reproducible_and_batched():
    world = GaussianWorld()
    sched = make_schedule(timesteps=25)
    denoiser = make_oracle_denoiser(world, sched)
    cond = Condition(action=np.array([1.0, -1.0]))
    z0 = np.random.default_rng(5).standard_normal((3, 4))
    batched = sample(denoiser, cond, z0, sched)
    again = sample(denoiser, cond, z0, sched)
    assert np.array_equal(batched, again)
    singles = np.stack([sample(denoiser, cond, z, sched) for z in z0])
    assert np.array_equal(batched, singles)


def test_ancestral_requires_rng_and_uses_it():
    world = GaussianWorld()
    sched = make_schedule(timesteps=10)
    denoiser = make_oracle_denoiser(world, sched)
    cond = Condition(action=np.array([0.5, 0.5]))
    z0 = np.zeros(4)
    with pytest.raises(ValueError):
        sample(denoiser, cond, z0, sched, sampler="ancestral")
    one = sample(denoiser, cond, z0, sched, sampler="ancestral", rng=np.random.default_rng(0))
    two = sample(denoiser, cond, z0, sched, sampler="ancestral", rng=np.random.default_rng(0))
    other = sample(denoiser, cond, z0, sched, sampler="ancestral", rng=np.random.default_rng(1))
    assert np.array_equal(one, two)
    assert not np.array_equal(one, other)


def test_unknown_sampler_rejected():
    world = GaussianWorld()
    sched = make_schedule(timesteps=10)
    denoiser = make_oracle_denoiser(world, sched)
    with pytest.raises(ValueError):
        sample(denoiser, Condition(action=np.zeros(2)), np.zeros(4), sched, sampler="heun")


def test_guidance_evaluation_cost_contract():
    world = GaussianWorld()
    sched = make_schedule(timesteps=100)
    cond = Condition(action=np.array([2.0, 1.0]))
    z0 = np.random.default_rng(2).standard_normal(4)

    counting = CountingDenoiser(make_oracle_denoiser(world, sched))
    sample(counting, cond, z0, sched, guidance=GuidanceConfig(mode="off"))
    assert counting.calls == 100

    counting = CountingDenoiser(make_oracle_denoiser(world, sched))
    sample(counting, cond, z0, sched, guidance=GuidanceConfig(mode="action_scaled"))
    assert counting.calls == 150

    counting = CountingDenoiser(make_oracle_denoiser(world, sched))
    sample(counting, cond, z0, sched, guidance=GuidanceConfig(mode="fixed", fixed_weight=1.0))
    assert counting.calls == 200


def test_zero_action_guided_run_is_bit_identical_to_off():
    world = GaussianWorld()
    sched = make_schedule(timesteps=50)
    denoiser = make_oracle_denoiser(world, sched)
    cond = Condition(action=np.zeros(2))
    z0 = np.random.default_rng(3).standard_normal(4)
    counting = CountingDenoiser(denoiser)
    guided = sample(counting, cond, z0, sched, guidance=GuidanceConfig(mode="action_scaled"))
    plain = sample(denoiser, cond, z0, sched, guidance=GuidanceConfig(mode="off"))
    assert np.array_equal(guided, plain)
    assert counting.calls == 50


def test_clip_x0_bounds_the_output():
    world = GaussianWorld()
    sched = make_schedule()
    denoiser = make_oracle_denoiser(world, sched)
    cond = Condition(action=np.array([3.0, 3.0]))  # conditional mean 4.5 per coordinate
    z0 = np.zeros(4)
    clipped = sample(denoiser, cond, z0, sched, clip_x0=3.0)
    free = sample(denoiser, cond, z0, sched, clip_x0=None)
    assert np.max(np.abs(clipped)) <= 3.0
    assert np.max(np.abs(free)) > 3.0


def test_non_finite_prediction_reports_failing_step():
    sched = make_schedule(timesteps=100)

    def broken(x_t, t, condition):
        if t == 97:
            return np.full_like(np.asarray(x_t, dtype=np.float64), np.nan)
        return np.zeros_like(np.asarray(x_t, dtype=np.float64))

    with pytest.raises(NumericalFailure) as excinfo:
        sample(broken, Condition(action=np.ones(2)), np.zeros(4), sched)
    assert excinfo.value.step == 97
    assert "97" in str(excinfo.value)
