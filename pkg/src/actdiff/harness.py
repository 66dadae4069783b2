"""Evaluation harness: variant grids, paired-seed runs, report files.

Every variant of one run shares per-episode noise streams (the rollout seed
depends only on the run seed and episode index), so metric differences
between variants are paired comparisons. Per-episode rows go to CSV with a
fixed column order, fixed sort order, and repr-formatted floats, making
reruns byte-identical; aggregate JSON additionally records wall-clock time
and the full config, which is why timing never enters the CSV.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .config import ExperimentConfig
from .denoiser import make_denoiser
from .diffusion import CountingDenoiser, make_schedule
from .exceptions import NumericalFailure
from .guidance import GuidanceConfig
from .metrics import latent_l2, psnr, ssim
from .oracle import (
    GaussianWorld,
    exact_epsilon,
    finite_difference_epsilon,
    guided_equals_amplified_check,
)
from .rollout import SamplingControls, rollout_long, rollout_seed, rollout_short
from .truncation import (
    TruncationConfig,
    sample_truncated_normal,
    truncated_normal_variance,
)
from .world import Episode

CSV_COLUMNS = (
    "episode", "variant", "status", "n_frames", "denoiser_evals",
    "psnr", "ssim", "latent_l2", "detail",
)
STANDARD_VARIANT_NAMES = ("baseline", "action_cfg", "action_cfg_trunc")
ABLATION_OMEGA_FIXED = (1.0, 3.0)
ABLATION_TAU_FIXED = (1.0, 1.5)


@dataclass(frozen=True)
class Variant:
    """A named bundle of inference-time controls."""

    name: str
    controls: SamplingControls


def guidance_for(cfg: ExperimentConfig, mode: str, fixed_weight: float = 1.0) -> GuidanceConfig:
    return GuidanceConfig(
        mode=mode,
        scale=cfg.guidance_scale,
        fixed_weight=fixed_weight,
        parameterization=cfg.guidance_parameterization,
        active_fraction=cfg.guidance_active_fraction,
    )


def truncation_for(
    cfg: ExperimentConfig, mean_action_norm: float, mode: str, fixed_limit: float = 1.0
) -> TruncationConfig:
    return TruncationConfig(
        mode=mode,
        limit_min=cfg.truncation_min,
        limit_max=cfg.truncation_max,
        mean_action_norm=mean_action_norm,
        fixed_limit=fixed_limit,
        norm_source=cfg.truncation_norm_source,
    )


def _controls(cfg: ExperimentConfig, guidance: GuidanceConfig, truncation: TruncationConfig):
    return SamplingControls(
        guidance=guidance, truncation=truncation, sampler=cfg.sampler, clip_x0=cfg.clip_x0
    )


def standard_variants(cfg: ExperimentConfig, mean_action_norm: float) -> list[Variant]:
    """The headline comparison: no controls, guidance, guidance+truncation."""
    off_g = guidance_for(cfg, "off")
    on_g = guidance_for(cfg, "action_scaled")
    off_t = truncation_for(cfg, mean_action_norm, "off")
    on_t = truncation_for(cfg, mean_action_norm, "action_scaled")
    return [
        Variant("baseline", _controls(cfg, off_g, off_t)),
        Variant("action_cfg", _controls(cfg, on_g, off_t)),
        Variant("action_cfg_trunc", _controls(cfg, on_g, on_t)),
    ]


def ablation_variants(cfg: ExperimentConfig, mean_action_norm: float) -> list[Variant]:
    """Cross fixed/action-scaled guidance weights with truncation settings."""
    guidance_options = [
        (f"omega_fixed_{w:g}", guidance_for(cfg, "fixed", fixed_weight=w))
        for w in ABLATION_OMEGA_FIXED
    ]
    guidance_options.append(("omega_action", guidance_for(cfg, "action_scaled")))
    truncation_options = [
        (f"tau_fixed_{lim:g}", truncation_for(cfg, mean_action_norm, "fixed", fixed_limit=lim))
        for lim in ABLATION_TAU_FIXED
    ]
    truncation_options.append(("tau_action", truncation_for(cfg, mean_action_norm, "action_scaled")))
    truncation_options.append(("tau_off", truncation_for(cfg, mean_action_norm, "off")))
    return [
        Variant(f"{g_name}__{t_name}", _controls(cfg, g, t))
        for g_name, g in guidance_options
        for t_name, t in truncation_options
    ]


def evaluate_episode(
    index: int,
    episode: Episode,
    params,
    schedule,
    variants: list[Variant],
    run_seed: int,
    passes: int,
) -> list[dict]:
    """Run every variant on one episode and score it against ground truth."""
    rows = []
    seed = rollout_seed(run_seed, index)
    for variant in variants:
        counting = CountingDenoiser(make_denoiser(params, schedule.timesteps))
        row = {
            "episode": index,
            "variant": variant.name,
            "status": "ok",
            "n_frames": episode.n_frames - 1,
            "denoiser_evals": 0,
            "psnr": None,
            "ssim": None,
            "latent_l2": None,
            "detail": "",
        }
        try:
            if passes == 1:
                pred = rollout_short(counting, episode, schedule, variant.controls, seed)
            else:
                pred = rollout_long(counting, episode, schedule, variant.controls, seed, passes)
            gt = episode.frames[1:]
            row["psnr"] = float(np.mean([psnr(p, g) for p, g in zip(pred, gt)]))
            row["ssim"] = float(np.mean([ssim(p, g) for p, g in zip(pred, gt)]))
            row["latent_l2"] = latent_l2(pred, gt)
        except NumericalFailure as exc:
            row["status"] = "numerical_failure"
            row["detail"] = str(exc)
        row["denoiser_evals"] = counting.calls
        rows.append(row)
    return rows


_WORKER_STATE: dict = {}


def _init_worker(params, timesteps, beta_start, beta_end, variants, run_seed, passes):
    _WORKER_STATE["schedule"] = make_schedule(timesteps, beta_start, beta_end)
    _WORKER_STATE.update(
        params=params, variants=variants, run_seed=run_seed, passes=passes
    )


def _worker_task(item):
    index, episode = item
    return evaluate_episode(
        index,
        episode,
        _WORKER_STATE["params"],
        _WORKER_STATE["schedule"],
        _WORKER_STATE["variants"],
        _WORKER_STATE["run_seed"],
        _WORKER_STATE["passes"],
    )


def evaluate_episodes(
    episodes: list[Episode],
    params,
    cfg: ExperimentConfig,
    variants: list[Variant],
    run_seed: int,
    passes: int = 1,
    workers: int | None = None,
) -> list[dict]:
    """Per-episode rows for every variant; order independent of scheduling."""
    workers = cfg.workers if workers is None else workers
    schedule = make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)
    items = list(enumerate(episodes))
    if workers <= 1:
        chunks = [
            evaluate_episode(i, ep, params, schedule, variants, run_seed, passes)
            for i, ep in items
        ]
    else:
        with ProcessPoolExecutor(
            max_workers=workers,
            initializer=_init_worker,
            initargs=(params, cfg.timesteps, cfg.beta_start, cfg.beta_end,
                      variants, run_seed, passes),
        ) as pool:
            chunks = list(pool.map(_worker_task, items))
    return [row for chunk in chunks for row in chunk]


def aggregate_rows(rows: list[dict]) -> dict:
    """Per-variant metric means over successful episodes."""
    out: dict[str, dict] = {}
    for name in sorted({row["variant"] for row in rows}):
        ok = [r for r in rows if r["variant"] == name and r["status"] == "ok"]
        failed = [r for r in rows if r["variant"] == name and r["status"] != "ok"]
        entry: dict = {
            "episodes_ok": len(ok),
            "episodes_failed": len(failed),
            "denoiser_evals_total": int(sum(r["denoiser_evals"] for r in rows if r["variant"] == name)),
        }
        for metric in ("psnr", "ssim", "latent_l2"):
            entry[f"{metric}_mean"] = float(np.mean([r[metric] for r in ok])) if ok else None
        out[name] = entry
    return out


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report_csv(path, rows: list[dict]) -> None:
    """Write per-episode rows sorted by (episode, variant)."""
    ordered = sorted(rows, key=lambda r: (r["episode"], r["variant"]))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in ordered:
            writer.writerow([_format_cell(row[col]) for col in CSV_COLUMNS])


def write_report_json(path, cfg: ExperimentConfig, rows: list[dict], run_seed: int,
                      rollout_mode: str, wall_clock_seconds: float) -> dict:
    """Write the aggregate report; returns the payload that was written."""
    payload = {
        "variants": aggregate_rows(rows),
        "run": {
            "seed": run_seed,
            "rollout_mode": rollout_mode,
            "n_episodes": len({row["episode"] for row in rows}),
            "wall_clock_seconds": wall_clock_seconds,
            "config": asdict(cfg),
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return payload


def quantize_frame(frame: np.ndarray) -> np.ndarray:
    """Map a [0, 1] frame to uint8 gray levels."""
    return np.clip(np.rint(np.asarray(frame) * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path, image: np.ndarray) -> None:
    """Write one 8-bit grayscale image as binary PGM (P5)."""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ValueError("PGM output needs a 2-D image")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def frame_strip(frames) -> np.ndarray:
    """Concatenate frames horizontally into one quantized strip."""
    return np.hstack([quantize_frame(f) for f in frames])


def dump_frame_strips(
    out_dir,
    episodes: list[Episode],
    indices: list[int],
    params,
    cfg: ExperimentConfig,
    variants: list[Variant],
    run_seed: int,
    passes: int = 1,
) -> list:
    """Write ground-truth and per-variant frame strips as PGM files."""
    out_dir.mkdir(parents=True, exist_ok=True)
    schedule = make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)
    written = []
    for index in indices:
        episode = episodes[index]
        seed = rollout_seed(run_seed, index)
        gt_path = out_dir / f"ep{index:03d}_groundtruth.pgm"
        write_pgm(gt_path, frame_strip(episode.frames))
        written.append(gt_path)
        for variant in variants:
            denoiser = make_denoiser(params, schedule.timesteps)
            if passes == 1:
                pred = rollout_short(denoiser, episode, schedule, variant.controls, seed)
            else:
                pred = rollout_long(denoiser, episode, schedule, variant.controls, seed, passes)
            strip = frame_strip([episode.frames[0], *pred])
            path = out_dir / f"ep{index:03d}_{variant.name}.pgm"
            write_pgm(path, strip)
            written.append(path)
    return written


def oracle_check(seed: int = 0) -> list[dict]:
    """Exact-math verification suite; each entry reports pass/fail + detail.

    Covers the guidance identity on the linear-Gaussian world, the
    closed-form noise prediction against a finite-difference score, and
    truncated-sampling statistics against closed-form moments.
    """
    rng = np.random.default_rng(seed)
    world = GaussianWorld()
    schedule = make_schedule()
    results = []

    worst = 0.0
    for _ in range(1000):
        t = int(rng.integers(1, schedule.timesteps + 1))
        x_t = rng.normal(0.0, 2.0, world.latent_dim)
        a = rng.uniform(-3.0, 3.0, world.action_dim)
        omega = float(rng.uniform(0.0, 4.0))
        _, residual = guided_equals_amplified_check(x_t, t, a, omega, world, schedule)
        worst = max(worst, residual)
    results.append({
        "name": "guidance_identity",
        "passed": worst <= 1e-9,
        "detail": f"max residual {worst:.3e} over 1000 probes (tol 1e-9)",
    })

    worst = 0.0
    for _ in range(100):
        t = int(rng.integers(1, schedule.timesteps + 1))
        x_t = rng.normal(0.0, 2.0, world.latent_dim)
        a = rng.uniform(-3.0, 3.0, world.action_dim)
        exact = exact_epsilon(x_t, t, a, world, schedule)
        approx = finite_difference_epsilon(x_t, t, a, world, schedule)
        scale = max(1.0, float(np.max(np.abs(exact))))
        worst = max(worst, float(np.max(np.abs(exact - approx))) / scale)
    results.append({
        "name": "score_finite_difference",
        "passed": worst <= 1e-5,
        "detail": f"max relative error {worst:.3e} over 100 probes (tol 1e-5)",
    })

    n = 200_000
    all_ok = True
    details = []
    for limit in (0.5, 1.0, 1.5):
        z = sample_truncated_normal(limit, n, rng)
        target = truncated_normal_variance(limit)
        var_se = float(np.std(z**2, ddof=1)) / np.sqrt(n)
        mean_se = float(np.std(z, ddof=1)) / np.sqrt(n)
        bound_ok = bool(np.max(np.abs(z)) <= limit)
        var_ok = abs(float(np.var(z)) - target) <= 3.0 * var_se
        mean_ok = abs(float(np.mean(z))) <= 3.0 * mean_se
        all_ok = all_ok and bound_ok and var_ok and mean_ok
        details.append(
            f"limit {limit:g}: var {np.var(z):.5f} vs {target:.5f}, bound {bound_ok}"
        )
    results.append({
        "name": "truncated_statistics",
        "passed": all_ok,
        "detail": "; ".join(details),
    })
    return results
