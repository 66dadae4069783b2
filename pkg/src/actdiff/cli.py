"""Command-line pipeline: data generation, training, evaluation, reports.

Exit codes: 0 success, 2 bad configuration or usage, 3 missing or unreadable
input artifacts, 4 numerical failure (including failed exact-math checks),
5 training divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace

from . import harness
from .config import ArtifactPaths, ExperimentConfig, parse_config, write_config
from .denoiser import LAYER_DIMS, TrainConfig, load_checkpoint, save_checkpoint, train
from .diffusion import make_schedule
from .exceptions import (
    CheckpointError,
    ConfigError,
    DatasetError,
    NumericalFailure,
    TrainingDivergence,
)
from .world import generate_dataset, load_dataset, mean_action_norm, save_dataset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING_INPUT = 3
EXIT_NUMERICAL = 4
EXIT_TRAINING = 5

_SPLIT_OFFSETS = {"train": 0, "val": 1, "test": 2, "long": 3}


def _load_config(args) -> ExperimentConfig:
    cfg = parse_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.workers is not None:
        overrides["workers"] = args.workers
    return replace(cfg, **overrides) if overrides else cfg


def _paths(cfg: ExperimentConfig) -> ArtifactPaths:
    return ArtifactPaths(cfg.output_dir)


def _resolve_mean_action_norm(cfg: ExperimentConfig, paths: ArtifactPaths) -> float:
    """Use the configured value, or compute it from the training split."""
    if cfg.mean_action_norm > 0:
        return cfg.mean_action_norm
    return mean_action_norm(load_dataset(paths.train_data))


def _eval_inputs(cfg: ExperimentConfig, paths: ArtifactPaths):
    """Load episodes, checkpoint, and schedule center for evaluation."""
    if cfg.rollout_mode == "long":
        episodes = load_dataset(paths.long_test_data)
        passes = cfg.long_passes
    else:
        episodes = load_dataset(paths.test_data)
        passes = 1
    params = load_checkpoint(paths.checkpoint, expect_dims=LAYER_DIMS)
    mu = _resolve_mean_action_norm(cfg, paths)
    return episodes, params, mu, passes


def cmd_gen_dataset(args) -> int:
    cfg = _load_config(args)
    paths = _paths(cfg)
    paths.root.mkdir(parents=True, exist_ok=True)
    splits = (
        ("train", paths.train_data, cfg.train_episodes, cfg.episode_steps),
        ("val", paths.val_data, cfg.val_episodes, cfg.episode_steps),
        ("test", paths.test_data, cfg.test_episodes, cfg.episode_steps),
        ("long", paths.long_test_data, cfg.long_test_episodes,
         cfg.episode_steps * cfg.long_passes),
    )
    for name, path, n_episodes, n_steps in splits:
        split_seed = cfg.seed + _SPLIT_OFFSETS[name]
        episodes = generate_dataset(n_episodes, split_seed, n_steps)
        save_dataset(path, episodes, seed=split_seed)
        print(f"wrote {path} ({n_episodes} episodes x {n_steps} steps)")
    write_config(cfg, paths.root / "config_used.txt")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    paths = _paths(cfg)
    episodes = load_dataset(paths.train_data)
    schedule = make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)
    train_cfg = TrainConfig(
        steps=cfg.train_steps,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        seed=cfg.seed,
    )
    start = time.perf_counter()
    params, losses = train(episodes, schedule, train_cfg)
    elapsed = time.perf_counter() - start
    paths.root.mkdir(parents=True, exist_ok=True)
    save_checkpoint(paths.checkpoint, params)
    with open(paths.loss_curve, "w") as fh:
        fh.write("step,loss\n")
        for step, loss in enumerate(losses):
            fh.write(f"{step},{float(loss)!r}\n")
    summary = {
        "steps": int(losses.size),
        "final_loss": float(losses[-1]),
        "mean_loss_last_100": float(losses[-100:].mean()),
        "mean_action_norm": mean_action_norm(episodes),
        "train_episodes": len(episodes),
        "wall_clock_seconds": elapsed,
    }
    with open(paths.train_summary, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {paths.checkpoint} (final loss {summary['final_loss']:.6f})")
    return EXIT_OK


def _run_report(args, kind: str) -> int:
    cfg = _load_config(args)
    paths = _paths(cfg)
    episodes, params, mu, passes = _eval_inputs(cfg, paths)
    if kind == "ablate":
        variants = harness.ablation_variants(cfg, mu)
    else:
        variants = harness.standard_variants(cfg, mu)
    start = time.perf_counter()
    rows = harness.evaluate_episodes(episodes, params, cfg, variants, cfg.seed, passes)
    elapsed = time.perf_counter() - start
    harness.write_report_csv(paths.report_csv(kind), rows)
    payload = harness.write_report_json(
        paths.report_json(kind), cfg, rows, cfg.seed, cfg.rollout_mode, elapsed
    )
    for name, entry in payload["variants"].items():
        print(
            f"{name}: psnr {entry['psnr_mean']:.3f} ssim {entry['ssim_mean']:.4f} "
            f"latent_l2 {entry['latent_l2_mean']:.5f} ({entry['episodes_ok']} episodes)"
        )
    print(f"wrote {paths.report_csv(kind)} and {paths.report_json(kind)}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    return _run_report(args, "evaluate")


def cmd_ablate(args) -> int:
    return _run_report(args, "ablate")


def cmd_oracle_check(args) -> int:
    cfg = _load_config(args)
    results = harness.oracle_check(seed=cfg.seed)
    failed = False
    for result in results:
        status = "PASS" if result["passed"] else "FAIL"
        failed = failed or not result["passed"]
        print(f"[{status}] {result['name']}: {result['detail']}")
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_dump_frames(args) -> int:
    cfg = _load_config(args)
    paths = _paths(cfg)
    episodes, params, mu, passes = _eval_inputs(cfg, paths)
    variants = harness.standard_variants(cfg, mu)
    indices = list(range(min(cfg.dump_episodes, len(episodes))))
    written = harness.dump_frame_strips(
        paths.frames_dir, episodes, indices, params, cfg, variants, cfg.seed, passes
    )
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to a key = value config file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="override the config output directory")
    common.add_argument("--workers", type=int, help="override the worker count")
    parser = argparse.ArgumentParser(
        prog="actdiff",
        description="action-conditioned diffusion pipeline with inference-time controls",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-dataset", parents=[common],
                   help="generate train/val/test splits").set_defaults(func=cmd_gen_dataset)
    sub.add_parser("train", parents=[common],
                   help="train the noise predictor").set_defaults(func=cmd_train)
    sub.add_parser("evaluate", parents=[common],
                   help="score baseline vs guided variants").set_defaults(func=cmd_evaluate)
    sub.add_parser("ablate", parents=[common],
                   help="run the guidance/truncation grid").set_defaults(func=cmd_ablate)
    sub.add_parser("oracle-check", parents=[common],
                   help="run exact-math verification checks").set_defaults(func=cmd_oracle_check)
    sub.add_parser("dump-frames", parents=[common],
                   help="write ground-truth and predicted frame strips").set_defaults(func=cmd_dump_frames)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, CheckpointError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except TrainingDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
