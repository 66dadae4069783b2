"""Small fully-connected noise predictor trained with plain numpy.

Input layout is the concatenation [noisy latent (256) | previous frame
(256) | action (2) | sinusoidal step features (16)] = 530 values. Two tanh
hidden layers of width 256 feed a linear 256-wide output that predicts the
injected noise. Gradients are hand-derived backprop; the optimizer is Adam.

Checkpoints are little-endian binary: magic, version, a layer-dimension
table, float64 weight/bias payload, and a trailing CRC32 of everything
before it.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .diffusion import Condition, DiffusionSchedule
from .exceptions import CheckpointError, TrainingDivergence
from .validation import ACTION_DIM, FRAME_SIZE, as_rng
from .world import Episode

LATENT_DIM = FRAME_SIZE * FRAME_SIZE
TIME_FEATURE_DIM = 16
INPUT_DIM = 2 * LATENT_DIM + ACTION_DIM + TIME_FEATURE_DIM
HIDDEN_DIM = 256
LAYER_DIMS = (INPUT_DIM, HIDDEN_DIM, HIDDEN_DIM, LATENT_DIM)

CHECKPOINT_MAGIC = b"ADCK"
CHECKPOINT_VERSION = 1

DIVERGENCE_FACTOR = 10.0
DIVERGENCE_PATIENCE = 100

_HALF = TIME_FEATURE_DIM // 2
_FREQS = 100.0 ** (np.arange(_HALF) / (_HALF - 1))


def time_features(t, total_steps: int) -> np.ndarray:
    """Sinusoidal features of the normalized step t / total_steps."""
    frac = np.asarray(t, dtype=np.float64) / float(total_steps)
    ang = frac[..., None] * _FREQS
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)


@dataclass
class MLPParams:
    """Weight matrices (fan_in, fan_out) and bias vectors per layer."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> MLPParams:
        return MLPParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0], *(w.shape[1] for w in self.weights))


def init_params(seed_or_rng=0, layer_dims: tuple[int, ...] = LAYER_DIMS) -> MLPParams:
    """Scaled-uniform fan-in initialization with zero biases."""
    rng = as_rng(seed_or_rng)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLPParams(weights, biases)


def _assemble_input(x_t, t, prev_frame, action, total_steps: int) -> np.ndarray:
    x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
    batch = x_t.shape[0]
    prev = np.asarray(prev_frame, dtype=np.float64).reshape(-1, LATENT_DIM)
    act = np.atleast_2d(np.asarray(action, dtype=np.float64))
    feats = np.atleast_2d(time_features(t, total_steps))
    prev = np.broadcast_to(prev, (batch, LATENT_DIM))
    act = np.broadcast_to(act, (batch, ACTION_DIM))
    feats = np.broadcast_to(feats, (batch, TIME_FEATURE_DIM))
    return np.concatenate([x_t, prev, act, feats], axis=1)


def _forward_cached(params: MLPParams, inputs: np.ndarray):
    w1, w2, w3 = params.weights
    b1, b2, b3 = params.biases
    h1 = np.tanh(inputs @ w1 + b1)
    h2 = np.tanh(h1 @ w2 + b2)
    out = h2 @ w3 + b3
    return out, h1, h2


def forward(params: MLPParams, x_t, t, prev_frame, action, total_steps: int) -> np.ndarray:
    """Predict noise; accepts a single latent (d,) or a batch (n, d)."""
    single = np.asarray(x_t).ndim == 1
    inputs = _assemble_input(x_t, t, prev_frame, action, total_steps)
    out, _, _ = _forward_cached(params, inputs)
    return out[0] if single else out


def loss_and_grads(params: MLPParams, inputs: np.ndarray, targets: np.ndarray):
    """Mean squared error over all outputs plus backprop gradients.

    Gradients come back as a flat list [w1, b1, w2, b2, w3, b3].
    """
    w2, w3 = params.weights[1], params.weights[2]
    out, h1, h2 = _forward_cached(params, inputs)
    diff = out - targets
    loss = float(np.mean(diff**2))
    d_out = (2.0 / diff.size) * diff
    g_w3 = h2.T @ d_out
    g_b3 = d_out.sum(axis=0)
    d_h2 = (d_out @ w3.T) * (1.0 - h2**2)
    g_w2 = h1.T @ d_h2
    g_b2 = d_h2.sum(axis=0)
    d_h1 = (d_h2 @ w2.T) * (1.0 - h1**2)
    g_w1 = inputs.T @ d_h1
    g_b1 = d_h1.sum(axis=0)
    return loss, [g_w1, g_b1, g_w2, g_b2, g_w3, g_b3]


def _param_list(params: MLPParams) -> list[np.ndarray]:
    return [params.weights[0], params.biases[0], params.weights[1], params.biases[1],
            params.weights[2], params.biases[2]]


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0


def adam_init(params: MLPParams) -> AdamState:
    tensors = _param_list(params)
    return AdamState([np.zeros_like(p) for p in tensors], [np.zeros_like(p) for p in tensors])


def adam_update(
    params: MLPParams,
    grads: list[np.ndarray],
    state: AdamState,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One in-place Adam step with bias-corrected moments."""
    state.step += 1
    c1 = 1.0 - beta1**state.step
    c2 = 1.0 - beta2**state.step
    for p, g, m, v in zip(_param_list(params), grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g**2
        p -= learning_rate * (m / c1) / (np.sqrt(v / c2) + eps)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 20000
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def _flatten_pairs(episodes: list[Episode]):
    """Stack every (previous frame, action, next frame) transition."""
    x0 = np.concatenate([ep.frames[1:].reshape(-1, LATENT_DIM) for ep in episodes])
    prev = np.concatenate([ep.frames[:-1].reshape(-1, LATENT_DIM) for ep in episodes])
    act = np.concatenate([ep.actions for ep in episodes])
    return x0, prev, act


def train(
    episodes: list[Episode],
    schedule: DiffusionSchedule,
    cfg: TrainConfig = TrainConfig(),
) -> tuple[MLPParams, np.ndarray]:
    """Train the predictor on noised transitions; returns (params, losses).

    Raises TrainingDivergence if the loss stays above 10x the first-step
    loss for 100 consecutive steps.
    """
    if not episodes:
        raise ValueError("need at least one episode to train on")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed]))
    params = init_params(rng)
    state = adam_init(params)
    x0_all, prev_all, act_all = _flatten_pairs(episodes)
    n = x0_all.shape[0]
    losses = np.empty(cfg.steps)
    initial_loss = None
    high_streak = 0
    for step in range(cfg.steps):
        idx = rng.integers(0, n, cfg.batch_size)
        t = rng.integers(1, schedule.timesteps + 1, cfg.batch_size)
        eps = rng.standard_normal((cfg.batch_size, LATENT_DIM))
        ab = schedule.alpha_bar[t - 1][:, None]
        x_t = np.sqrt(ab) * x0_all[idx] + np.sqrt(1.0 - ab) * eps
        inputs = _assemble_input(x_t, t, prev_all[idx], act_all[idx], schedule.timesteps)
        loss, grads = loss_and_grads(params, inputs, eps)
        losses[step] = loss
        if initial_loss is None:
            initial_loss = loss
        if not np.isfinite(loss) or loss > DIVERGENCE_FACTOR * initial_loss:
            high_streak += 1
            if not np.isfinite(loss) or high_streak >= DIVERGENCE_PATIENCE:
                raise TrainingDivergence(
                    f"loss {loss:.6g} diverged from initial {initial_loss:.6g} at step {step}"
                )
        else:
            high_streak = 0
        adam_update(params, grads, state, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    return params, losses


def make_denoiser(params: MLPParams, total_steps: int):
    """Adapt trained parameters to the sampler's denoiser contract."""

    def denoiser(x_t, t, condition: Condition):
        if condition.prev_frame is None:
            raise ValueError("this denoiser requires a previous frame in the condition")
        return forward(params, x_t, t, condition.prev_frame, condition.action, total_steps)

    return denoiser


def save_checkpoint(path, params: MLPParams) -> None:
    """Write params to the checksummed binary checkpoint format."""
    dims = params.layer_dims
    blob = bytearray()
    blob += struct.pack("<4sII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(params.weights))
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        blob += struct.pack("<II", fan_in, fan_out)
    for w, b in zip(params.weights, params.biases):
        blob += np.ascontiguousarray(w, dtype="<f8").tobytes()
        blob += np.ascontiguousarray(b, dtype="<f8").tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)))
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_checkpoint(path, expect_dims: tuple[int, ...] | None = None) -> MLPParams:
    """Read a checkpoint, verifying checksum and (optionally) layer dims."""
    with open(path, "rb") as fh:
        blob = fh.read()
    head = struct.Struct("<4sII")
    if len(blob) < head.size + 4:
        raise CheckpointError("checkpoint file is too short")
    body, (crc_stored,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc_stored:
        raise CheckpointError("checkpoint checksum mismatch")
    magic, version, n_layers = head.unpack_from(body, 0)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if n_layers < 1 or len(body) < head.size + 8 * n_layers:
        raise CheckpointError("checkpoint layer table is invalid")
    offset = head.size
    shapes = []
    for _ in range(n_layers):
        fan_in, fan_out = struct.unpack_from("<II", body, offset)
        shapes.append((fan_in, fan_out))
        offset += 8
    dims = (shapes[0][0], *(s[1] for s in shapes))
    if any(shapes[i][1] != shapes[i + 1][0] for i in range(n_layers - 1)):
        raise CheckpointError("checkpoint layer dims do not chain")
    if expect_dims is not None and dims != tuple(expect_dims):
        raise CheckpointError(f"checkpoint layer dims {dims} do not match expected {tuple(expect_dims)}")
    expected_size = offset + sum(8 * (fi * fo + fo) for fi, fo in shapes)
    if len(body) != expected_size:
        raise CheckpointError("checkpoint payload size does not match its layer table")
    weights, biases = [], []
    for fan_in, fan_out in shapes:
        w = np.frombuffer(body, dtype="<f8", count=fan_in * fan_out, offset=offset)
        offset += 8 * fan_in * fan_out
        b = np.frombuffer(body, dtype="<f8", count=fan_out, offset=offset)
        offset += 8 * fan_out
        weights.append(w.reshape(fan_in, fan_out).astype(np.float64))
        biases.append(b.astype(np.float64))
    return MLPParams(weights, biases)
