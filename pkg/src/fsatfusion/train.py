"""Adam with cosine annealing, and the training loop over a paired dataset."""
from __future__ import annotations

import csv
import math
from contextlib import nullcontext
from dataclasses import dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from . import ops
from .dataset import DataError, DatasetIndex, load_all
from .imageio import resize_bilinear
from .losses import LossWeights, total_loss
from .network import ModelParams, NetworkConfig, forward, init_params
from .tensor import Tensor, backward, no_grad


@dataclass
class TrainState:
    """Adam moments and step counter."""

    lr: float = 1e-3
    total_steps: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def cosine_lr(t: float, T: float, lr_max: float = 1e-3, lr_min: float = 0.0) -> float:
    """``lr_min + (lr_max - lr_min) * (1 + cos(pi t / T)) / 2``."""
    if T <= 0:
        raise ValueError(f"schedule length must be positive, got T={T}")
    if not 0 <= t <= T:
        raise ValueError(f"step {t} outside [0, {T}]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1 + math.cos(math.pi * t / T))


def adam_step(state: TrainState, params: dict[str, Tensor],
              grads: dict[str, np.ndarray | None], lr_t: float) -> None:
    """One bias-corrected Adam update, in place. Missing gradients count as zero."""
    for name, p in params.items():
        g = grads.get(name)
        if g is not None and g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1 - b1 ** state.t, 1 - b2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p.data -= (lr_t * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)


# -- training loop --------------------------------------------------------------
@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters. Defaults follow the published recipe; desk runs
    override ``epochs``, ``batch``, ``patch`` or ``steps``."""

    epochs: int = 50
    batch: int = 32
    lr: float = 1e-3
    lr_min: float = 0.0
    patch: int = 224
    seed: int = 0
    steps: int | None = None  # overrides epochs when set
    weights: LossWeights = LossWeights()
    network: NetworkConfig = NetworkConfig()
    single_thread: bool = True

    def __post_init__(self):
        for name in ("epochs", "batch", "patch"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.steps is not None and self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.lr < 0 or self.lr_min < 0:
            raise ValueError("learning rates must be nonnegative")

    def total_steps(self, n_pairs: int) -> int:
        return self.steps or self.epochs * math.ceil(n_pairs / self.batch)


TRACE_COLUMNS = ("step", "epoch", "lr", "pixel", "texture", "ssim", "total")


@dataclass(frozen=True)
class TraceRow:
    step: int
    epoch: int
    lr: float
    pixel: float
    texture: float
    ssim: float
    total: float


@dataclass
class TrainResult:
    params: ModelParams
    trace: list[TraceRow]
    names: list[str]
    skipped: list[str]
    state: TrainState


def write_trace(trace: list[TraceRow], path) -> None:
    """Loss trace as CSV; floats use ``repr`` so values survive a round-trip."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r in trace:
            w.writerow([r.step, r.epoch] + [repr(getattr(r, k)) for k in TRACE_COLUMNS[2:]])


def read_trace(path) -> list[TraceRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [TraceRow(int(r["step"]), int(r["epoch"]),
                         *(float(r[k]) for k in TRACE_COLUMNS[2:]))
                for r in csv.DictReader(fh)]


def prepare_batch(pairs: list[tuple[np.ndarray, np.ndarray]], patch: int,
                  dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    """Resize every pair to ``patch x patch``; returns ``N x 1 x P x P`` IR and VI."""
    ir = np.stack([resize_bilinear(a, patch, patch) for a, _ in pairs])[:, None]
    vi = np.stack([resize_bilinear(b, patch, patch) for _, b in pairs])[:, None]
    return ir.astype(dtype), vi.astype(dtype)


def batch_loss(params: ModelParams, ir: np.ndarray, vi: np.ndarray,
               weights: LossWeights = LossWeights(), training: bool = True):
    x = Tensor(np.concatenate([ir, vi], axis=1))
    return total_loss(forward(x, params, training), vi, ir, weights)


def evaluate_loss(params: ModelParams, ir: np.ndarray, vi: np.ndarray,
                  weights: LossWeights = LossWeights(), batch_stats: bool = True) -> dict:
    """Loss components on a batch without touching parameters or running stats.

    ``batch_stats`` normalises with the batch's own statistics, matching
    what a training step sees.
    """
    probe = ModelParams(params.config, params.tensors,
                        ops.BatchNormState(params.bn.mean.copy(), params.bn.var.copy(),
                                           params.bn.momentum, params.bn.eps))
    with no_grad():
        return batch_loss(probe, ir, vi, weights, training=batch_stats).values()


def train_on_arrays(pairs: list[tuple[np.ndarray, np.ndarray]], cfg: TrainConfig,
                    params: ModelParams | None = None, trace_path=None) -> tuple[ModelParams, list[TraceRow], TrainState]:
    if not pairs:
        raise DataError("training needs at least one readable pair")
    guard = threadpool_limits(1) if cfg.single_thread else nullcontext()
    with guard:
        params = params or init_params(cfg.network, cfg.seed)
        ir_all, vi_all = prepare_batch(pairs, cfg.patch, params.dtype)
        n = len(pairs)
        T = cfg.total_steps(n)
        state = TrainState(lr=cfg.lr, total_steps=T)
        named = params.requires_grad_(True).named()
        trace: list[TraceRow] = []
        step, epoch = 0, 0
        while step < T:
            order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
            for start in range(0, n, cfg.batch):
                if step >= T:
                    break
                idx = order[start:start + cfg.batch]
                lr_t = cosine_lr(step, T, cfg.lr, cfg.lr_min)
                params.zero_grad()
                report = batch_loss(params, ir_all[idx], vi_all[idx], cfg.weights)
                backward(report.total)
                adam_step(state, named, {k: t.grad for k, t in named.items()}, lr_t)
                vals = report.values()
                trace.append(TraceRow(step, epoch, lr_t, vals["pixel"], vals["texture"],
                                      vals["ssim"], vals["total"]))
                step += 1
            epoch += 1
        params.zero_grad()
        params.requires_grad_(False)
    if trace_path is not None:
        write_trace(trace, trace_path)
    return params, trace, state


def train_loop(dataset: DatasetIndex, cfg: TrainConfig, trace_path=None) -> TrainResult:
    """Train from scratch on every readable pair of ``dataset``.

    Each epoch visits the pairs in a fresh permutation drawn from
    ``(seed, epoch)``; every step resizes its pairs to ``patch x patch``,
    runs the network with batch statistics, takes the weighted loss and
    applies Adam at the cosine-annealed rate. Unreadable pairs are skipped
    with a warning.
    """
    names, pairs, skipped = load_all(dataset)
    params, trace, state = train_on_arrays(pairs, cfg, trace_path=trace_path)
    return TrainResult(params, trace, names, skipped, state)


def with_overrides(cfg: TrainConfig, **kw) -> TrainConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
