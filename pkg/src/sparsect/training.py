"""Training and finetuning loops.

Single-image batches; each step draws a training image, a view count from
the schedule, and (optionally) horizontal/vertical flips from one RNG
stream, so a run checkpointed mid-way and resumed reproduces the
uninterrupted run bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .checkpoint import (
    load_checkpoint,
    restore_model,
    restore_optimizer,
    restore_rng,
    save_checkpoint,
)
from .geometry import Sinogram
from .losses import LossConfig, total_loss, unsupervised_loss
from .model import ReconNet
from .optim import Adam, AdamConfig


class TrainingDivergedError(Exception):
    pass


@dataclass(frozen=True)
class TrainConfig:
    steps: int
    view_schedule: tuple[int, ...]
    lr: float = 1e-4
    gamma: float = 1.0
    seed: int = 0
    augment_flips: bool = True
    checkpoint_every: int = 0  # 0 = final checkpoint only

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if not self.view_schedule:
            raise ValueError("view_schedule must not be empty")


@dataclass
class TrainResult:
    rows: list[tuple[int, int, float, float, float]] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.rows[-1][2] if self.rows else math.nan


LOG_HEADER = "step\tview_count\tloss\tl1\tssim_term"


def _log_row(row: tuple[int, int, float, float, float]) -> str:
    step, q, loss, l1, st = row
    return f"{step}\t{q}\t{loss:.10e}\t{l1:.10e}\t{st:.10e}"


def _collect_grads(model: ReconNet, pnode_sets) -> dict[str, np.ndarray]:
    grads = {}
    for i, pn in enumerate(pnode_sets):
        for name, node in pn.items():
            g = node.grad
            if g is None:
                g = np.zeros_like(node.value)
            grads[f"p{i}.{name}"] = g
    return grads


def _draw_sample(rng, images, cfg: TrainConfig):
    idx = int(rng.integers(len(images)))
    q = int(cfg.view_schedule[rng.integers(len(cfg.view_schedule))])
    x = images[idx]
    if cfg.augment_flips:
        if rng.integers(2):
            x = x[:, ::-1]
        if rng.integers(2):
            x = x[::-1, :]
    return np.ascontiguousarray(x), q


def train_loop(
    model: ReconNet,
    images: Sequence[np.ndarray],
    cfg: TrainConfig,
    log_path: str | Path | None = None,
    checkpoint_path: str | Path | None = None,
    resume_from: str | Path | None = None,
) -> TrainResult:
    """Supervised training against known images; measurements are synthesized.

    `resume_from` restores weights, optimizer moments, and the RNG stream
    from a checkpoint written by this loop and continues at the step after
    the one it was saved on.
    """
    if not images:
        raise ValueError("need at least one training image")
    for x in images:
        if x.shape != model.geom.grid:
            raise ValueError(f"image shape {x.shape} != grid {model.geom.grid}")
    for q in cfg.view_schedule:
        model.register_views(q)

    loss_cfg = LossConfig(gamma=cfg.gamma)
    optimizer = Adam(model.named_parameters(), AdamConfig(lr=cfg.lr))
    rng = np.random.default_rng(cfg.seed)
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        restore_model(model, ckpt)
        restore_optimizer(optimizer, ckpt)
        restore_rng(rng, ckpt)
    start = optimizer.t

    log_f = None
    if log_path is not None:
        fresh = start == 0 or not Path(log_path).exists()
        log_f = open(log_path, "w" if fresh else "a")
        if fresh:
            print(LOG_HEADER, file=log_f)

    result = TrainResult()
    try:
        for step in range(start, cfg.steps):
            x_true, q = _draw_sample(rng, images, cfg)
            bundle = model.register_views(q)
            y = Sinogram(bundle.proj_s.apply(x_true), model.geom, bundle.subset)

            tape = ad.Tape()
            out, pnode_sets, _ = model.forward_graph(y, tape)
            target = tape.constant(x_true)
            loss, l1, ssim_term = total_loss(out, target, loss_cfg)
            if not np.isfinite(loss.value):
                raise TrainingDivergedError(f"non-finite loss at step {step}")
            ad.backward(loss)
            optimizer.step(_collect_grads(model, pnode_sets))

            row = (step, q, float(loss.value), float(l1.value), float(ssim_term.value))
            result.rows.append(row)
            if log_f is not None:
                print(_log_row(row), file=log_f, flush=True)
            if checkpoint_path is not None:
                last = step == cfg.steps - 1
                due = cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0
                if last or due:
                    save_checkpoint(checkpoint_path, model, cfg.gamma, optimizer, rng)
    finally:
        if log_f is not None:
            log_f.close()
    return result


def finetune_unsupervised(
    model: ReconNet,
    y: Sinogram,
    steps: int,
    lr: float = 1e-5,
    gamma: float = 1.0,
    log_path: str | Path | None = None,
) -> TrainResult:
    """Adapt weights to one measured sinogram via reprojection consistency.

    steps=0 leaves the model untouched (useful as a no-op baseline).
    """
    loss_cfg = LossConfig(gamma=gamma)
    optimizer = Adam(model.named_parameters(), AdamConfig(lr=lr))
    result = TrainResult()
    log_f = open(log_path, "w") if log_path is not None else None
    if log_f is not None:
        print(LOG_HEADER, file=log_f)
    try:
        for step in range(steps):
            tape = ad.Tape()
            out, pnode_sets, ctx = model.forward_graph(y, tape)
            loss, l1, ssim_term = unsupervised_loss(out, ctx, loss_cfg)
            if not np.isfinite(loss.value):
                raise TrainingDivergedError(f"non-finite loss at step {step}")
            ad.backward(loss)
            optimizer.step(_collect_grads(model, pnode_sets))
            row = (step, y.subset.q1, float(loss.value), float(l1.value), float(ssim_term.value))
            result.rows.append(row)
            if log_f is not None:
                print(_log_row(row), file=log_f, flush=True)
    finally:
        if log_f is not None:
            log_f.close()
    return result
