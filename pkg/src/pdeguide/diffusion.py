"""Noise schedule, forward corruption, the denoising loss and the training loop.

Nothing in this module knows about PDEs: training is purely data-driven.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
import torch

from . import data as dio
from .errors import ConfigError, DataError, TrainingDivergence
from .grid import Field
from .unet import Denoiser

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Arrays are indexed by t = 1..T; index 0 holds the identity (beta = 0)."""

    beta: np.ndarray
    beta_start: float = 1e-4
    beta_end: float = 0.02

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=np.float64)
        if b.ndim != 1 or b.size < 3 or b[0] != 0.0:
            raise ConfigError("beta must be 1D with a zero placeholder at index 0")
        if not ((b[1:] > 0) & (b[1:] < 1)).all():
            raise ConfigError("beta values must lie strictly inside (0, 1)")
        object.__setattr__(self, "beta", b)

    @property
    def T(self) -> int:
        return self.beta.size - 1

    @property
    def alpha(self) -> np.ndarray:
        return 1.0 - self.beta

    @property
    def alpha_bar(self) -> np.ndarray:
        return np.cumprod(self.alpha)

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.beta)

    def to_dict(self) -> dict:
        return {"kind": "linear", "T": self.T, "beta_start": self.beta_start,
                "beta_end": self.beta_end}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSchedule":
        if d.get("kind", "linear") != "linear":
            raise ConfigError(f"unknown schedule kind {d.get('kind')!r}")
        return linear_schedule(int(d["T"]), float(d["beta_start"]), float(d["beta_end"]))


def linear_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if T < 2:
        raise ConfigError("T must be at least 2")
    beta = np.concatenate([[0.0], np.linspace(beta_start, beta_end, T)])
    return NoiseSchedule(beta, beta_start, beta_end)


def _check_t(t: int, s: NoiseSchedule) -> None:
    if not 1 <= t <= s.T:
        raise ConfigError(f"timestep {t} outside 1..{s.T}")


def forward_noise(u0, t: int, xi, s: NoiseSchedule):
    """sqrt(abar_t) u0 + sqrt(1 - abar_t) xi for Fields or arrays."""
    _check_t(t, s)
    ab = s.alpha_bar[t]
    if isinstance(u0, Field):
        return Field(u0.spec, math.sqrt(ab) * u0.values + math.sqrt(1.0 - ab) * xi.values)
    return math.sqrt(ab) * u0 + math.sqrt(1.0 - ab) * xi


def score_from_noise(eps, t: int, s: NoiseSchedule):
    """Score estimate -eps / sqrt(1 - abar_t)."""
    _check_t(t, s)
    c = -1.0 / math.sqrt(1.0 - s.alpha_bar[t])
    if isinstance(eps, Field):
        return Field(eps.spec, c * eps.values)
    return c * eps


def training_loss(model: Callable, u0: torch.Tensor, s: NoiseSchedule,
                  rng: torch.Generator) -> torch.Tensor:
    """Mean squared noise-prediction error with t ~ U{1..T}, xi ~ N(0, I).

    ``u0`` has shape (batch, nx, ny) or (batch, 1, nx, ny).
    """
    if u0.shape[0] == 0:
        raise DataError("empty batch")
    if u0.dim() == 3:
        u0 = u0[:, None]
    B = u0.shape[0]
    t = torch.randint(1, s.T + 1, (B,), generator=rng)
    xi = torch.randn(u0.shape, generator=rng, dtype=u0.dtype)
    ab = torch.as_tensor(s.alpha_bar, dtype=u0.dtype)[t].view(B, 1, 1, 1)
    ut = ab.sqrt() * u0 + (1.0 - ab).sqrt() * xi
    return torch.mean((xi - model(ut, t)) ** 2)


@dataclass
class TrainConfig:
    epochs: int = 400
    batch_size: int = 64
    lr: float = 1e-3
    lr_halving_epochs: int = 100
    seed: int = 0
    max_iterations: int | None = None
    divergence_factor: float = 10.0
    base_channels: int = 64
    T: int = 1000
    log_every: int = 100

    def __post_init__(self):
        for name in ("epochs", "batch_size", "lr_halving_epochs", "T"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")

    def lr_at(self, epoch: int) -> float:
        return self.lr * 0.5 ** (epoch // self.lr_halving_epochs)


@dataclass
class TrainTrace:
    iteration: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)

    def append(self, it: int, loss: float) -> None:
        self.iteration.append(it)
        self.loss.append(loss)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "loss", "rmse"])
        for it, l in zip(self.iteration, self.loss):
            w.writerow([it, repr(l), repr(math.sqrt(l))])
        return buf.getvalue()


@dataclass(eq=False)
class Checkpoint:
    """Trained denoiser plus everything sampling needs to interpret it."""

    model: Denoiser
    schedule: NoiseSchedule
    scale: float = 1.0
    equation: str | None = None
    info: dict = field(default_factory=dict)

    @torch.no_grad()
    def predict_noise(self, u: np.ndarray, t: int) -> np.ndarray:
        """Noise prediction for a field (nx, ny) or a batch (b, nx, ny)."""
        x = torch.as_tensor(np.asarray(u), dtype=torch.float32)
        squeeze = x.dim() == 2
        if squeeze:
            x = x[None]
        tt = torch.full((x.shape[0],), int(t), dtype=torch.long)
        out = self.model(x[:, None], tt)[:, 0].double().numpy()
        return out[0] if squeeze else out

    def save(self, path) -> None:
        tensors = {k: v.detach().cpu().numpy() for k, v in self.model.state_dict().items()}
        extra = {"scale": self.scale, "equation": self.equation, "info": self.info}
        dio.save_checkpoint(path, self.model.descriptor(), self.schedule.to_dict(), tensors, extra)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        descriptor, sched, tensors, extra = dio.load_checkpoint(path)
        model = Denoiser.from_descriptor(descriptor)
        state = {k: torch.from_numpy(v) for k, v in tensors.items()}
        model.load_state_dict(state)
        model.eval()
        return cls(model, NoiseSchedule.from_dict(sched), float(extra.get("scale", 1.0)),
                   extra.get("equation"), extra.get("info", {}))


def train(dataset: dio.Dataset, cfg: TrainConfig, model: Denoiser | None = None,
          schedule: NoiseSchedule | None = None) -> tuple[Checkpoint, TrainTrace]:
    """Fit the denoiser on a normalized dataset.

    Each epoch visits floor(n / batch) full batches of a seeded permutation.
    Runs are reproducible for a fixed seed and thread count (floating
    reduction order in the conv kernels depends on the latter).
    """
    n = len(dataset)
    if cfg.batch_size > n:
        raise ConfigError(f"batch size {cfg.batch_size} exceeds dataset size {n}")
    peak = float(np.max(np.abs(dataset.values)))
    if not math.isclose(peak, 1.0, rel_tol=1e-6):
        raise DataError(f"dataset must be normalized first (max |u| = {peak:.4g})")
    torch.manual_seed(cfg.seed)
    model = model or Denoiser(cfg.base_channels)
    schedule = schedule or linear_schedule(cfg.T)
    rng = torch.Generator().manual_seed(cfg.seed)
    x_all = torch.as_tensor(dataset.values, dtype=torch.float32)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    trace = TrainTrace()
    per_epoch = n // cfg.batch_size
    initial = None
    it = 0
    t0 = time.time()
    model.train()
    for epoch in range(cfg.epochs):
        for g in opt.param_groups:
            g["lr"] = cfg.lr_at(epoch)
        perm = torch.randperm(n, generator=rng)
        for b in range(per_epoch):
            idx = perm[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            loss = training_loss(model, x_all[idx], schedule, rng)
            value = float(loss.detach())
            if not math.isfinite(value):
                raise TrainingDivergence(f"non-finite loss at iteration {it + 1} (epoch {epoch})")
            if initial is None:
                initial = value
            elif value > cfg.divergence_factor * initial:
                raise TrainingDivergence(
                    f"loss {value:.4g} exceeded {cfg.divergence_factor}x the initial "
                    f"{initial:.4g} at iteration {it + 1} (epoch {epoch})")
            opt.zero_grad()
            loss.backward()
            opt.step()
            it += 1
            trace.append(it, value)
            if cfg.log_every and it % cfg.log_every == 0:
                recent = np.mean(trace.loss[-cfg.log_every:])
                log.info("iter %d epoch %d loss %.4f (%.1fs)", it, epoch, recent, time.time() - t0)
            if cfg.max_iterations and it >= cfg.max_iterations:
                break
        if cfg.max_iterations and it >= cfg.max_iterations:
            break
    model.eval()
    info = {"train": asdict(cfg), "iterations": it, "n_samples": n, "grid": dataset.spec.to_dict(),
            "seconds": round(time.time() - t0, 3)}
    ckpt = Checkpoint(model, schedule, dataset.scale, dataset.equation, info)
    return ckpt, trace
