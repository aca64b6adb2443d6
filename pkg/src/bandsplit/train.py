"""Adam training loop with step-decayed learning rate, clipping and encoder freezing."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import Track
from .dsp import ChunkPlan, chunk_offsets, stft
from .eval import EvalReport, si_snr, snr
from .losses import LossConfig, total_loss
from .model import BandSplitNet

log = logging.getLogger(__name__)

TRACE_FIELDS = ("step", "epoch", "lr", "loss", "grad_norm")


class NumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    decay: float = 0.98
    decay_every: int = 2
    clip_norm: float = 5.0
    epochs: int = 100
    samples_per_epoch: int = 20000
    batch_size: int = 2
    chunk_len: float = 6.0
    seed: int = 0
    freeze_encoder: bool = False
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(self.betas))
        if isinstance(self.loss, dict):
            object.__setattr__(self, "loss", LossConfig(**self.loss))
        if self.lr <= 0 or self.clip_norm <= 0:
            raise ValueError("lr and clip_norm must be positive")
        if self.batch_size < 1 or self.samples_per_epoch < self.batch_size:
            raise ValueError("samples_per_epoch must be at least one batch")

    @property
    def steps_per_epoch(self) -> int:
        return self.samples_per_epoch // self.batch_size


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    return cfg.lr * cfg.decay ** (epoch // cfg.decay_every)


class TrackBank:
    """All tracks of a corpus held in memory for random chunk serving."""

    def __init__(self, tracks: list[Track], stems, composites: dict[str, list[str]] | None = None):
        if not tracks:
            raise ValueError("no tracks to train on")
        self.stems = tuple(stems)
        self.fs = tracks[0].fs
        composites = composites or {}
        self.mixtures, self.targets = [], []
        for t in tracks:
            mixture, stem_set = t.load()
            self.mixtures.append(mixture)
            self.targets.append(np.stack([
                np.sum([stem_set[p] for p in composites[s]], axis=0) if s in composites else stem_set[s]
                for s in self.stems
            ]).astype(np.float32))

    def __len__(self) -> int:
        return len(self.mixtures)

    def sample(self, rng: np.random.Generator, batch: int, size: int):
        """Random chunks drawn with replacement: ``(mix (B,C,L), targets (B,S,C,L))``."""
        idx = rng.integers(0, len(self), batch)
        mixes, tgts = [], []
        for i in idx:
            n = self.mixtures[i].shape[-1]
            if n < size:
                raise ValueError(f"track {i} is shorter than the {size}-sample chunk")
            off = int(rng.integers(0, n - size + 1))
            mixes.append(self.mixtures[i][..., off:off + size])
            tgts.append(self.targets[i][..., off:off + size])
        return np.stack(mixes), np.stack(tgts)


def compute_loss(model: BandSplitNet, loss_cfg: LossConfig, mixture: torch.Tensor,
                 targets: torch.Tensor, stems) -> torch.Tensor:
    waves, specs = model(mixture, stems)
    cfg = model.config.stft
    tgt_waves = {s: targets[:, k] for k, s in enumerate(stems)}
    tgt_specs = {s: stft(w, cfg) for s, w in tgt_waves.items()}
    return total_loss(loss_cfg, waves, tgt_waves, specs, tgt_specs, batch_dims=1)


def trainable_parameters(model: BandSplitNet, freeze_encoder: bool):
    enc = {id(p) for p in model.encoder_parameters()}
    for p in model.parameters():
        p.requires_grad_(not (freeze_encoder and id(p) in enc))
    return [p for p in model.parameters() if p.requires_grad]


@dataclass
class TrainState:
    step: int = 0
    epoch: int = 0
    trace: list[dict] = field(default_factory=list)
    rng_state: dict | None = None


class Trainer:
    def __init__(self, model: BandSplitNet, bank: TrackBank, cfg: TrainConfig,
                 stems=None, state: TrainState | None = None, optimizer_state: dict | None = None):
        self.model, self.bank, self.cfg = model, bank, cfg
        self.stems = tuple(stems or model.stems)
        self.params = trainable_parameters(model, cfg.freeze_encoder)
        self.optimizer = torch.optim.Adam(self.params, lr=cfg.lr, betas=cfg.betas, eps=cfg.adam_eps)
        if optimizer_state is not None:
            saved = sum(len(g["params"]) for g in optimizer_state["param_groups"])
            if saved == len(self.params):
                self.optimizer.load_state_dict(optimizer_state)
            else:
                log.warning("trainable set changed (%d -> %d tensors); optimizer state reset",
                            saved, len(self.params))
        self.state = state or TrainState()
        self.rng = np.random.default_rng(cfg.seed)
        if self.state.rng_state is not None:
            self.rng.bit_generator.state = self.state.rng_state
        self.chunk_size = int(round(cfg.chunk_len * bank.fs))

    def set_lr(self, lr: float) -> None:
        for group in self.optimizer.param_groups:
            group["lr"] = lr

    def train_step(self) -> dict:
        mix, tgt = self.bank.sample(self.rng, self.cfg.batch_size, self.chunk_size)
        dtype = next(self.model.parameters()).dtype
        mix_t = torch.as_tensor(mix, dtype=dtype)
        tgt_t = torch.as_tensor(tgt, dtype=dtype)
        self.model.train()
        self.optimizer.zero_grad(set_to_none=True)
        loss = compute_loss(self.model, self.cfg.loss, mix_t, tgt_t, self.stems)
        if not torch.isfinite(loss):
            raise NumericalError(f"non-finite loss {loss.item()} at step {self.state.step}")
        loss.backward()
        grad_norm = torch.nn.utils.clip_grad_norm_(self.params, self.cfg.clip_norm)
        if not torch.isfinite(grad_norm):
            raise NumericalError(f"non-finite gradient norm at step {self.state.step}")
        self.optimizer.step()
        row = {"step": self.state.step, "epoch": self.state.epoch,
               "lr": self.optimizer.param_groups[0]["lr"],
               "loss": float(loss.detach()), "grad_norm": float(grad_norm)}
        self.state.trace.append(row)
        self.state.step += 1
        return row

    def run_epoch(self) -> list[dict]:
        self.set_lr(lr_at_epoch(self.cfg, self.state.epoch))
        start = len(self.state.trace)
        for _ in range(self.cfg.steps_per_epoch):
            self.train_step()
        self.state.epoch += 1
        self.state.rng_state = self.rng.bit_generator.state
        return self.state.trace[start:]

    def fit(self, epochs: int | None = None, on_epoch=None) -> list[dict]:
        target = self.cfg.epochs if epochs is None else epochs
        while self.state.epoch < target:
            t0 = time.perf_counter()
            rows = self.run_epoch()
            log.info("epoch %d: loss %.4f (%.1fs)", self.state.epoch - 1,
                     float(np.mean([r["loss"] for r in rows])), time.perf_counter() - t0)
            if on_epoch is not None:
                on_epoch(self)
        return self.state.trace


def train(model: BandSplitNet, bank: TrackBank, cfg: TrainConfig, stems=None) -> list[dict]:
    """Train ``model`` in place; returns the per-step loss trace."""
    return Trainer(model, bank, cfg, stems).fit()


def write_trace(path, trace: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRACE_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in trace:
            w.writerow({k: row[k] for k in TRACE_FIELDS})


def read_trace(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{"step": int(r["step"]), "epoch": int(r["epoch"]), "lr": float(r["lr"]),
                 "loss": float(r["loss"]), "grad_norm": float(r["grad_norm"])}
                for r in csv.DictReader(fh)]


class ModelSeparator:
    """Adapts a model to the numpy separator interface used by evaluation."""

    needs_targets = False

    def __init__(self, model: BandSplitNet, stems=None):
        self.model = model
        self.stems = stems

    @torch.no_grad()
    def __call__(self, mixture: np.ndarray) -> dict[str, np.ndarray]:
        self.model.eval()
        dtype = next(self.model.parameters()).dtype
        x = torch.as_tensor(np.asarray(mixture), dtype=dtype)[None]
        waves, _ = self.model(x, self.stems)
        return {s: w[0].double().numpy() for s, w in waves.items()}


@torch.no_grad()
def validate(model: BandSplitNet, tracks: list[Track], plan: ChunkPlan,
             loss_cfg: LossConfig, stems=None) -> tuple[float, EvalReport]:
    """Mean loss and per-chunk metrics over exhaustive validation chunks."""
    model.eval()
    stems = tuple(stems or model.stems)
    dtype = next(model.parameters()).dtype
    report, losses = EvalReport(), []
    for track in tracks:
        mixture, stem_set = track.load()
        size, hop = plan.samples(track.fs)
        for off in chunk_offsets(mixture.shape[-1], size, hop, pad_tail=False):
            mix = torch.as_tensor(mixture[..., off:off + size], dtype=dtype)[None]
            tgt = torch.as_tensor(np.stack([stem_set[s][..., off:off + size] for s in stems]),
                                  dtype=dtype)[None]
            losses.append(float(compute_loss(model, loss_cfg, mix, tgt, stems)))
            waves, _ = model(mix, stems)
            for k, s in enumerate(stems):
                est, ref = waves[s][0].double().numpy(), tgt[0, k].double().numpy()
                if np.any(ref):
                    report.add(f"{track.name}@{off}", s, snr(est, ref), si_snr(est, ref))
    return float(np.mean(losses)) if losses else math.nan, report
