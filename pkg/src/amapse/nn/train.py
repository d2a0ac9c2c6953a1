"""Mini-batch training with Adam, gradient clipping, LR halving and early stopping."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..data import DatasetManifest, read_wav
from ..dsp import ComplexSpectrogram, StftConfig, stft
from ..losses import LossConfig, compute_loss
from ..statmodel import MaskPair
from .checkpoint import ModelCheckpoint
from .network import MaskNetwork, NetworkConfig, features
from .optim import AdamState, PlateauSchedule, adam_step, clip_grad_norm

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "train_loss", "val_loss", "lr", "grad_norm", "best")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    lr: float = 1e-3
    grad_clip_norm: float = 5.0
    lr_halve_patience: int = 3
    early_stop_patience: int = 10
    beta: float = 0.01
    seed: int = 0

    def __post_init__(self):
        for name in ("epochs", "batch_size", "lr", "grad_clip_norm", "lr_halve_patience", "early_stop_patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, last_good: ModelCheckpoint):
        super().__init__(message)
        self.last_good = last_good


@dataclass
class Utterance:
    X: ComplexSpectrogram
    S: ComplexSpectrogram
    clean: np.ndarray
    feats: np.ndarray

    @classmethod
    def from_waveforms(cls, mixture, clean, cfg: StftConfig | None = None) -> "Utterance":
        X = stft(mixture, cfg)
        S = stft(clean, cfg)
        return cls(X, S, clean.samples, features(np.abs(X.data)))

    @property
    def n_frames(self) -> int:
        return self.X.shape[1]


def load_utterances(manifest: DatasetManifest, cfg: StftConfig | None = None) -> list[Utterance]:
    return [
        Utterance.from_waveforms(read_wav(manifest.resolve(e.mixture_path)), read_wav(manifest.resolve(e.clean_path)), cfg)
        for e in manifest.entries
    ]


def batch_loss(net: MaskNetwork, batch: list[Utterance], loss_cfg: LossConfig):
    """Mean per-utterance loss; zero-padded frames past each utterance's end are
    sliced away before the loss, and causality keeps them from leaking backwards."""
    n_freq = batch[0].feats.shape[0]
    t_max = max(u.n_frames for u in batch)
    feats = np.zeros((len(batch), n_freq, t_max))
    for b, u in enumerate(batch):
        feats[b, :, : u.n_frames] = u.feats
    out = net.forward(feats)
    total = None
    for b, u in enumerate(batch):
        sl = (b, slice(None), slice(0, u.n_frames))
        loss = compute_loss(MaskPair(out.wiener[sl], out.log_var[sl]), u.X, u.S, u.clean, loss_cfg)
        total = loss if total is None else total + loss
    return total * (1.0 / len(batch))


def evaluate_loss(net: MaskNetwork, data: list[Utterance], loss_cfg: LossConfig, batch_size: int) -> float:
    total = 0.0
    for start in range(0, len(data), batch_size):
        batch = data[start : start + batch_size]
        total += batch_loss(net, batch, loss_cfg).item() * len(batch)
    return total / len(data)


def _fmt(x: float) -> str:
    return repr(float(x))


def train(
    train_set: list[Utterance],
    val_set: list[Utterance],
    cfg: TrainConfig = TrainConfig(),
    loss_cfg: LossConfig = LossConfig(),
    net_cfg: NetworkConfig | None = None,
    log_path=None,
) -> tuple[ModelCheckpoint, list[dict]]:
    """Train from scratch; returns the best-validation checkpoint and the epoch log."""
    if not train_set or not val_set:
        raise ValueError("training and validation sets must be non-empty")
    net_cfg = net_cfg or NetworkConfig(n_freq=train_set[0].X.shape[0])
    net = MaskNetwork(net_cfg, seed=cfg.seed)
    weights = net.get_flat()
    state = AdamState.zeros(weights.size)
    schedule = PlateauSchedule(cfg.lr, cfg.lr_halve_patience, cfg.early_stop_patience)
    meta = {"loss": loss_cfg.kind.value, "beta": loss_cfg.beta}
    best = ModelCheckpoint(net_cfg, weights, state, 0, cfg.seed, float("inf"), cfg.lr, meta)
    rows = []
    rng = np.random.default_rng(cfg.seed)
    log_fh = Path(log_path).open("w", encoding="utf-8") if log_path else None
    if log_fh:
        log_fh.write("\t".join(LOG_COLUMNS) + "\n")
    try:
        for epoch in range(1, cfg.epochs + 1):
            started = time.perf_counter()
            order = rng.permutation(len(train_set))
            train_total, norms = 0.0, []
            lr = schedule.lr
            for start in range(0, len(order), cfg.batch_size):
                batch = [train_set[i] for i in order[start : start + cfg.batch_size]]
                net.zero_grad()
                loss = batch_loss(net, batch, loss_cfg)
                loss.backward()
                grads, norm = clip_grad_norm(net.flat_grad(), cfg.grad_clip_norm)
                weights, state = adam_step(weights, grads, state, lr)
                net.set_flat(weights)
                train_total += loss.item() * len(batch)
                norms.append(norm)
            train_loss = train_total / len(train_set)
            val_loss = evaluate_loss(net, val_set, loss_cfg, cfg.batch_size)
            if not math.isfinite(val_loss):
                raise TrainingDiverged(f"validation loss became {val_loss} at epoch {epoch}", best)
            stop = schedule.update(val_loss)
            if schedule.improved:
                best = ModelCheckpoint(net_cfg, weights.copy(), state, epoch, cfg.seed, val_loss, lr, meta)
            row = {
                "epoch": epoch,
                "train_loss": train_loss,
                "val_loss": val_loss,
                "lr": lr,
                "grad_norm": float(np.mean(norms)),
                "best": int(schedule.improved),
            }
            rows.append(row)
            if log_fh:
                log_fh.write("\t".join(_fmt(row[c]) if isinstance(row[c], float) else str(row[c]) for c in LOG_COLUMNS) + "\n")
                log_fh.flush()
            log.info(
                "epoch %d train %.4f val %.4f lr %.2e (%.1fs)",
                epoch, train_loss, val_loss, lr, time.perf_counter() - started,
            )
            if stop:
                log.info("early stop after %d epochs without improvement", cfg.early_stop_patience)
                break
    finally:
        if log_fh:
            log_fh.close()
    return best, rows
