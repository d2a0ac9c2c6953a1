"""Adam, global-norm gradient clipping and the plateau schedule used in training."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params, grads, state: AdamState, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update on flat vectors; returns ``(params, state)``."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}")
    step = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps), AdamState(m, v, step)


def clip_grad_norm(grads: np.ndarray, max_norm: float = 5.0) -> tuple[np.ndarray, float]:
    """Rescale so the global L2 norm is at most ``max_norm``; returns (grads, pre-clip norm)."""
    norm = float(np.sqrt(np.sum(np.square(grads))))
    if norm > max_norm:
        return grads * (max_norm / norm), norm
    return grads, norm


@dataclass
class PlateauSchedule:
    """Halve the LR after ``halve_patience`` epochs without a strict decrease
    in validation loss; stop after ``stop_patience`` such epochs."""

    lr: float
    halve_patience: int = 3
    stop_patience: int = 10
    best: float = float("inf")
    since_best: int = 0
    since_halving: int = 0
    history: list = field(default_factory=list)

    def update(self, val_loss: float) -> bool:
        """Record one epoch; True when training should stop."""
        self.history.append(val_loss)
        if val_loss < self.best:
            self.best = val_loss
            self.since_best = 0
            self.since_halving = 0
            return False
        self.since_best += 1
        self.since_halving += 1
        if self.since_halving >= self.halve_patience:
            self.lr *= 0.5
            self.since_halving = 0
        return self.since_best >= self.stop_patience

    @property
    def improved(self) -> bool:
        return self.since_best == 0
