"""Training objectives: MSE, negative log-posterior, negative SI-SDR and the hybrid.

Every loss takes numpy arrays or autograd tensors and returns a scalar
:class:`~amapse.nn.autograd.Tensor`; call ``.item()`` for the value or
``.backward()`` for gradients.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .dsp import ComplexSpectrogram, StftConfig, Waveform, istft_adjoint, istft_array
from .nn.autograd import Tensor, _op, as_tensor
from .statmodel import EPS_MAG, MaskPair

_DB = 10.0 / math.log(10.0)


class LossKind(str, enum.Enum):
    MSE = "mse"
    LOG_POSTERIOR = "logpost"
    SI_SDR = "sisdr"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class LossConfig:
    kind: LossKind = LossKind.HYBRID
    beta: float = 0.01
    lambda_floor: float = 1e-8
    sisdr_eps: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.lambda_floor <= 0 or self.sisdr_eps <= 0:
            raise ValueError("numerical floors must be positive")


def _spec(X) -> np.ndarray:
    return X.data if isinstance(X, ComplexSpectrogram) else np.asarray(X)


def _check(m: MaskPair, *specs):
    shape = as_tensor(m.wiener).shape
    for s in specs:
        if s.shape != shape:
            raise ValueError(f"shape mismatch: mask {shape}, spectrogram {s.shape}")


def _squared_residual(wiener: Tensor, X: np.ndarray, S: np.ndarray) -> Tensor:
    re = S.real - wiener * X.real
    im = S.imag - wiener * X.imag
    return re * re + im * im


def loss_mse(m: MaskPair, X, S) -> Tensor:
    X, S = _spec(X), _spec(S)
    _check(m, X, S)
    return _squared_residual(as_tensor(m.wiener), X, S).mean()


def loss_log_posterior(m: MaskPair, X, S, cfg: LossConfig = LossConfig()) -> Tensor:
    X, S = _spec(X), _spec(S)
    _check(m, X, S)
    lam = as_tensor(m.log_var).exp().clip_min(cfg.lambda_floor)
    r2 = _squared_residual(as_tensor(m.wiener), X, S)
    return (lam.log() + r2 / lam).mean()


def loss_si_sdr(s_hat, s, cfg: LossConfig = LossConfig(), eps: float | None = None) -> Tensor:
    """Negative SI-SDR in dB with the optimally scaled reference ``alpha * s`` as target."""
    s = s.samples if isinstance(s, Waveform) else np.asarray(s, dtype=np.float64)
    if isinstance(s_hat, Waveform):
        s_hat = s_hat.samples
    s_hat = as_tensor(s_hat)
    if s_hat.shape != s.shape:
        raise ValueError(f"length mismatch: {s_hat.shape} vs {s.shape}")
    ref_energy = float(np.dot(s, s))
    if ref_energy <= 0:
        raise ValueError("reference signal has zero energy")
    eps = cfg.sisdr_eps if eps is None else eps
    alpha = (s_hat * s).sum() / ref_energy
    target_energy = alpha * alpha * ref_energy
    resid = alpha * s - s_hat
    return -_DB * (target_energy.log() - ((resid * resid).sum() + eps).log())


def synthesize(gain, X: ComplexSpectrogram) -> Tensor:
    """Waveform from ``gain * |X|`` with the noisy phase, i.e. ``istft(gain * X)``."""
    gain = as_tensor(gain)
    data, cfg, length = X.data, X.config, X.length

    def back(g):
        return (np.real(istft_adjoint(g, cfg, data.shape[1]) * np.conj(data)),)

    return _op(istft_array(gain.values * data, cfg, length), (gain,), back)


def amap_gain_tensor(m: MaskPair, x_mag: np.ndarray, eps: float = EPS_MAG) -> Tensor:
    wiener = as_tensor(m.wiener)
    lam = as_tensor(m.log_var).exp()
    x2 = np.maximum(x_mag, eps) ** 2
    half = wiener * 0.5
    return half + (half * half + lam / (4.0 * x2)).sqrt()


def loss_hybrid(m: MaskPair, X: ComplexSpectrogram, S, s, cfg: LossConfig = LossConfig()) -> Tensor:
    """``beta * log-posterior + (1 - beta) * negative SI-SDR`` of the A-MAP reconstruction."""
    parts = []
    if cfg.beta > 0:
        parts.append(cfg.beta * loss_log_posterior(m, X, S, cfg))
    if cfg.beta < 1:
        s_hat = synthesize(amap_gain_tensor(m, np.abs(X.data)), X)
        parts.append((1.0 - cfg.beta) * loss_si_sdr(s_hat, s, cfg))
    return parts[0] if len(parts) == 1 else parts[0] + parts[1]


def compute_loss(m: MaskPair, X: ComplexSpectrogram, S, s, cfg: LossConfig) -> Tensor:
    """Dispatch on ``cfg.kind``.

    The SI-SDR-only baseline is a point estimator, so it reconstructs with the
    Wiener gain; only the hybrid uses the A-MAP gain.
    """
    if cfg.kind is LossKind.MSE:
        return loss_mse(m, X, S)
    if cfg.kind is LossKind.LOG_POSTERIOR:
        return loss_log_posterior(m, X, S, cfg)
    if cfg.kind is LossKind.SI_SDR:
        return loss_si_sdr(synthesize(m.wiener, X), s, cfg)
    return loss_hybrid(m, X, S, s, cfg)
