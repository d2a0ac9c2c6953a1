"""Gaussian posterior model of STFT coefficients: Wiener gain, posterior
variance, the Rician magnitude posterior and its approximate mode."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dsp import ComplexSpectrogram

EPS_VAR = 1e-10
EPS_MAG = 1e-8

_LOG_I0_CROSSOVER = 20.0


@dataclass(frozen=True)
class VariancePair:
    sigma2_s: np.ndarray
    sigma2_n: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigma2_s, dtype=np.float64)
        n = np.asarray(self.sigma2_n, dtype=np.float64)
        if s.shape != n.shape:
            raise ValueError(f"variance shapes differ: {s.shape} vs {n.shape}")
        if np.any(s < 0) or np.any(n < 0):
            raise ValueError("variances must be non-negative")
        object.__setattr__(self, "sigma2_s", s)
        object.__setattr__(self, "sigma2_n", n)


@dataclass(frozen=True)
class MaskPair:
    """Per-bin Wiener gain and log posterior variance.

    Fields may be numpy arrays or autograd tensors; the network emits the latter.
    """

    wiener: object
    log_var: object

    @property
    def variance(self):
        return np.exp(np.asarray(self.log_var))

    @property
    def shape(self):
        return np.shape(self.wiener) if isinstance(self.wiener, np.ndarray) else self.wiener.shape


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    variance: np.ndarray


def wiener_from_variances(v: VariancePair, eps: float = EPS_VAR) -> MaskPair:
    s = np.maximum(v.sigma2_s, eps)
    n = np.maximum(v.sigma2_n, eps)
    wiener = s / (s + n)
    lam = wiener * n
    return MaskPair(wiener, np.log(lam))


def apply_mask(X: ComplexSpectrogram | np.ndarray, m: MaskPair) -> GaussianPosterior:
    data = X.data if isinstance(X, ComplexSpectrogram) else np.asarray(X)
    wiener = np.asarray(m.wiener)
    if data.shape != wiener.shape or np.shape(m.log_var) != wiener.shape:
        raise ValueError(f"shape mismatch: spectrogram {data.shape}, mask {wiener.shape}")
    return GaussianPosterior(wiener * data, np.exp(np.asarray(m.log_var)))


def amap_gain_from_variance(wiener, lam, x_mag, eps: float = EPS_MAG):
    """Closed-form approximate mode of the Rician magnitude posterior, as a gain on ``|X|``.

    Not clamped to [0, 1]; large ``lam`` legitimately pushes it above one.
    """
    x_mag = np.maximum(np.asarray(x_mag, dtype=np.float64), eps)
    half = 0.5 * np.asarray(wiener, dtype=np.float64)
    return half + np.sqrt(half * half + np.asarray(lam) / (4.0 * x_mag * x_mag))


def amap_gain(m: MaskPair, x_mag, eps: float = EPS_MAG) -> np.ndarray:
    wiener = np.asarray(m.wiener)
    if np.shape(x_mag) != wiener.shape:
        raise ValueError(f"shape mismatch: mask {wiener.shape}, magnitude {np.shape(x_mag)}")
    return amap_gain_from_variance(wiener, m.variance, x_mag, eps)


def log_i0(z: float) -> float:
    """log I0(z) for z >= 0, without overflow.

    Power series below the crossover, Hankel asymptotic expansion above it.
    """
    z = abs(float(z))
    if z < _LOG_I0_CROSSOVER:
        q = 0.25 * z * z
        term = total = 1.0
        k = 0
        while term > 1e-17 * total:
            k += 1
            term *= q / (k * k)
            total += term
        return math.log(total)
    # I0(z) ~ e^z / sqrt(2 pi z) * sum_k ((2k-1)!!)^2 / (k! (8z)^k)
    total = term = 1.0
    for k in range(1, 12):
        term *= (2 * k - 1) ** 2 / (k * 8.0 * z)
        total += term
    return z - 0.5 * math.log(2.0 * math.pi * z) + math.log(total)


def rician_logpdf(s_mag: float, wiener: float, lam: float, x_mag: float) -> float:
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if s_mag < 0:
        raise ValueError(f"magnitude must be non-negative, got {s_mag}")
    if s_mag == 0:
        return -math.inf
    mean_mag = wiener * x_mag
    return (
        math.log(2.0 * s_mag / lam)
        - (s_mag * s_mag + mean_mag * mean_mag) / lam
        + log_i0(2.0 * x_mag * s_mag * wiener / lam)
    )


def rician_pdf(s_mag: float, wiener: float, lam: float, x_mag: float) -> float:
    """Density of the clean magnitude given the noisy coefficient."""
    return math.exp(rician_logpdf(s_mag, wiener, lam, x_mag))


def verify_mmse_error(v: VariancePair, n_draws: int = 100_000, seed: int = 0) -> dict:
    """Monte-Carlo check that the Wiener estimate's squared error averages to lambda.

    Draws ``n_draws`` speech/noise pairs per bin from the zero-mean complex
    Gaussian priors, mixes them, applies the oracle Wiener gain and reports the
    empirical squared error next to the mean posterior variance.
    """
    s2 = np.atleast_1d(v.sigma2_s)
    n2 = np.atleast_1d(v.sigma2_n)
    rng = np.random.default_rng(seed)
    denom = s2 + n2
    wiener = np.divide(s2, denom, out=np.zeros_like(s2), where=denom > 0)
    lam = wiener * n2

    def draw(var):
        scale = np.sqrt(var / 2.0)[..., None]
        shape = var.shape + (n_draws,)
        return scale * rng.standard_normal(shape) + 1j * scale * rng.standard_normal(shape)

    S = draw(s2)
    N = draw(n2)
    err = np.abs(S - wiener[..., None] * (S + N)) ** 2
    return {"empirical_mse": float(err.mean()), "mean_lambda": float(lam.mean())}
