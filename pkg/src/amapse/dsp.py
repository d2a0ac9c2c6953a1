"""STFT analysis/synthesis with a periodic Hann window at 50% overlap."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SAMPLE_RATE = 16000


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains NaN or Inf")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


def hann(n: int) -> np.ndarray:
    """Periodic Hann window of length ``n``."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


@dataclass(frozen=True)
class StftConfig:
    window_len: int = 512
    fft_size: int = 512
    window: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.window_len < 2 or self.window_len % 2:
            raise ValueError(f"window_len must be even and >= 2, got {self.window_len}")
        if self.fft_size < self.window_len:
            raise ValueError("fft_size must be >= window_len")
        if self.window is None:
            object.__setattr__(self, "window", hann(self.window_len))
        elif len(self.window) != self.window_len:
            raise ValueError("window length does not match window_len")

    @property
    def hop(self) -> int:
        return self.window_len // 2

    @property
    def n_freq(self) -> int:
        return self.fft_size // 2 + 1

    @classmethod
    def for_bins(cls, n_freq: int) -> "StftConfig":
        """Config whose one-sided spectrum has ``n_freq`` bins."""
        n = 2 * (n_freq - 1)
        return cls(window_len=n, fft_size=n)

    def n_frames(self, n_samples: int) -> int:
        return -(-n_samples // self.hop) + 1

    def envelope(self, n_samples: int) -> np.ndarray:
        """Summed squared-window envelope over the original sample range."""
        n_frames = self.n_frames(n_samples)
        env = np.zeros((n_frames + 1) * self.hop)
        w2 = self.window**2
        for t in range(n_frames):
            env[t * self.hop : t * self.hop + self.window_len] += w2
        return env[self.hop : self.hop + n_samples]


@dataclass(frozen=True)
class ComplexSpectrogram:
    """One-sided F x T STFT grid; ``length`` is the source waveform length."""

    data: np.ndarray
    config: StftConfig
    length: int
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim != 2:
            raise ValueError(f"spectrogram must be 2-D, got shape {data.shape}")
        if data.shape[0] != self.config.n_freq:
            raise ValueError(
                f"spectrogram has {data.shape[0]} bins, config expects {self.config.n_freq}"
            )
        if data.shape[1] != self.config.n_frames(self.length):
            raise ValueError(
                f"spectrogram has {data.shape[1]} frames, "
                f"length {self.length} implies {self.config.n_frames(self.length)}"
            )
        object.__setattr__(self, "data", data)

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data: np.ndarray) -> "ComplexSpectrogram":
        return ComplexSpectrogram(data, self.config, self.length, self.sample_rate)


def _frame(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    n_frames = cfg.n_frames(len(x))
    padded = np.zeros((n_frames + 1) * cfg.hop)
    padded[cfg.hop : cfg.hop + len(x)] = x
    idx = np.arange(cfg.window_len)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    return padded[idx]


def stft(w: Waveform, cfg: StftConfig | None = None) -> ComplexSpectrogram:
    """Zero-padded STFT: ``hop`` zeros in front, enough at the back for ``ceil(L/hop)+1`` frames.

    Every input sample is covered by exactly two frames, so the squared-window
    envelope never vanishes and synthesis is exact on the whole signal.
    """
    cfg = cfg or StftConfig()
    if len(w) == 0:
        raise ValueError("cannot transform an empty waveform")
    frames = _frame(w.samples, cfg) * cfg.window
    spec = np.fft.rfft(frames, n=cfg.fft_size, axis=1).T
    return ComplexSpectrogram(spec, cfg, len(w), w.sample_rate)


def _overlap_add(frames: np.ndarray, cfg: StftConfig, length: int) -> np.ndarray:
    n_frames = frames.shape[0]
    out = np.zeros((n_frames + 1) * cfg.hop)
    for t in range(n_frames):
        out[t * cfg.hop : t * cfg.hop + cfg.window_len] += frames[t]
    return out[cfg.hop : cfg.hop + length]


def istft_array(data: np.ndarray, cfg: StftConfig, length: int) -> np.ndarray:
    """Weighted overlap-add synthesis of an F x T array, trimmed to ``length``."""
    frames = np.fft.irfft(data.T, n=cfg.fft_size, axis=1)[:, : cfg.window_len]
    return _overlap_add(frames * cfg.window, cfg, length) / cfg.envelope(length)


def istft_adjoint(grad: np.ndarray, cfg: StftConfig, n_frames: int) -> np.ndarray:
    """Adjoint of :func:`istft_array` w.r.t. the real and imaginary parts of its input.

    Returned as a complex array ``g`` such that d<out, grad>/dRe = g.real and
    d<out, grad>/dIm = g.imag.
    """
    length = grad.shape[0]
    g = grad / cfg.envelope(length)
    padded = np.zeros((n_frames + 1) * cfg.hop)
    padded[cfg.hop : cfg.hop + length] = g
    idx = np.arange(cfg.window_len)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    frames = np.zeros((n_frames, cfg.fft_size))
    frames[:, : cfg.window_len] = padded[idx] * cfg.window
    out = np.fft.rfft(frames, axis=1).T / cfg.fft_size
    out[1 : (cfg.fft_size + 1) // 2] *= 2.0
    return out


def istft(spec: ComplexSpectrogram) -> Waveform:
    return Waveform(istft_array(spec.data, spec.config, spec.length), spec.sample_rate)


def magnitude(spec: ComplexSpectrogram) -> np.ndarray:
    return np.abs(spec.data)


def phase(spec: ComplexSpectrogram) -> np.ndarray:
    return np.angle(spec.data)


def recombine(mag: np.ndarray, ph: np.ndarray, like: ComplexSpectrogram) -> ComplexSpectrogram:
    """Polar recombination; ``like`` supplies config and length."""
    mag = np.asarray(mag, dtype=np.float64)
    ph = np.asarray(ph, dtype=np.float64)
    if mag.shape != ph.shape or mag.shape != like.shape:
        raise ValueError(f"shape mismatch: {mag.shape}, {ph.shape}, {like.shape}")
    return like.with_data(mag * np.exp(1j * ph))
