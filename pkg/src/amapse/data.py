"""Synthetic speech/noise generation, SNR mixing, WAV I/O and dataset manifests."""

from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .dsp import SAMPLE_RATE, Waveform

log = logging.getLogger(__name__)

SNR_RANGE_DB = (-5.0, 20.0)
MANIFEST_COLUMNS = ("index", "split", "clean_path", "noise_path", "mixture_path", "snr_db", "seed")
SPLITS = ("train", "val", "test")


class WavFormatError(ValueError):
    pass


class MixtureClipped(ValueError):
    pass


class SpeechKind(str, enum.Enum):
    HARMONIC_VOICE = "harmonic_voice"
    CHIRP = "chirp"
    WAV_FILE = "wav_file"


class NoiseKind(str, enum.Enum):
    WHITE = "white"
    PINK = "pink"
    BABBLE_SURROGATE = "babble_surrogate"
    WAV_FILE = "wav_file"


@dataclass(frozen=True)
class MixtureSpec:
    snr_db: float
    speech_kind: SpeechKind = SpeechKind.HARMONIC_VOICE
    noise_kind: NoiseKind = NoiseKind.WHITE
    duration_s: float = 2.0
    seed: int = 0
    speech_path: str | None = None
    noise_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "speech_kind", SpeechKind(self.speech_kind))
        object.__setattr__(self, "noise_kind", NoiseKind(self.noise_kind))
        if self.duration_s <= 0:
            raise ValueError(f"duration must be positive, got {self.duration_s}")
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")


@dataclass(frozen=True)
class ManifestEntry:
    index: int
    split: str
    clean_path: str
    noise_path: str
    mixture_path: str
    snr_db: float
    seed: int


@dataclass
class DatasetManifest:
    entries: list
    root: Path = Path(".")

    def split(self, name: str) -> "DatasetManifest":
        return DatasetManifest([e for e in self.entries if e.split == name], self.root)

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def __len__(self):
        return len(self.entries)

    def write(self, path):
        path = Path(path)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
            writer.writerow(MANIFEST_COLUMNS)
            for e in self.entries:
                writer.writerow(
                    [e.index, e.split, e.clean_path, e.noise_path, e.mixture_path, repr(float(e.snr_db)), e.seed]
                )

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            fh = path.open(encoding="utf-8", newline="")
        except OSError as exc:
            raise FileNotFoundError(f"cannot open manifest {path}: {exc}") from exc
        with fh:
            reader = csv.reader(fh, delimiter="\t")
            header = tuple(next(reader, ()))
            if header != MANIFEST_COLUMNS:
                raise ValueError(f"manifest {path} has header {header}, expected {MANIFEST_COLUMNS}")
            entries = [
                ManifestEntry(int(r[0]), r[1], r[2], r[3], r[4], float(r[5]), int(r[6])) for r in reader if r
            ]
        return cls(entries, path.parent)


# -- WAV ---------------------------------------------------------------------


def read_wav(path) -> Waveform:
    """Mono 16 kHz PCM16 or float32 WAV; anything else is rejected."""
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except (ValueError, EOFError) as exc:
        raise WavFormatError(f"{path}: malformed WAV header: {exc}") from exc
    if data.ndim != 1:
        raise WavFormatError(f"{path}: channel count is {data.shape[1]}, only mono (1) is supported")
    if rate != SAMPLE_RATE:
        raise WavFormatError(f"{path}: sample rate is {rate} Hz, only {SAMPLE_RATE} Hz is supported")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise WavFormatError(f"{path}: sample format {data.dtype} unsupported (need PCM16 or float32)")
    if not np.all(np.isfinite(samples)):
        raise WavFormatError(f"{path}: contains NaN or Inf samples")
    return Waveform(samples, rate)


def write_wav(path, w: Waveform, pcm16: bool = False):
    if w.sample_rate != SAMPLE_RATE:
        raise WavFormatError(f"sample rate is {w.sample_rate} Hz, only {SAMPLE_RATE} Hz is supported")
    if pcm16:
        data = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype(np.int16)
    else:
        data = w.samples.astype(np.float32)
    wavfile.write(path, SAMPLE_RATE, data)


# -- generators --------------------------------------------------------------


def _n_samples(duration: float) -> int:
    return int(round(duration * SAMPLE_RATE))


def _harmonic_voice(n: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / SAMPLE_RATE
    # slowly wandering f0 inside [80, 300] Hz
    base = rng.uniform(100.0, 220.0)
    n_knots = max(2, int(n / SAMPLE_RATE * 4) + 2)
    knots = base * 2.0 ** rng.uniform(-0.35, 0.35, n_knots)
    f0 = np.clip(np.interp(t, np.linspace(0, t[-1] if n > 1 else 1.0, n_knots), knots), 80.0, 300.0)
    phase = 2.0 * np.pi * np.cumsum(f0) / SAMPLE_RATE
    n_harm = int(rng.integers(5, 13))
    tilt = rng.uniform(0.6, 1.2)
    voice = np.zeros(n)
    for k in range(1, n_harm + 1):
        voice += (k**-tilt) * rng.uniform(0.5, 1.0) * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    # syllable-rate envelope with pauses
    env = np.zeros(n)
    pos = int(rng.integers(0, SAMPLE_RATE // 10))
    while pos < n:
        length = int(rng.uniform(0.12, 0.35) * SAMPLE_RATE)
        seg = np.hanning(length + 2)[1:-1] * rng.uniform(0.4, 1.0)
        end = min(n, pos + length)
        env[pos:end] = seg[: end - pos]
        pos = end + int(rng.uniform(0.03, 0.25) * SAMPLE_RATE)
    return voice * env


def _chirp(n: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / SAMPLE_RATE
    f_start, f_end = rng.uniform(150, 400), rng.uniform(1500, 3500)
    dur = max(t[-1], 1.0 / SAMPLE_RATE)
    return np.sin(2 * np.pi * (f_start * t + 0.5 * (f_end - f_start) / dur * t**2))


def _peak_normalize(x: np.ndarray, peak: float) -> np.ndarray:
    m = np.max(np.abs(x))
    return x if m == 0 else x * (peak / m)


def synth_speech(kind, duration: float, seed: int, path=None) -> Waveform:
    """Speech stand-in; ``harmonic_voice`` peaks between 0.2 and 0.5."""
    kind = SpeechKind(kind)
    if kind is SpeechKind.WAV_FILE:
        if path is None:
            raise ValueError("wav_file speech needs a path")
        return read_wav(path)
    rng = np.random.default_rng(seed)
    n = _n_samples(duration)
    x = _harmonic_voice(n, rng) if kind is SpeechKind.HARMONIC_VOICE else _chirp(n, rng)
    return Waveform(_peak_normalize(x, rng.uniform(0.2, 0.5)))


def synth_noise(kind, duration: float, seed: int, path=None) -> Waveform:
    kind = NoiseKind(kind)
    if kind is NoiseKind.WAV_FILE:
        if path is None:
            raise ValueError("wav_file noise needs a path")
        return read_wav(path)
    rng = np.random.default_rng(seed)
    n = _n_samples(duration)
    if kind is NoiseKind.WHITE:
        x = rng.standard_normal(n)
    elif kind is NoiseKind.PINK:
        spec = np.fft.rfft(rng.standard_normal(n))
        f = np.arange(spec.size, dtype=np.float64)
        f[0] = 1.0
        x = np.fft.irfft(spec / np.sqrt(f), n=n)
    else:
        x = sum(_harmonic_voice(n, np.random.default_rng([seed, k])) for k in range(6))
    return Waveform(_peak_normalize(x, 0.5))


def mix_at_snr(s: Waveform, n: Waveform, snr_db: float) -> tuple[Waveform, Waveform]:
    """Scale ``n`` so the full-utterance SNR is ``snr_db``; reject mixtures that clip."""
    if len(s) != len(n):
        raise ValueError(f"length mismatch: speech {len(s)}, noise {len(n)}")
    es, en = float(np.dot(s.samples, s.samples)), float(np.dot(n.samples, n.samples))
    if es == 0:
        raise ValueError("speech signal is silent")
    if en == 0:
        raise ValueError("noise signal is silent")
    scaled = n.samples * np.sqrt(es / (en * 10.0 ** (snr_db / 10.0)))
    x = s.samples + scaled
    if np.max(np.abs(x)) > 1.0:
        raise MixtureClipped(f"mixture at {snr_db:.2f} dB exceeds full scale (peak {np.max(np.abs(x)):.3f})")
    return Waveform(x, s.sample_rate), Waveform(scaled, s.sample_rate)


def generate_triple(spec: MixtureSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(clean, noise, mixture) as float32 with ``mixture == clean + noise`` exactly in float32."""
    s = synth_speech(spec.speech_kind, spec.duration_s, spec.seed, spec.speech_path)
    n = synth_noise(spec.noise_kind, spec.duration_s, spec.seed + 1_000_003, spec.noise_path)
    _, scaled = mix_at_snr(s, n, spec.snr_db)
    s32 = s.samples.astype(np.float32)
    n32 = scaled.samples.astype(np.float32)
    x32 = s32 + n32
    if np.max(np.abs(x32)) > 1.0:
        raise MixtureClipped("mixture exceeds full scale after float32 rounding")
    return s32, n32, x32


def draw_specs(
    count: int,
    seed: int,
    snr_range=SNR_RANGE_DB,
    duration_s: float = 2.0,
    noise_kinds=(NoiseKind.WHITE, NoiseKind.PINK, NoiseKind.BABBLE_SURROGATE),
) -> list[MixtureSpec]:
    """Draw ``count`` specs with uniform SNR, redrawing any that would clip."""
    rng = np.random.default_rng(seed)
    specs = []
    while len(specs) < count:
        spec = MixtureSpec(
            snr_db=float(rng.uniform(*snr_range)),
            speech_kind=SpeechKind.HARMONIC_VOICE,
            noise_kind=noise_kinds[int(rng.integers(len(noise_kinds)))],
            duration_s=duration_s,
            seed=int(rng.integers(0, 2**31 - 1)),
        )
        try:
            generate_triple(spec)
        except MixtureClipped:
            continue
        specs.append(spec)
    return specs


def assign_splits(count: int, ratios) -> list[str]:
    ratios = [float(r) for r in ratios]
    if not 1 <= len(ratios) <= len(SPLITS) or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must be 1-3 non-negative values summing to 1, got {ratios}")
    counts = [int(round(r * count)) for r in ratios]
    counts[-1] = count - sum(counts[:-1])
    return [name for name, c in zip(SPLITS, counts) for _ in range(c)]


def build_dataset(specs, out_dir, splits=None, ratios=(0.8, 0.2)) -> DatasetManifest:
    """Write ``<split>/{clean,noise,mixture}/<index>_<snr>dB.wav`` and ``manifest.tsv``.

    Specs whose mixture would clip are dropped.
    """
    out_dir = Path(out_dir)
    specs = list(specs)
    splits = splits or assign_splits(len(specs), ratios)
    entries = []
    for index, (spec, split) in enumerate(zip(specs, splits)):
        try:
            clean, noise, mixture = generate_triple(spec)
        except MixtureClipped as exc:
            log.warning("dropping entry %d: %s", index, exc)
            continue
        name = f"{index:04d}_{spec.snr_db:+.2f}dB.wav"
        paths = {}
        for kind, data in (("clean", clean), ("noise", noise), ("mixture", mixture)):
            rel = f"{split}/{kind}/{name}"
            (out_dir / split / kind).mkdir(parents=True, exist_ok=True)
            wavfile.write(out_dir / rel, SAMPLE_RATE, data)
            paths[kind] = rel
        entries.append(
            ManifestEntry(index, split, paths["clean"], paths["noise"], paths["mixture"], spec.snr_db, spec.seed)
        )
    manifest = DatasetManifest(entries, out_dir)
    manifest.write(out_dir / "manifest.tsv")
    return manifest
