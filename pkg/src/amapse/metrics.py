"""Evaluation measures and the per-utterance report."""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .data import DatasetManifest, read_wav
from .dsp import StftConfig, Waveform, istft_array, stft
from .losses import loss_si_sdr
from .nn.checkpoint import ModelCheckpoint
from .nn.network import features
from .statmodel import amap_gain_from_variance

SI_SDR_CAP_DB = 60.0
SEG_SNR_RANGE_DB = (-10.0, 35.0)
SILENT_FRAME_ENERGY = 1e-8
ERROR_FLOOR = 1e-8
Z_95 = 1.96

REPORT_COLUMNS = (
    "index",
    "mixture_path",
    "snr_db",
    "sisdr_noisy",
    "sisdr_enhanced",
    "sisdr_improvement",
    "segsnr_noisy",
    "segsnr_enhanced",
    "spearman",
    "pearson_log",
)


class Estimator(str, enum.Enum):
    WF = "wf"
    A_MAP = "amap"


def _samples(w) -> np.ndarray:
    return w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)


def si_sdr_db(s_hat, s) -> float:
    """SI-SDR in dB, capped to +/-60 dB so perfect or orthogonal estimates stay finite."""
    with np.errstate(divide="ignore", invalid="ignore"):
        value = -loss_si_sdr(_samples(s_hat), _samples(s), eps=0.0).item()
    if math.isnan(value):
        return -SI_SDR_CAP_DB
    return float(np.clip(value, -SI_SDR_CAP_DB, SI_SDR_CAP_DB))


def seg_snr_db(s_hat, s, frame_len: int = 512, hop: int = 256) -> float:
    """Mean clamped per-frame SNR over frames whose reference is not silent."""
    s_hat, s = _samples(s_hat), _samples(s)
    if s_hat.shape != s.shape:
        raise ValueError(f"length mismatch: {s_hat.shape} vs {s.shape}")
    lo, hi = SEG_SNR_RANGE_DB
    values = []
    for start in range(0, max(len(s) - frame_len, 0) + 1, hop):
        ref = s[start : start + frame_len]
        e_ref = float(np.dot(ref, ref))
        if e_ref < SILENT_FRAME_ENERGY:
            continue
        diff = ref - s_hat[start : start + frame_len]
        e_err = float(np.dot(diff, diff))
        snr = hi if e_err == 0 else 10.0 * math.log10(e_ref / e_err)
        values.append(min(max(snr, lo), hi))
    if not values:
        raise ValueError("every frame of the reference is silent")
    return float(np.mean(values))


def error_map(s_mag, s_hat_mag) -> np.ndarray:
    s_mag, s_hat_mag = np.asarray(s_mag), np.asarray(s_hat_mag)
    if s_mag.shape != s_hat_mag.shape:
        raise ValueError(f"shape mismatch: {s_mag.shape} vs {s_hat_mag.shape}")
    return np.abs(s_hat_mag - s_mag)


def to_db(x, eps: float = 1e-8) -> np.ndarray:
    return 20.0 * np.log10(np.abs(x) + eps)


def uncertainty_error_correlation(lambda_map, err_map, floor: float = ERROR_FLOOR) -> dict:
    """Pearson correlation of log-uncertainty vs log-error, and Spearman rank correlation."""
    lam = np.asarray(lambda_map, dtype=np.float64).ravel()
    err = np.asarray(err_map, dtype=np.float64).ravel()
    if lam.shape != err.shape:
        raise ValueError(f"shape mismatch: {np.shape(lambda_map)} vs {np.shape(err_map)}")
    if np.ptp(lam) == 0 or np.ptp(err) == 0:
        raise ValueError("correlation undefined for a constant map")
    log_lam = np.log(np.maximum(lam, floor))
    log_err = np.log(np.maximum(err, floor))
    return {
        "pearson_log": float(np.corrcoef(log_lam, log_err)[0, 1]),
        "spearman": float(stats.spearmanr(lam, err)[0]),
    }


@dataclass
class Enhancement:
    waveform: np.ndarray
    wiener: np.ndarray
    variance: np.ndarray
    gain: np.ndarray


def enhance(mixture: Waveform, checkpoint: ModelCheckpoint, estimator=Estimator.A_MAP, net=None) -> Enhancement:
    """Run the network on a noisy waveform and resynthesize with the noisy phase."""
    estimator = Estimator(estimator)
    net = net or checkpoint.network()
    cfg = StftConfig.for_bins(checkpoint.config.n_freq)
    X = stft(mixture, cfg)
    x_mag = np.abs(X.data)
    out = net.forward(features(x_mag))
    wiener, variance = out.wiener.values, np.exp(out.log_var.values)
    gain = wiener if estimator is Estimator.WF else amap_gain_from_variance(wiener, variance, x_mag)
    return Enhancement(istft_array(gain * X.data, cfg, X.length), wiener, variance, gain)


def _ci(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(Z_95 * values.std(ddof=1) / math.sqrt(values.size))


def evaluate(manifest: DatasetManifest, checkpoint: ModelCheckpoint, estimator=Estimator.A_MAP) -> dict:
    """Per-utterance scores plus mean and 95% interval (mean +/- 1.96 standard errors)."""
    estimator = Estimator(estimator)
    net = checkpoint.network()
    cfg = StftConfig.for_bins(checkpoint.config.n_freq)
    rows = []
    for entry in manifest.entries:
        mixture = read_wav(manifest.resolve(entry.mixture_path))
        clean = read_wav(manifest.resolve(entry.clean_path))
        enh = enhance(mixture, checkpoint, estimator, net)
        s_mag = np.abs(stft(clean, cfg).data)
        wf_mag = enh.wiener * np.abs(stft(mixture, cfg).data)
        try:
            corr = uncertainty_error_correlation(enh.variance, error_map(s_mag, wf_mag))
        except ValueError:
            corr = {"spearman": float("nan"), "pearson_log": float("nan")}
        noisy_sdr = si_sdr_db(mixture, clean)
        enh_sdr = si_sdr_db(enh.waveform, clean)
        rows.append(
            {
                "index": entry.index,
                "mixture_path": entry.mixture_path,
                "snr_db": entry.snr_db,
                "sisdr_noisy": noisy_sdr,
                "sisdr_enhanced": enh_sdr,
                "sisdr_improvement": enh_sdr - noisy_sdr,
                "segsnr_noisy": seg_snr_db(mixture, clean),
                "segsnr_enhanced": seg_snr_db(enh.waveform, clean),
                "spearman": corr["spearman"],
                "pearson_log": corr["pearson_log"],
            }
        )
    if not rows:
        raise ValueError("manifest has no entries to evaluate")
    summary = {}
    for col in REPORT_COLUMNS[3:]:
        vals = [r[col] for r in rows if not math.isnan(r[col])]
        summary[col] = _ci(vals) if vals else (float("nan"), float("nan"))
    return {"estimator": estimator.value, "rows": rows, "summary": summary}


def format_report(report: dict) -> str:
    """Tab-separated per-utterance table followed by a ``#``-prefixed summary block."""
    buf = io.StringIO()
    buf.write("\t".join(REPORT_COLUMNS) + "\n")
    for r in report["rows"]:
        cells = []
        for col in REPORT_COLUMNS:
            v = r[col]
            cells.append(f"{v:.6f}" if isinstance(v, float) else str(v))
        buf.write("\t".join(cells) + "\n")
    buf.write(f"# estimator: {report['estimator']}\n")
    buf.write(f"# utterances: {len(report['rows'])}\n")
    for col, (mean, half) in report["summary"].items():
        buf.write(f"# {col}: {mean:.4f} +/- {half:.4f}\n")
    return buf.getvalue()
