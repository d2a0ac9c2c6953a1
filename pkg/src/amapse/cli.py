"""``amapse`` command-line tool.

Set ``AMAPSE_LOG_LEVEL`` (DEBUG, INFO, WARNING, ...) to control log verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from .data import DatasetManifest, WavFormatError, read_wav, write_wav
from .dsp import StftConfig, Waveform, stft
from .losses import LossConfig, LossKind
from .metrics import Estimator, enhance, error_map, evaluate, format_report, to_db
from .nn.checkpoint import CheckpointError, ModelCheckpoint
from .nn.network import NetworkConfig
from .nn.train import TrainConfig, TrainingDiverged, load_utterances, train

log = logging.getLogger("amapse")

_DEFAULTS = TrainConfig()


class CliError(Exception):
    pass


def _ratios(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated ratios, got {text!r}") from exc


def cmd_synth(args) -> int:
    if args.snr_min > args.snr_max:
        raise CliError("--snr-min must not exceed --snr-max")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    specs = data_mod.draw_specs(args.count, args.seed, (args.snr_min, args.snr_max), args.duration)
    manifest = data_mod.build_dataset(specs, out, ratios=args.split_ratios)
    counts = {s: len(manifest.split(s)) for s in data_mod.SPLITS if len(manifest.split(s))}
    snrs = [e.snr_db for e in manifest.entries]
    print(f"wrote {len(manifest)} mixtures to {out} ({', '.join(f'{k}={v}' for k, v in counts.items())})")
    print(f"SNR range {min(snrs):.2f} .. {max(snrs):.2f} dB; manifest {out / 'manifest.tsv'}")
    return 0


def cmd_train(args) -> int:
    manifest = DatasetManifest.read(args.manifest)
    train_m, val_m = manifest.split("train"), manifest.split("val")
    if not len(train_m) or not len(val_m):
        raise CliError(f"{args.manifest} needs both train and val entries")
    cfg = TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
        grad_clip_norm=args.grad_clip, beta=args.beta, seed=args.seed,
    )
    loss_cfg = LossConfig(kind=LossKind(args.loss), beta=args.beta)
    net_cfg = NetworkConfig(hidden_channels=args.hidden, n_blocks=args.blocks)
    stft_cfg = StftConfig.for_bins(net_cfg.n_freq)
    log_path = args.log_out or f"{args.checkpoint_out}.log.tsv"
    try:
        best, rows = train(
            load_utterances(train_m, stft_cfg), load_utterances(val_m, stft_cfg),
            cfg, loss_cfg, net_cfg, log_path,
        )
    except TrainingDiverged as exc:
        rescue = f"{args.checkpoint_out}.lastgood"
        exc.last_good.save(rescue)
        raise CliError(f"{exc}; last good checkpoint saved to {rescue}; try a lower --lr") from exc
    best.save(args.checkpoint_out)
    print(f"best epoch {best.epoch} of {len(rows)}, val loss {best.best_val_loss:.6f}")
    print(f"checkpoint {args.checkpoint_out}; log {log_path}")
    return 0


def _write_grid(path, grid: np.ndarray):
    np.savetxt(path, grid, delimiter=",", fmt="%.9g")


def cmd_enhance(args) -> int:
    mixture = read_wav(args.input)
    ckpt = ModelCheckpoint.load(args.checkpoint)
    enh = enhance(mixture, ckpt, args.estimator)
    write_wav(args.out, Waveform(np.clip(enh.waveform, -1.0, 1.0), mixture.sample_rate))
    if args.export_uncertainty:
        _write_grid(args.export_uncertainty, enh.variance)
    print(f"wrote {args.out} ({len(mixture)} samples, estimator {Estimator(args.estimator).value})")
    return 0


def cmd_evaluate(args) -> int:
    manifest = DatasetManifest.read(args.manifest)
    if args.split:
        manifest = manifest.split(args.split)
    ckpt = ModelCheckpoint.load(args.checkpoint)
    text = format_report(evaluate(manifest, ckpt, args.estimator))
    Path(args.report).write_text(text, encoding="utf-8")
    sys.stdout.write("".join(line + "\n" for line in text.splitlines() if line.startswith("#")))
    return 0


def _write_pgm(path, grid: np.ndarray) -> tuple[float, float]:
    lo, hi = float(grid.min()), float(grid.max())
    scaled = np.zeros_like(grid) if hi == lo else (grid - lo) / (hi - lo)
    pixels = np.round(scaled[::-1] * 255).astype(np.uint8)  # low frequencies at the bottom
    n_rows, n_cols = pixels.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (n_cols, n_rows))
        fh.write(pixels.tobytes())
    return lo, hi


def cmd_spectrogram(args) -> int:
    mixture = read_wav(args.input)
    if args.kind != "magnitude" and not args.checkpoint:
        raise CliError(f"--kind {args.kind} needs --checkpoint")
    if args.kind == "error" and not args.clean:
        raise CliError("--kind error needs --clean reference")
    if args.checkpoint:
        ckpt = ModelCheckpoint.load(args.checkpoint)
        cfg = StftConfig.for_bins(ckpt.config.n_freq)
    else:
        cfg = StftConfig()
    x_mag = np.abs(stft(mixture, cfg).data)
    if args.kind == "magnitude":
        grid = x_mag
    else:
        enh = enhance(mixture, ckpt, Estimator.A_MAP)
        grid = {
            "mask": lambda: enh.wiener,
            "uncertainty": lambda: enh.variance,
            "amap": lambda: enh.gain * x_mag,
            "wf": lambda: enh.wiener * x_mag,
            "error": lambda: error_map(np.abs(stft(read_wav(args.clean), cfg).data), enh.wiener * x_mag),
        }[args.kind]()
    grid_db = to_db(grid)
    if args.format == "csv":
        _write_grid(args.out, grid_db)
        print(f"wrote {args.out}: {grid_db.shape[0]} rows x {grid_db.shape[1]} columns (dB)")
    else:
        lo, hi = _write_pgm(args.out, grid_db)
        print(f"wrote {args.out}: range {lo:.2f} dB (black) .. {hi:.2f} dB (white)")
    return 0


def cmd_debug_checkpoint(args) -> int:
    cfg = NetworkConfig(hidden_channels=args.hidden, n_blocks=args.blocks)
    if args.kind == "identity":
        ckpt = ModelCheckpoint.constant_heads(cfg, mask_bias=40.0, logvar_bias=0.0)
    elif args.kind == "zero-lambda":
        ckpt = ModelCheckpoint.constant_heads(cfg, mask_bias=0.0, logvar_bias=-200.0)
    else:
        ckpt = ModelCheckpoint.initial(cfg, seed=args.seed)
    ckpt.save(args.out)
    print(f"wrote {args.kind} checkpoint {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="amapse", description=__doc__, formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic mixture dataset", formatter_class=fmt)
    p.add_argument("--count", type=int, default=200, help="number of mixtures")
    p.add_argument("--snr-min", type=float, default=data_mod.SNR_RANGE_DB[0], help="lowest SNR in dB")
    p.add_argument("--snr-max", type=float, default=data_mod.SNR_RANGE_DB[1], help="highest SNR in dB")
    p.add_argument("--duration", type=float, default=2.0, help="utterance length in seconds")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--split-ratios", type=_ratios, default=(0.8, 0.2), help="train,val[,test] fractions")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the masking network", formatter_class=fmt)
    p.add_argument("--manifest", required=True, help="manifest.tsv with train and val entries")
    p.add_argument("--loss", choices=[k.value for k in LossKind], default=LossKind.HYBRID.value, help="training objective")
    p.add_argument("--beta", type=float, default=_DEFAULTS.beta, help="log-posterior weight in the hybrid loss")
    p.add_argument("--epochs", type=int, default=_DEFAULTS.epochs, help="maximum epochs")
    p.add_argument("--batch-size", type=int, default=_DEFAULTS.batch_size, help="utterances per batch")
    p.add_argument("--lr", type=float, default=_DEFAULTS.lr, help="Adam learning rate")
    p.add_argument("--grad-clip", type=float, default=_DEFAULTS.grad_clip_norm, help="maximum global gradient norm")
    p.add_argument("--hidden", type=int, default=64, help="hidden channels")
    p.add_argument("--blocks", type=int, default=3, help="dilated conv blocks")
    p.add_argument("--checkpoint-out", required=True, help="checkpoint path")
    p.add_argument("--log-out", default=None, help="per-epoch log; None writes <checkpoint-out>.log.tsv")
    p.add_argument("--seed", type=int, default=_DEFAULTS.seed, help="init and shuffling seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enhance", help="enhance one WAV file", formatter_class=fmt)
    p.add_argument("--in", dest="input", required=True, help="noisy 16 kHz mono WAV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--estimator", choices=[e.value for e in Estimator], default=Estimator.A_MAP.value)
    p.add_argument("--out", required=True, help="enhanced WAV (float32)")
    p.add_argument("--export-uncertainty", default=None, help="write the F x T variance map as CSV")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("evaluate", help="score a checkpoint on a manifest", formatter_class=fmt)
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--estimator", choices=[e.value for e in Estimator], default=Estimator.A_MAP.value)
    p.add_argument("--split", choices=data_mod.SPLITS, default=None, help="restrict to one split (default: all)")
    p.add_argument("--report", required=True, help="report path (TSV + summary)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("spectrogram", help="export a dB-scaled time-frequency map", formatter_class=fmt)
    p.add_argument("--in", dest="input", required=True, help="noisy 16 kHz mono WAV")
    p.add_argument("--checkpoint", default=None, help="needed for every kind except magnitude")
    p.add_argument("--clean", default=None, help="clean reference WAV (kind=error)")
    p.add_argument(
        "--kind", choices=["magnitude", "mask", "uncertainty", "wf", "amap", "error"], default="magnitude"
    )
    p.add_argument("--format", choices=["pgm", "csv"], default="pgm")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spectrogram)

    p = sub.add_parser("debug-checkpoint", help="write an untrained or constant-output checkpoint", formatter_class=fmt)
    p.add_argument("--kind", choices=["identity", "zero-lambda", "random"], default="identity")
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--blocks", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_debug_checkpoint)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("AMAPSE_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, WavFormatError, CheckpointError, FileNotFoundError, ValueError, OSError) as exc:
        print(f"amapse {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
