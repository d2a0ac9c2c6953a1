"""Exit criteria, one test each; verdicts are listed in the terminal summary.

Criteria 7 and 8 share one desk-scale training run (200 synthetic utterances,
default recipe, hybrid loss), which takes a few minutes on a laptop CPU.
"""

import hashlib
import math
import time

import numpy as np
import pytest

from amapse.cli import main
from amapse.data import DatasetManifest, read_wav
from amapse.dsp import StftConfig, Waveform, istft, stft
from amapse.losses import LossConfig, LossKind, compute_loss, loss_hybrid, loss_log_posterior, loss_mse, loss_si_sdr
from amapse.metrics import Estimator, enhance, error_map, evaluate, si_sdr_db, uncertainty_error_correlation
from amapse.nn import MaskNetwork, NetworkConfig, features
from amapse.nn.checkpoint import ModelCheckpoint
from amapse.nn.optim import AdamState, PlateauSchedule, adam_step, clip_grad_norm
from amapse.nn.train import TrainConfig
from amapse.statmodel import MaskPair, VariancePair, amap_gain_from_variance, rician_logpdf, verify_mmse_error

GOLDEN = (math.sqrt(5) - 1) / 2


def golden_max(fn, lo, hi, tol=1e-12):
    a, b = lo, hi
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol * max(1.0, abs(b)):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def test_ac1_stft_roundtrip(acceptance_line):
    rng = np.random.default_rng(1)
    signals = [rng.standard_normal(int(rng.uniform(1.0, 3.0) * 16000)) for _ in range(20)]
    start = time.perf_counter()
    worst = max(
        10 * np.log10(np.sum((istft(stft(Waveform(x))).samples - x) ** 2) / np.sum(x**2)) for x in signals
    )
    elapsed = time.perf_counter() - start
    ok = worst <= -100 and elapsed < 1.0
    acceptance_line("AC1 STFT round-trip", ok, f"worst {worst:.1f} dB, {elapsed:.3f} s")
    assert ok


def test_ac2_mmse_error_equals_posterior_variance(acceptance_line):
    start = time.perf_counter()
    results = []
    for s2, n2, lam in [(1.0, 1.0, 0.5), (4.0, 1.0, 0.8)]:
        rep = verify_mmse_error(VariancePair(np.array([s2]), np.array([n2])), n_draws=100_000, seed=7)
        results.append((rep["empirical_mse"], lam, abs(rep["empirical_mse"] - lam) / lam))
    elapsed = time.perf_counter() - start
    ok = all(r[2] <= 0.02 for r in results) and elapsed < 10
    detail = ", ".join(f"{e:.4f} vs {l}" for e, l, _ in results) + f", {elapsed:.2f} s"
    acceptance_line("AC2 Monte-Carlo MMSE error", ok, detail)
    assert ok


def test_ac3_amap_matches_rician_mode(acceptance_line):
    start = time.perf_counter()
    worst, checked = 0.0, 0
    for W in np.linspace(0.1, 0.9, 5):
        for lam in np.linspace(0.01, 1.0, 5):
            for xm in np.linspace(0.5, 4.0, 5):
                # Rician non-centrality (W|X|)^2 / (lam / 2)
                if 2 * W * W * xm * xm / lam < 3:
                    continue
                checked += 1
                hi = W * xm + 10 * math.sqrt(lam)
                mode = golden_max(lambda s: rician_logpdf(s, W, lam, xm), 1e-9, hi)
                approx = amap_gain_from_variance(W, lam, xm) * xm
                worst = max(worst, abs(approx - mode) / mode)
    elapsed = time.perf_counter() - start
    ok = worst <= 0.02 and elapsed < 5 and checked > 0
    acceptance_line("AC3 A-MAP vs Rician mode", ok, f"{checked} grid points, worst {100 * worst:.2f}%, {elapsed:.2f} s")
    assert ok


def test_ac4_loss_identities(acceptance_line):
    rng = np.random.default_rng(4)
    cfg = StftConfig.for_bins(17)
    s = rng.standard_normal(200)
    X = stft(Waveform(s + 0.4 * rng.standard_normal(200)), cfg)
    S = stft(Waveform(s), cfg)
    m = MaskPair(rng.uniform(0.05, 0.95, X.shape), rng.normal(size=X.shape))
    unit = MaskPair(m.wiener, np.zeros(X.shape))
    bit_equal = loss_log_posterior(unit, X, S).item() == loss_mse(unit, X, S).item()

    lp = loss_log_posterior(m, X, S).item()
    s_hat = istft(X.with_data(amap_gain_from_variance(m.wiener, m.variance, np.abs(X.data)) * X.data)).samples
    sd = loss_si_sdr(s_hat, s).item()
    h1 = loss_hybrid(m, X, S, s, LossConfig(beta=1.0)).item()
    h0 = loss_hybrid(m, X, S, s, LossConfig(beta=0.0)).item()
    endpoint_err = max(abs(h1 - lp) / abs(lp), abs(h0 - sd) / abs(sd))

    grid = np.exp(np.linspace(np.log(1e-5), np.log(1e4), 200_001))
    r2 = rng.uniform(1e-4, 1e3, size=100)
    optimum_err = max(abs(grid[np.argmin(np.log(grid) + r / grid)] - r) / r for r in r2)

    ok = bit_equal and endpoint_err <= 1e-12 and optimum_err <= 1e-3
    acceptance_line(
        "AC4 loss identities", ok,
        f"lambda=1 bit-equal {bit_equal}, endpoint rel err {endpoint_err:.1e}, grid optimum rel err {optimum_err:.1e}",
    )
    assert ok


def test_ac5_gradients_through_network(acceptance_line):
    rng = np.random.default_rng(5)
    cfg = StftConfig.for_bins(9)
    s = rng.standard_normal(40)
    X = stft(Waveform(s + 0.5 * rng.standard_normal(40)), cfg)
    S = stft(Waveform(s), cfg)
    assert X.shape == (9, 6)
    net_cfg = NetworkConfig(n_freq=9, hidden_channels=8, n_blocks=1)
    net = MaskNetwork(net_cfg, seed=5)
    w0 = net.get_flat() + 0.1 * rng.standard_normal(net_cfg.n_parameters())
    feats = features(np.abs(X.data))
    start = time.perf_counter()
    errors = {}
    for kind in LossKind:
        loss_cfg = LossConfig(kind=kind)

        def value(w):
            net.set_flat(w)
            return compute_loss(net.forward(feats), X, S, s, loss_cfg)

        value(w0).backward()
        grad = net.flat_grad()
        fd = np.empty_like(w0)
        h = 1e-4
        for i in range(w0.size):
            e = np.zeros_like(w0)
            e[i] = h
            fd[i] = (value(w0 + e).item() - value(w0 - e).item()) / (2 * h)
        errors[kind.value] = np.max(np.abs(grad - fd)) / np.max(np.abs(fd))
    elapsed = time.perf_counter() - start
    ok = max(errors.values()) <= 1e-4 and elapsed < 30
    acceptance_line(
        "AC5 gradient suite", ok, ", ".join(f"{k} {v:.1e}" for k, v in errors.items()) + f", {elapsed:.1f} s"
    )
    assert ok


def test_ac6_si_sdr_values(acceptance_line):
    hand = si_sdr_db([1.0, 0.0], [1.0, 1.0])
    rng = np.random.default_rng(6)
    s = rng.standard_normal(1000)
    s_hat = s + 0.5 * rng.standard_normal(1000)
    base = si_sdr_db(s_hat, s)
    drift = max(abs(si_sdr_db(c * s_hat, s) - base) for c in np.geomspace(0.1, 10, 41))
    ok = hand == 0.0 and drift <= 1e-6
    acceptance_line("AC6 SI-SDR values", ok, f"hand value {hand} dB, scale drift {drift:.1e} dB")
    assert ok


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    start = time.perf_counter()
    assert main(["synth", "--count", "200", "--seed", "0", "--out-dir", str(root / "data")]) == 0
    assert main(["train", "--manifest", str(root / "data" / "manifest.tsv"), "--loss", "hybrid",
                 "--checkpoint-out", str(root / "hybrid.ckpt"), "--seed", "0"]) == 0
    elapsed = time.perf_counter() - start
    manifest = DatasetManifest.read(root / "data" / "manifest.tsv")
    return manifest, ModelCheckpoint.load(root / "hybrid.ckpt"), elapsed


def test_ac7_desk_scale_training(desk_run, acceptance_line):
    manifest, ckpt, elapsed = desk_run
    val = manifest.split("val")
    start = time.perf_counter()
    amap = evaluate(val, ckpt, Estimator.A_MAP)["summary"]["sisdr_improvement"][0]
    wf = evaluate(val, ckpt, Estimator.WF)["summary"]["sisdr_improvement"][0]
    elapsed += time.perf_counter() - start
    snrs = [e.snr_db for e in manifest.entries]
    ok = len(manifest) == 200 and min(snrs) >= -5 and max(snrs) <= 20
    ok = ok and amap >= 3.0 and amap >= wf - 0.2 and elapsed <= 1800
    acceptance_line(
        "AC7 desk-scale training", ok,
        f"A-MAP SI-SDRi {amap:.2f} dB, WF SI-SDRi {wf:.2f} dB, best epoch {ckpt.epoch}, {elapsed / 60:.1f} min",
    )
    assert ok


def test_ac8_uncertainty_tracks_error(desk_run, acceptance_line):
    manifest, ckpt, _ = desk_run
    val = manifest.split("val")
    cfg = StftConfig.for_bins(ckpt.config.n_freq)
    net = ckpt.network()
    start = time.perf_counter()
    lams, errs = [], []
    for e in val.entries:
        mix = read_wav(val.resolve(e.mixture_path))
        clean = read_wav(val.resolve(e.clean_path))
        enh = enhance(mix, ckpt, Estimator.WF, net)
        lams.append(enh.variance.ravel())
        errs.append(error_map(np.abs(stft(clean, cfg).data), enh.wiener * np.abs(stft(mix, cfg).data)).ravel())
    lam, err = np.concatenate(lams), np.concatenate(errs)
    trained = uncertainty_error_correlation(lam, err)["spearman"]
    control = uncertainty_error_correlation(np.random.default_rng(8).permutation(lam), err)["spearman"]
    elapsed = time.perf_counter() - start
    ok = trained > 0.3 and abs(control) < 0.1 and elapsed < 60
    acceptance_line(
        "AC8 uncertainty vs error", ok,
        f"Spearman trained {trained:.3f}, randomized control {control:.3f}, {lam.size} bins, {elapsed:.1f} s",
    )
    assert ok


def _tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_ac9_determinism(tmp_path, acceptance_line):
    digests = []
    for run in ("a", "b"):
        root = tmp_path / run
        main(["synth", "--count", "20", "--seed", "3", "--duration", "1.0", "--out-dir", str(root / "data")])
        main(["train", "--manifest", str(root / "data" / "manifest.tsv"), "--epochs", "2", "--hidden", "16",
              "--seed", "3", "--checkpoint-out", str(root / "m.ckpt")])
        main(["evaluate", "--manifest", str(root / "data" / "manifest.tsv"), "--checkpoint", str(root / "m.ckpt"),
              "--report", str(root / "report.tsv")])
        digests.append(
            (
                _tree_digest(root / "data"),
                (root / "m.ckpt").read_bytes(),
                (root / "m.ckpt.log.tsv").read_bytes(),
                (root / "report.tsv").read_bytes(),
            )
        )
    same = [x == y for x, y in zip(*digests)]
    ok = all(same)
    acceptance_line("AC9 determinism", ok, "manifest/wavs, checkpoint, epoch log, report identical: " + str(same))
    assert ok


def test_ac10_training_recipe(acceptance_line):
    cfg = TrainConfig()
    checks = {}
    checks["defaults"] = (cfg.epochs, cfg.batch_size, cfg.lr, cfg.grad_clip_norm, cfg.beta) == (50, 16, 1e-3, 5.0, 0.01)

    sched = PlateauSchedule(cfg.lr, cfg.lr_halve_patience, cfg.early_stop_patience)
    lrs, stops = [], []
    for _ in range(11):
        stops.append(sched.update(5.0))
        lrs.append(sched.lr)
    checks["halving"] = lrs[2] == 1e-3 and lrs[3] == 5e-4
    checks["early_stop"] = stops == [False] * 10 + [True]

    clipped, norm = clip_grad_norm(np.array([6.0, 8.0]), cfg.grad_clip_norm)
    checks["clip"] = norm == 10.0 and np.linalg.norm(clipped) == pytest.approx(5.0)

    g = np.array([0.3, -2.0])
    p, st = adam_step(np.zeros(2), g, AdamState.zeros(2), cfg.lr)
    m, v = 0.1 * g, 0.001 * g * g
    expected = -cfg.lr * (m / 0.1) / (np.sqrt(v / 0.001) + 1e-8)
    checks["adam"] = np.allclose(p, expected, rtol=1e-15, atol=0) and st.step == 1
    ok = all(checks.values())
    acceptance_line("AC10 training recipe", ok, ", ".join(f"{k} {v}" for k, v in checks.items()))
    assert ok
