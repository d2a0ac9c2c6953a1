import numpy as np
import pytest

from amapse.nn.optim import AdamState, PlateauSchedule, adam_step, clip_grad_norm
from amapse.nn.train import TrainConfig


def test_paper_recipe_defaults():
    cfg = TrainConfig()
    assert (cfg.epochs, cfg.batch_size, cfg.lr, cfg.grad_clip_norm) == (50, 16, 0.001, 5.0)
    assert (cfg.lr_halve_patience, cfg.early_stop_patience, cfg.beta) == (3, 10, 0.01)


def test_adam_first_step_is_lr_times_sign(rng):
    g = rng.choice([-1.0, 1.0], size=10) * 10 ** rng.uniform(-2, 3, size=10)
    p, state = adam_step(np.zeros(10), g, AdamState.zeros(10), lr=1e-3)
    np.testing.assert_allclose(p, -1e-3 * np.sign(g), rtol=1e-5)
    assert state.step == 1


def test_adam_zero_gradient_is_noop():
    p0 = np.arange(4.0)
    p, _ = adam_step(p0, np.zeros(4), AdamState.zeros(4), lr=0.1)
    np.testing.assert_array_equal(p, p0)


def test_adam_reference_two_steps():
    # hand-rolled with beta1=0.9, beta2=0.999, eps=1e-8
    p, st = adam_step(np.array([1.0]), np.array([2.0]), AdamState.zeros(1), 0.1)
    p, st = adam_step(p, np.array([-1.0]), st, 0.1)
    m = 0.9 * 0.2 + 0.1 * -1.0
    v = 0.999 * 0.004 + 0.001 * 1.0
    p1 = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8)
    expected = p1 - 0.1 * (m / (1 - 0.81)) / (np.sqrt(v / (1 - 0.999**2)) + 1e-8)
    assert p[0] == pytest.approx(expected, rel=1e-14)


def test_adam_quadratic_convergence():
    A = np.diag([1.0, 10.0])
    p = np.array([3.0, -2.0])
    state = AdamState.zeros(2)
    losses = []
    for _ in range(100):
        losses.append(0.5 * p @ A @ p)
        p, state = adam_step(p, A @ p, state, lr=0.05)
    tail = np.array(losses[10:])
    assert np.all(np.diff(tail) < 0)
    assert losses[-1] < 0.05 * losses[0]


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step(np.zeros(3), np.zeros(2), AdamState.zeros(3), 0.1)


def test_clip_scales_to_max():
    g = np.array([6.0, 8.0])
    clipped, norm = clip_grad_norm(g, 5.0)
    assert norm == 10.0
    np.testing.assert_allclose(clipped, g * 0.5)


def test_clip_noop_within_bound():
    g = np.array([1.8, 2.4])
    clipped, norm = clip_grad_norm(g, 5.0)
    assert norm == pytest.approx(3.0)
    assert clipped is g


def test_clip_random(rng):
    for _ in range(50):
        g = rng.normal(size=100) * rng.uniform(0.01, 3)
        clipped, norm = clip_grad_norm(g, 5.0)
        assert np.linalg.norm(clipped) == pytest.approx(min(norm, 5.0), abs=1e-9)
        np.testing.assert_allclose(clipped / np.linalg.norm(clipped), g / np.linalg.norm(g))


def test_lr_halves_after_three_stagnant_epochs():
    sched = PlateauSchedule(lr=1e-3)
    lrs = []
    for _ in range(8):
        sched.update(5.0)
        lrs.append(sched.lr)
    # epoch 1 sets the best; epochs 2-4 stagnate -> halved after epoch 4, again after 7
    assert lrs == [1e-3, 1e-3, 1e-3, 5e-4, 5e-4, 5e-4, 2.5e-4, 2.5e-4]


def test_improvement_resets_patience():
    sched = PlateauSchedule(lr=1.0)
    for loss in [5, 5, 5, 4, 4, 4]:
        sched.update(loss)
    assert sched.lr == 1.0
    sched.update(4)
    assert sched.lr == 0.5


def test_early_stop_after_ten_stagnant_epochs():
    sched = PlateauSchedule(lr=1.0)
    stops = [sched.update(1.0) for _ in range(11)]
    assert stops == [False] * 10 + [True]
