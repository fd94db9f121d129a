import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gcrnn import tensor as T
from gcrnn import training
from gcrnn.checkpoint import ModelCheckpoint, load_checkpoint, save_checkpoint
from gcrnn.features import FeatureStats
from gcrnn.model import ModelConfig, build_sed_model, build_tagging_model
from gcrnn.training import (
    SGD,
    Adam,
    BalancedBatchSampler,
    TrainConfig,
    TrainingDiverged,
    WeakLabelSet,
    balanced_batches,
    bce_loss,
    train,
    train_step,
)

TINY_TAG = ModelConfig.tagging(n_classes=4, n_bins=16, channels=(2, 2, 3, 3))
TINY_SED = ModelConfig.sed(n_classes=4, n_bins=16, channels=(2, 2, 2, 2), gru_hidden=3)


# ---------------------------------------------------------------- labels and sampler


def test_weak_label_validation():
    WeakLabelSet("a", [0, 1, 1])
    with pytest.raises(ValueError):
        WeakLabelSet("a", [0, 2])


def test_every_batch_holds_every_present_class(rng):
    Y = (rng.uniform(size=(200, 6)) < 0.1).astype(np.int8)
    Y[0, :] = 0
    Y[1, 5] = 1
    present = np.flatnonzero(Y.sum(0))
    for idx in balanced_batches(Y, 8, seed=3, n_batches=300):
        assert set(present) <= set(np.flatnonzero(Y[idx.indices].sum(0)))
        assert len(idx.indices) == 8


def test_sampler_error_gives_guidance():
    Y = np.eye(5, dtype=np.int8)
    with pytest.raises(ValueError, match="batch_size >= 5"):
        BalancedBatchSampler(Y, 4)


def test_sampler_deterministic_given_seed(rng):
    Y = (rng.uniform(size=(50, 5)) < 0.3).astype(np.int8)
    Y[np.arange(5), np.arange(5)] = 1
    a = [b.indices for b in balanced_batches(Y, 10, seed=7, n_batches=20)]
    b = [b.indices for b in balanced_batches(Y, 10, seed=7, n_batches=20)]
    c = [b.indices for b in balanced_batches(Y, 10, seed=8, n_batches=20)]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not all(np.array_equal(x, y) for x, y in zip(a, c))


def test_default_epoch_length():
    Y = np.eye(3, dtype=np.int8).repeat(7, axis=0)  # 21 clips
    assert len(balanced_batches(Y, 4, seed=0)) == math.ceil(21 / 4)


def test_uniform_two_class_frequency():
    Y = np.array([[1, 0], [0, 1]] * 10, dtype=np.int8)
    s = BalancedBatchSampler(Y, 4, seed=0)
    counts = np.zeros(2)
    for _ in range(10_000):
        counts += Y[s.next_batch()].sum(0)
    freq = counts / counts.sum()
    assert np.all(np.abs(freq - 0.5) <= 0.02)


def test_frequency_follows_stated_rule():
    counts = np.array([400, 200, 100, 40, 10, 3])
    Y = np.zeros((counts.sum(), len(counts)), dtype=np.int8)
    Y[np.arange(counts.sum()), np.repeat(np.arange(len(counts)), counts)] = 1
    B = 32
    s = BalancedBatchSampler(Y, B, seed=1)
    tally = np.zeros(len(counts))
    n = 10_000
    for _ in range(n):
        tally += Y[s.next_batch()].sum(0)
    empirical = tally / (n * B)
    np.testing.assert_allclose(empirical, s.expected_class_frequency(), rtol=0.03)
    target = np.maximum(counts / counts.sum(), 1.0 / B)
    assert np.all(np.abs(empirical - target) / target <= 0.10)


# ---------------------------------------------------------------- loss


def test_bce_perfect_prediction():
    y = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 0.0]])
    assert bce_loss(y, y).item() <= 1e-6


def test_bce_half_is_log2():
    assert bce_loss(np.full((3, 4), 0.5), np.eye(3, 4)).item() == pytest.approx(math.log(2), abs=1e-15)


def test_bce_scalar_recompute(rng):
    p = rng.uniform(0.01, 0.99, size=(5, 7))
    y = (rng.uniform(size=p.shape) < 0.4).astype(float)
    ref = 0.0
    for i in range(5):
        for j in range(7):
            ref -= y[i, j] * math.log(p[i, j]) + (1 - y[i, j]) * math.log(1 - p[i, j])
    assert abs(bce_loss(p, y).item() - ref / 35) <= 1e-12


def test_bce_shape_mismatch():
    with pytest.raises(ValueError):
        bce_loss(np.full((2, 3), 0.5), np.zeros((3, 2)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_bce_nonnegative(seed):
    rng = np.random.default_rng(seed)
    p = rng.uniform(size=(3, 4))
    y = rng.integers(0, 2, size=(3, 4))
    assert bce_loss(p, y).item() >= 0.0


# ---------------------------------------------------------------- optimisation


def tiny_set(rng, n=8, k=4, frames=32, bins=16):
    Y = np.zeros((n, k), dtype=np.int8)
    Y[np.arange(n), np.arange(n) % k] = 1
    X = rng.normal(size=(n, frames, bins))
    for i in range(n):
        X[i, :, 3 * (i % k)] += 3.0
    return X, Y


@pytest.mark.parametrize("opt_name", ["adam", "sgd"])
def test_zero_lr_keeps_parameters(rng, opt_name):
    X, Y = tiny_set(rng)
    net = build_tagging_model(TINY_TAG, seed=0)
    before = {k: v.data.copy() for k, v in net.params.items()}
    train(net, X, Y, TrainConfig(lr=0.0, steps=3, batch_size=4, optimizer=opt_name))
    assert all(np.array_equal(before[k], net.params[k].data) for k in before)


def test_same_seed_same_loss_curve(rng, tmp_path):
    X, Y = tiny_set(rng)
    runs = []
    for i in range(2):
        net = build_tagging_model(TINY_TAG, seed=0)
        log = tmp_path / f"log{i}.csv"
        runs.append(train(net, X, Y, TrainConfig(lr=1e-2, steps=4, batch_size=4, seed=5), log_path=log).losses)
        rows = list(csv.reader(open(log)))
        assert rows[0] == ["step", "loss", "wallclock_ms"] and len(rows) == 5
    assert runs[0] == runs[1]


@pytest.mark.parametrize("cfg", [TINY_TAG, TINY_SED], ids=["tagging", "sed"])
def test_small_step_decreases_loss(rng, cfg):
    X, Y = tiny_set(rng)
    net = (build_tagging_model if cfg.head == "attention_pool" else build_sed_model)(cfg, seed=2)
    opt = SGD(net.trainable(), lr=1e-4)
    before = train_step(net, opt, X, Y)  # loss at the start, then one step
    after = bce_loss(net.forward(T.Tensor(X), training=True).clip, Y).item()
    assert after < before


def test_checkpoint_schedule(rng):
    X, Y = tiny_set(rng)
    net = build_tagging_model(TINY_TAG)
    res = train(net, X, Y, TrainConfig(lr=1e-3, steps=7, batch_size=4, checkpoint_every=3))
    assert [c.step for c in res.checkpoints] == [3, 6, 7]
    assert len(res.losses) == 7


def test_divergence_aborts_with_last_good_state(rng, monkeypatch):
    X, Y = tiny_set(rng)
    net = build_tagging_model(TINY_TAG)
    real = training.train_step
    calls = {"n": 0}

    def flaky(*a):
        calls["n"] += 1
        return math.nan if calls["n"] == 3 else real(*a)

    monkeypatch.setattr(training, "train_step", flaky)
    with pytest.raises(TrainingDiverged) as info:
        train(net, X, Y, TrainConfig(lr=1e-3, steps=5, batch_size=4, checkpoint_every=1))
    err = info.value
    assert err.step == 3 and err.last_checkpoint.step == 2
    good = err.result.checkpoints[-1]
    assert all(np.array_equal(good.state[k], err.last_checkpoint.state[k]) for k in good.state)


def test_non_finite_gradient_leaves_parameters(rng, monkeypatch):
    X, Y = tiny_set(rng)
    net = build_tagging_model(TINY_TAG)
    before = {k: v.data.copy() for k, v in net.params.items()}
    real_backward = T.backward

    def poisoned(loss):
        real_backward(loss)
        net.params["head.cla.b"].grad[0] = np.inf

    monkeypatch.setattr(T, "backward", poisoned)
    with pytest.raises(TrainingDiverged) as info:
        train(net, X, Y, TrainConfig(lr=1e-2, steps=2, batch_size=4))
    assert info.value.step == 1
    assert all(np.array_equal(before[k], net.params[k].data) for k in before)


def test_train_rejects_bad_inputs(rng):
    net = build_tagging_model(TINY_TAG)
    with pytest.raises(ValueError):
        train(net, np.zeros((0, 32, 16)), np.zeros((0, 4)), TrainConfig())
    with pytest.raises(ValueError):
        train(net, np.zeros((3, 32, 16)), np.zeros((2, 4)), TrainConfig())
    X, Y = tiny_set(rng)
    with pytest.raises(ValueError):
        train(net, X, Y, TrainConfig(optimizer="rmsprop", batch_size=4))


def test_adam_first_step_magnitude():
    p = T.parameter(np.array([1.0, -2.0]))
    p.grad = np.array([0.3, -5.0])
    Adam([p], lr=0.1).step()
    np.testing.assert_allclose(p.data, [0.9, -1.9], atol=1e-8)


# ---------------------------------------------------------------- checkpoints


@pytest.mark.parametrize("cfg", [TINY_TAG, TINY_SED], ids=["tagging", "sed"])
def test_checkpoint_round_trip_bit_exact(rng, tmp_path, cfg):
    X, Y = tiny_set(rng)
    net = (build_tagging_model if cfg.head == "attention_pool" else build_sed_model)(cfg, seed=4)
    train(net, X, Y, TrainConfig(lr=1e-2, steps=2, batch_size=4))
    stats = FeatureStats.fit(X)
    path = tmp_path / "m.ckpt"
    save_checkpoint(ModelCheckpoint.from_network(net, 2, stats, {"kind": "x"}), path)
    back = load_checkpoint(path)
    assert back.step == 2 and back.meta == {"kind": "x"} and back.cfg == cfg
    np.testing.assert_array_equal(back.stats.mean, stats.mean)
    clip_a, frame_a = net.predict(X)
    clip_b, frame_b = back.to_network().predict(X)
    assert np.array_equal(clip_a, clip_b) and np.array_equal(frame_a, frame_b)


def test_checkpoint_rejects_foreign_file(tmp_path):
    p = tmp_path / "junk"
    p.write_bytes(b"not a checkpoint at all")
    with pytest.raises(ValueError):
        load_checkpoint(p)
