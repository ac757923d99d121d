import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dvae.autodiff import Tensor
from dvae.errors import CheckpointIOError, CorruptChecksumError, NonFiniteLossError, VersionMismatchError
from dvae.models import DvaeConfig, build_model
from dvae.trainer import (
    AdamState,
    TrainConfig,
    TrainState,
    clip_by_global_norm,
    evaluate_loss,
    fit,
    load_checkpoint,
    save_checkpoint,
    train_epoch,
)


def small_model(kind="vrnn", seed=0):
    return build_model(DvaeConfig(kind=kind, x_dim=5, z_dim=2, hidden=4, v_dim=2), seed=seed)


def small_data(n=12, T=6, F=5, seed=0):
    rng = np.random.default_rng(seed)
    base = rng.normal(size=(n, 1, F))
    walk = np.cumsum(0.2 * rng.normal(size=(n, T, F)), axis=1)
    return np.exp(base + walk)


def adam_reference(g_fn, w0, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    w, m, v = w0, 0.0, 0.0
    for t in range(1, steps + 1):
        g = g_fn(w)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return w


def test_adam_matches_scalar_reference():
    p = Tensor(np.array([2.0]), requires_grad=True)
    adam = AdamState(lr=0.05)
    g_fn = lambda w: 2 * (w - 0.3)  # noqa: E731
    for _ in range(100):
        adam.update({"w": p}, {"w": g_fn(p.data)})
    assert p.data[0] == pytest.approx(adam_reference(g_fn, 2.0, 0.05, 100), abs=1e-12)


@given(st.floats(-100, 100).filter(lambda g: abs(g) > 1e-6), st.floats(1e-5, 1.0))
@settings(max_examples=50, deadline=None)
def test_adam_first_step(g, lr):
    p = Tensor(np.array([0.0]), requires_grad=True)
    AdamState(lr=lr).update({"w": p}, {"w": np.array([g])})
    # bias-corrected first step is -lr * g / (|g| + eps)
    assert p.data[0] == pytest.approx(-lr * g / (abs(g) + 1e-8), rel=1e-12)


def test_clip_by_global_norm():
    grads = {"a": np.array([3.0, 0.0]), "b": np.array([[4.0]])}
    assert clip_by_global_norm(grads, 10.0) == 5.0
    assert clip_by_global_norm(grads, 1.0) == 5.0
    assert math.isclose(np.sqrt(sum((g ** 2).sum() for g in grads.values())), 1.0)


def test_zero_lr_leaves_parameters():
    model = small_model()
    before = model.state_dict()
    train_epoch(model, small_data(), 4, AdamState(lr=0.0), np.random.default_rng(0))
    for k, v in model.state_dict().items():
        np.testing.assert_array_equal(v, before[k])


def test_train_epoch_deterministic():
    losses = []
    for _ in range(2):
        model, rng = small_model(), np.random.default_rng(3)
        adam = AdamState(lr=1e-2)
        losses.append([train_epoch(model, small_data(), 4, adam, rng) for _ in range(3)])
    assert losses[0] == losses[1]


def test_non_finite_loss_reports_batch():
    model = small_model("vae")
    data = small_data(8)
    data[5, 2, 1] = np.inf
    with pytest.raises(NonFiniteLossError) as info:
        train_epoch(model, data, 4, AdamState(lr=1e-3), np.random.default_rng(0))
    assert info.value.batch_index in (0, 1)


def test_validation_loss_is_repeatable():
    model, data = small_model(), small_data()
    assert evaluate_loss(model, data, 5, seed=9) == evaluate_loss(model, data, 5, seed=9)


def test_patience_zero_stops_at_first_non_improvement():
    model = small_model()
    cfg = TrainConfig(lr=0.0, batch_size=4, patience=0, max_epochs=50)
    res = fit(model, small_data(), small_data(4, seed=1), cfg)
    # lr=0: epoch 1 sets the best, epoch 2 cannot improve
    assert res.state.epoch == 2 and res.state.stopped_early


def test_runs_to_max_epochs_while_improving():
    model = small_model("vae")
    cfg = TrainConfig(lr=5e-3, batch_size=4, patience=3, max_epochs=6)
    res = fit(model, small_data(), small_data(4, seed=1), cfg)
    vals = [v for _, v in res.state.history]
    if all(b < a for a, b in zip(vals, vals[1:])):
        assert res.state.epoch == 6
    assert res.state.epochs_since_best <= cfg.patience


def test_best_parameters_restored(tmp_path):
    model = small_model()
    cfg = TrainConfig(lr=3e-2, batch_size=4, patience=2, max_epochs=8)
    val = small_data(4, seed=1)
    res = fit(model, small_data(), val, cfg, checkpoint_dir=tmp_path, log_path=tmp_path / "log.jsonl")
    assert evaluate_loss(model, val, 4, cfg.val_seed) == pytest.approx(res.state.best_val_loss, rel=1e-12)
    assert min(v for _, v in res.state.history) == res.state.best_val_loss
    lines = (tmp_path / "log.jsonl").read_text().splitlines()
    assert len(lines) == res.state.epoch


def test_fit_rejects_empty_sets():
    with pytest.raises(ValueError):
        fit(small_model(), small_data()[:0], small_data(), TrainConfig())


def _trained(tmp_path, epochs=2):
    model = small_model("dsae")
    cfg = TrainConfig(lr=1e-2, batch_size=4, patience=5, max_epochs=epochs)
    res = fit(model, small_data(), small_data(4, seed=1), cfg)
    path = tmp_path / "a.ckpt"
    save_checkpoint(path, model, res.state, res.adam, res.rng, res.best_params, {"note": "x"})
    return model, res, path, cfg


def test_checkpoint_round_trip_bytes(tmp_path):
    model, res, path, _ = _trained(tmp_path)
    ck = load_checkpoint(path)
    for k, v in model.state_dict().items():
        np.testing.assert_array_equal(ck.model.state_dict()[k], v)
    for k in res.adam.m:
        np.testing.assert_array_equal(ck.adam.m[k], res.adam.m[k])
        np.testing.assert_array_equal(ck.adam.v[k], res.adam.v[k])
    assert ck.state == res.state and ck.metadata == {"note": "x"}
    save_checkpoint(tmp_path / "b.ckpt", ck.model, ck.state, ck.adam, ck.rng, ck.best_params, ck.metadata)
    assert (tmp_path / "b.ckpt").read_bytes() == path.read_bytes()


def test_truncated_checkpoint(tmp_path):
    _, _, path, _ = _trained(tmp_path, 1)
    blob = path.read_bytes()
    for cut in (10, len(blob) // 2, len(blob) - 1):
        (tmp_path / "t.ckpt").write_bytes(blob[:cut])
        with pytest.raises(CorruptChecksumError):
            load_checkpoint(tmp_path / "t.ckpt")


def test_flipped_byte_detected(tmp_path):
    _, _, path, _ = _trained(tmp_path, 1)
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(CorruptChecksumError):
        load_checkpoint(path)


def test_version_mismatch(tmp_path):
    model = small_model()
    save_checkpoint(tmp_path / "v.ckpt", model, TrainState(), _version=99)
    with pytest.raises(VersionMismatchError):
        load_checkpoint(tmp_path / "v.ckpt")


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointIOError):
        load_checkpoint(tmp_path / "nope.ckpt")


def test_resume_matches_uninterrupted(tmp_path):
    cfg = TrainConfig(lr=1e-2, batch_size=4, patience=10, max_epochs=5)
    train, val = small_data(), small_data(4, seed=1)
    full = fit(small_model("srnn"), train, val, cfg)

    fit(small_model("srnn"), train, val, cfg, checkpoint_dir=tmp_path, max_epochs=2)
    ck = load_checkpoint(tmp_path / "last.ckpt")
    resumed = fit(ck.model, train, val, cfg, state=ck.state, adam=ck.adam, rng=ck.rng, best_params=ck.best_params)
    assert len(resumed.state.history) == 5
    for (a, b), (c, d) in zip(full.state.history[2:], resumed.state.history[2:]):
        assert abs(a - c) <= 1e-12 * abs(a) and abs(b - d) <= 1e-12 * abs(b)
    assert resumed.state.best_val_loss == full.state.best_val_loss
