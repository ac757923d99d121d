import numpy as np
import pytest

from dvae.benchmark import OrderingResult
from dvae.config import build_config
from dvae.data import build_synthetic
from dvae.evaluate import evaluate, score_utterance
from dvae.models import MODEL_KINDS, build_model
from dvae.trainer import fit


def test_perfect_reconstruction_scores_zero():
    store = build_synthetic("harmonic_glide", 0, 1, 1, 2, 12, 17)
    for u in store.test:
        s = score_utterance(u, u.spec.power)
        assert s.rmse < 1e-12 and s.spectral_rmse == 0.0 and abs(s.is_divergence) < 1e-12


def test_training_improves_reconstruction():
    cfg = build_config({"preset": "desk", "model_kind": "vae", "num_train": 64, "num_val": 16, "num_test": 8,
                        "max_epochs": 8})
    store = build_synthetic(cfg.synthetic_kind, 0, cfg.num_train, cfg.num_val, cfg.num_test, cfg.seq_len, cfg.x_dim)
    model = build_model(cfg.model_config(), seed=0)
    before = evaluate(model, store.test)
    res = fit(model, store.train, store.val, cfg.train_config())
    after = evaluate(model, store.test)
    vals = [v for _, v in res.state.history]
    assert min(vals) < vals[0]
    assert after.mean_is_divergence < before.mean_is_divergence
    assert after.mean_spectral_rmse < before.mean_spectral_rmse


def _scores(is_vals, rmse_vals):
    return {k: {"is_divergence": a, "spectral_rmse": b, "rmse": b, "epochs": 1, "seconds": 0.0}
            for k, a, b in zip(MODEL_KINDS, is_vals, rmse_vals)}


def test_ordering_rule():
    # vae, dkf, storn, vrnn, srnn, rvae, dsae
    good = OrderingResult(0, _scores([1.0, 0.8, 0.7, 0.5, 0.4, 0.85, 0.6], [1.0, 0.8, 0.7, 0.5, 0.4, 0.85, 0.6]))
    assert good.passed and "srnn" in good.table()
    close = OrderingResult(0, _scores([1.0, 0.95, 0.7, 0.5, 0.4, 0.85, 0.6], [1.0, 0.8, 0.7, 0.5, 0.4, 0.85, 0.6]))
    assert any("dkf" in f for f in close.failures())
    rank = OrderingResult(0, _scores([1.0, 0.3, 0.2, 0.5, 0.4, 0.85, 0.1], [1.0, 0.8, 0.7, 0.5, 0.4, 0.85, 0.6]))
    assert not rank.passed
