"""Scaled-down model-ordering experiment: all seven models on the desk synthetic corpus."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from .config import RunConfig, build_config
from .data import build_synthetic
from .evaluate import evaluate
from .models import MODEL_KINDS, build_model
from .trainer import fit

log = logging.getLogger(__name__)


@dataclass
class OrderingResult:
    seed: int
    scores: dict = field(default_factory=dict)     # kind -> {"is_divergence", "spectral_rmse", "rmse", "epochs", "seconds"}
    margin: float = 0.10

    def _rank(self, key):
        return sorted(self.scores, key=lambda k: self.scores[k][key])

    def failures(self) -> list[str]:
        out = []
        vae = self.scores["vae"]
        for kind, s in self.scores.items():
            if kind == "vae":
                continue
            for key in ("is_divergence", "spectral_rmse"):
                if not s[key] <= (1.0 - self.margin) * vae[key]:
                    out.append(f"{kind} {key} {s[key]:.4g} not 10% below vae {vae[key]:.4g}")
        for key in ("is_divergence", "spectral_rmse"):
            top = self._rank(key)[:3]
            for kind in ("srnn", "vrnn"):
                if kind in self.scores and kind not in top:
                    out.append(f"{kind} outside top 3 on {key} (top: {top})")
        return out

    @property
    def passed(self) -> bool:
        return not self.failures()

    def table(self) -> str:
        rows = [f"seed {self.seed}", f"{'model':<8}{'IS div':>10}{'spec RMSE':>12}{'RMSE':>12}{'epochs':>8}{'sec':>8}"]
        for kind in self._rank("is_divergence"):
            s = self.scores[kind]
            rows.append(f"{kind:<8}{s['is_divergence']:>10.4f}{s['spectral_rmse']:>12.4e}{s['rmse']:>12.4e}"
                        f"{s['epochs']:>8d}{s['seconds']:>8.1f}")
        return "\n".join(rows)


def run_ordering(seed: int, base: RunConfig | None = None, kinds=MODEL_KINDS) -> OrderingResult:
    """Train every model kind on the desk corpus for ``seed`` and score it on the test split.

    The seed fixes the corpus, the initialization and the training noise.
    """
    base = base or build_config({"preset": "desk"})
    store = build_synthetic(base.synthetic_kind, seed, base.num_train, base.num_val, base.num_test,
                            base.seq_len, base.x_dim)
    res = OrderingResult(seed)
    for kind in kinds:
        cfg = build_config({**base.to_dict(), "model_kind": kind, "seed": seed})
        t0 = time.perf_counter()
        model = build_model(cfg.model_config(), seed=seed)
        fr = fit(model, store.train, store.val, cfg.train_config())
        rep = evaluate(model, store.test, dataset_id=store.dataset_id)
        res.scores[kind] = {"is_divergence": rep.mean_is_divergence, "spectral_rmse": rep.mean_spectral_rmse,
                            "rmse": rep.mean_rmse, "epochs": fr.state.epoch, "seconds": time.perf_counter() - t0,
                            "best_val": fr.state.best_val_loss}
        log.info("seed %d %s: IS %.4f specRMSE %.4e (%d epochs)", seed, kind, rep.mean_is_divergence,
                 rep.mean_spectral_rmse, fr.state.epoch)
    return res
