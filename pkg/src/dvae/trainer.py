"""Mini-batch ELBO maximization with Adam, early stopping and checkpointing."""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import struct
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import (
    CheckpointIOError,
    CorruptChecksumError,
    NonFiniteError,
    NonFiniteLossError,
    VersionMismatchError,
)
from .models import DvaeConfig, DvaeModel, build_model

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"DVAECKPT"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 32
    patience: int = 20
    max_epochs: int = 300
    clip_norm: float | None = 10.0
    kl_warmup_epochs: int = 0
    seed: int = 0
    val_seed: int = 1234


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def update(self, params: dict, grads: dict):
        """One bias-corrected Adam step, in place on ``params[name].data``."""
        self.step += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.step
        c2 = 1.0 - b2 ** self.step
        for name, p in params.items():
            g = grads[name]
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainState:
    epoch: int = 0
    best_val_loss: float = math.inf
    best_epoch: int = -1
    epochs_since_best: int = 0
    patience: int = 20
    rng_seed: int = 0
    history: list = field(default_factory=list)   # [(train_loss, val_loss), ...] by epoch
    stopped_early: bool = False


def clip_by_global_norm(grads: dict, max_norm: float | None) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * scale
    return norm


def _kl_weight(cfg: TrainConfig, epoch: int) -> float:
    if cfg.kl_warmup_epochs <= 0:
        return 1.0
    return min(1.0, (epoch + 1) / cfg.kl_warmup_epochs)


def train_epoch(model: DvaeModel, data: np.ndarray, batch_size: int, adam: AdamState, rng: np.random.Generator,
                clip_norm: float | None = 10.0, kl_weight: float = 1.0) -> float:
    """One shuffled pass; returns the mean negative ELBO per sequence."""
    N = len(data)
    if N == 0:
        raise ValueError("empty training set")
    params = dict(model.named_parameters())
    order = rng.permutation(N)
    total = 0.0
    for b, start in enumerate(range(0, N, batch_size)):
        x = data[order[start:start + batch_size]]
        for p in params.values():
            p.grad = None
        try:
            loss = -model.elbo(x, rng, kl_weight).elbo.mean()
        except NonFiniteError as exc:
            raise NonFiniteLossError(f"non-finite value in batch {b}: {exc}", batch_index=b) from exc
        if not math.isfinite(loss.item()):
            raise NonFiniteLossError(f"non-finite loss in batch {b}", batch_index=b)
        loss.backward()
        grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}
        clip_by_global_norm(grads, clip_norm)
        adam.update(params, grads)
        total += loss.item() * len(x)
    return total / N


def evaluate_loss(model: DvaeModel, data: np.ndarray, batch_size: int, seed: int) -> float:
    """Mean negative ELBO with a fixed noise seed, so successive epochs are comparable."""
    rng = np.random.default_rng(seed)
    total = 0.0
    with ad.no_grad():
        for start in range(0, len(data), batch_size):
            x = data[start:start + batch_size]
            total += -float(model.elbo(x, rng).elbo.data.sum())
    return total / len(data)


@dataclass
class FitResult:
    state: TrainState
    adam: AdamState
    rng: np.random.Generator
    best_params: dict


def fit(model: DvaeModel, train_set: np.ndarray, val_set: np.ndarray, cfg: TrainConfig,
        state: TrainState | None = None, adam: AdamState | None = None, rng: np.random.Generator | None = None,
        best_params: dict | None = None, checkpoint_dir=None, log_path=None, max_epochs: int | None = None) -> FitResult:
    """Train until early stopping or ``max_epochs``; leaves the best-validation parameters in ``model``.

    Passing ``state``, ``adam``, ``rng`` and ``best_params`` (as restored by
    :func:`load_checkpoint`) resumes a run exactly where it stopped.
    ``max_epochs`` overrides ``cfg.max_epochs`` as an absolute epoch count.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("train and validation sets must be non-empty")
    state = state or TrainState(patience=cfg.patience, rng_seed=cfg.seed)
    adam = adam or AdamState(lr=cfg.lr)
    rng = rng or np.random.default_rng(cfg.seed)
    best_params = best_params if best_params is not None else model.state_dict()
    limit = cfg.max_epochs if max_epochs is None else max_epochs
    ckdir = Path(checkpoint_dir) if checkpoint_dir else None
    while state.epoch < limit and not state.stopped_early:
        t0 = time.perf_counter()
        train_loss = train_epoch(model, train_set, cfg.batch_size, adam, rng, cfg.clip_norm,
                                 _kl_weight(cfg, state.epoch))
        val_loss = evaluate_loss(model, val_set, cfg.batch_size, cfg.val_seed)
        state.history.append((train_loss, val_loss))
        improved = val_loss < state.best_val_loss
        if improved:
            state.best_val_loss, state.best_epoch, state.epochs_since_best = val_loss, state.epoch, 0
            best_params = model.state_dict()
        else:
            state.epochs_since_best += 1
            if state.epochs_since_best >= max(state.patience, 1):
                state.stopped_early = True
        state.epoch += 1
        wall = time.perf_counter() - t0
        log.info("epoch %d train %.4f val %.4f%s (%.1fs)", state.epoch, train_loss, val_loss,
                 " *" if improved else "", wall)
        if log_path:
            with open(log_path, "a") as f:
                f.write(json.dumps({"epoch": state.epoch, "train_loss": train_loss, "val_loss": val_loss,
                                    "wall_time": wall}) + "\n")
        if ckdir:
            save_checkpoint(ckdir / "last.ckpt", model, state, adam, rng, best_params)
            if improved:
                save_checkpoint(ckdir / "best.ckpt", model, state, adam, rng, best_params)
    model.load_state_dict(best_params)
    return FitResult(state, adam, rng, best_params)


# ----------------------------------------------------------------------
# checkpoint container
#
#   magic "DVAECKPT" | u32 version | u64 header length | UTF-8 JSON header |
#   float64 little-endian payload | sha256 of everything before it (32 bytes)
#
# The header lists each tensor's name, shape and element offset into the
# payload. Tensor groups: "param/", "best/", "adam_m/", "adam_v/".

@dataclass
class Checkpoint:
    model: DvaeModel
    state: TrainState
    adam: AdamState
    rng: np.random.Generator
    best_params: dict
    metadata: dict


def _encode(model: DvaeModel, state: TrainState, adam: AdamState, rng: np.random.Generator | None,
            best_params: dict | None, metadata: dict | None, version: int) -> bytes:
    tensors = [(f"param/{k}", v) for k, v in model.state_dict().items()]
    if best_params is not None:
        tensors += [(f"best/{k}", np.asarray(best_params[k])) for k in sorted(best_params)]
    tensors += [(f"adam_m/{k}", adam.m[k]) for k in sorted(adam.m)]
    tensors += [(f"adam_v/{k}", adam.v[k]) for k in sorted(adam.v)]
    index, chunks, offset = [], [], 0
    for name, arr in tensors:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        index.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        chunks.append(arr.tobytes())
        offset += arr.size
    st = asdict(state)
    st["history"] = [list(h) for h in state.history]
    header = {
        "format": "dvae-checkpoint",
        "config": model.config.to_dict(),
        "tensors": index,
        "rng_seed": state.rng_seed,
        "rng_state": None if rng is None else rng.bit_generator.state,
        "train_state": st,
        "adam": {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps, "step": adam.step},
        "metadata": metadata or {},
    }
    hbytes = json.dumps(header, sort_keys=True, allow_nan=True).encode("utf-8")
    body = CHECKPOINT_MAGIC + struct.pack("<IQ", version, len(hbytes)) + hbytes + b"".join(chunks)
    return body + hashlib.sha256(body).digest()


def save_checkpoint(path, model: DvaeModel, state: TrainState, adam: AdamState | None = None,
                    rng: np.random.Generator | None = None, best_params: dict | None = None,
                    metadata: dict | None = None, _version: int = CHECKPOINT_VERSION):
    """Atomically write a checkpoint (temp file in the target directory, then rename)."""
    path = Path(path)
    blob = _encode(model, state, adam or AdamState(), rng, best_params, metadata, _version)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except OSError as exc:
        raise CheckpointIOError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path) -> Checkpoint:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointIOError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < len(CHECKPOINT_MAGIC) + 12 + 32:
        raise CorruptChecksumError(f"{path}: file too short to be a checkpoint")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptChecksumError(f"{path}: checksum mismatch (truncated or corrupted)")
    if body[:8] != CHECKPOINT_MAGIC:
        raise CorruptChecksumError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<IQ", body[8:20])
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(f"{path}: checkpoint version {version}, this build reads {CHECKPOINT_VERSION}")
    header = json.loads(body[20:20 + hlen].decode("utf-8"))
    payload = np.frombuffer(body[20 + hlen:], dtype="<f8")
    groups: dict[str, dict] = {"param": {}, "best": {}, "adam_m": {}, "adam_v": {}}
    for t in header["tensors"]:
        group, name = t["name"].split("/", 1)
        arr = payload[t["offset"]:t["offset"] + t["count"]].reshape(t["shape"]).astype(np.float64)
        groups[group][name] = arr
    model = build_model(DvaeConfig(**header["config"]))
    model.load_state_dict(groups["param"])
    st = header["train_state"]
    st["history"] = [tuple(h) for h in st["history"]]
    state = TrainState(**st)
    a = header["adam"]
    adam = AdamState(a["lr"], a["beta1"], a["beta2"], a["eps"], a["step"], groups["adam_m"], groups["adam_v"])
    rng = np.random.default_rng()
    if header["rng_state"] is not None:
        rng.bit_generator.state = header["rng_state"]
    best = groups["best"] or None
    return Checkpoint(model, state, adam, rng, best, header["metadata"])
