"""Run configuration: one flat YAML mapping, two built-in presets, ``--set`` overrides."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

import yaml

from .errors import ConfigError
from .models import MODEL_KINDS, DvaeConfig
from .trainer import TrainConfig
from .data import GENERATOR_KINDS


@dataclass
class RunConfig:
    """Every key accepted in a config file.

    ``data`` selects the corpus: ``synthetic`` uses the ``synthetic_*`` keys,
    ``wav`` reads the three directories ``train_dir``/``val_dir``/``test_dir``.
    """

    preset: str | None = None
    model_kind: str = "srnn"
    # dims
    x_dim: int = 257
    z_dim: int = 16
    hidden: int = 128
    v_dim: int = 8
    seq_len: int = 150
    # front-end
    window_len: int = 512
    hop: int = 256
    sample_rate: int = 16000
    # optimization
    lr: float = 1e-4
    batch_size: int = 32
    patience: int = 20
    max_epochs: int = 300
    clip_norm: float | None = 10.0
    kl_warmup_epochs: int = 0
    val_seed: int = 1234
    # data
    data: str = "wav"
    train_dir: str | None = None
    val_dir: str | None = None
    test_dir: str | None = None
    trim_silence: bool = True
    trim_threshold_db: float = -40.0
    trim_hangover_ms: float = 100.0
    synthetic_kind: str = "ar2_modulated"
    synthetic_seed: int = 0
    num_train: int = 500
    num_val: int = 100
    num_test: int = 100
    # run
    seed: int = 0
    out_dir: str = "runs/default"

    def validate(self) -> "RunConfig":
        if self.model_kind not in MODEL_KINDS:
            raise ConfigError(f"model_kind must be one of {MODEL_KINDS}, got {self.model_kind!r}")
        for k in ("x_dim", "z_dim", "hidden", "v_dim", "seq_len", "batch_size", "max_epochs", "window_len", "hop"):
            if getattr(self, k) < 1:
                raise ConfigError(f"{k} must be >= 1")
        if self.x_dim != self.window_len // 2 + 1:
            raise ConfigError(f"x_dim={self.x_dim} must equal window_len/2+1={self.window_len // 2 + 1}")
        if self.lr < 0 or self.patience < 0:
            raise ConfigError("lr and patience must be nonnegative")
        if self.data not in ("wav", "synthetic"):
            raise ConfigError(f"data must be 'wav' or 'synthetic', got {self.data!r}")
        if self.data == "wav" and not (self.train_dir and self.val_dir and self.test_dir):
            raise ConfigError("data: wav needs train_dir, val_dir and test_dir")
        if self.data == "synthetic":
            if self.synthetic_kind not in GENERATOR_KINDS:
                raise ConfigError(f"synthetic_kind must be one of {GENERATOR_KINDS}")
            if min(self.num_train, self.num_val, self.num_test) < 1:
                raise ConfigError("num_train, num_val, num_test must be >= 1")
        return self

    def model_config(self) -> DvaeConfig:
        return DvaeConfig(kind=self.model_kind, x_dim=self.x_dim, z_dim=self.z_dim, hidden=self.hidden,
                          v_dim=self.v_dim, t_max=self.seq_len)

    def train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, batch_size=self.batch_size, patience=self.patience,
                           max_epochs=self.max_epochs, clip_norm=self.clip_norm,
                           kl_warmup_epochs=self.kl_warmup_epochs, seed=self.seed, val_seed=self.val_seed)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


PRESETS: dict[str, dict] = {
    # full-scale speech setting
    "paper-wsj0": dict(x_dim=257, z_dim=16, hidden=128, seq_len=150, window_len=512, hop=256, lr=1e-4,
                       batch_size=32, patience=20, max_epochs=300, data="wav"),
    # laptop-sized synthetic setting used by the ordering benchmark
    "desk": dict(x_dim=33, z_dim=4, hidden=16, seq_len=50, window_len=64, hop=32, lr=3e-3, batch_size=32,
                 patience=20, max_epochs=100, kl_warmup_epochs=20, data="synthetic", synthetic_kind="ar2_modulated",
                 num_train=500, num_val=100, num_test=100, trim_silence=False),
}

_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(key: str, value):
    """Convert a YAML or command-line scalar to the declared type of ``key``."""
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    default = getattr(RunConfig(), key)
    if isinstance(value, str):
        value = yaml.safe_load(value) if value != "" else value
    if value is None:
        return None
    kind = type(default) if default is not None else None
    if kind is bool and not isinstance(value, bool):
        raise ConfigError(f"{key} expects true/false, got {value!r}")
    if kind is int and not (isinstance(value, int) and not isinstance(value, bool)):
        raise ConfigError(f"{key} expects an integer, got {value!r}")
    if kind is float:
        if isinstance(value, str):
            # YAML 1.1 reads "1e-4" (no dot) as a string
            try:
                value = float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} expects a number, got {value!r}")
        value = float(value)
    if kind is str or (default is None and key.endswith("_dir")) or key == "preset":
        value = str(value)
    return value


def parse_overrides(items: list[str]) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_config(mapping: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Preset values, then the file mapping, then overrides; validated."""
    mapping = dict(mapping or {})
    overrides = dict(overrides or {})
    preset = overrides.get("preset", mapping.get("preset"))
    values = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; available: {sorted(PRESETS)}")
        values.update(PRESETS[preset])
    for src in (mapping, overrides):
        for k, v in src.items():
            values[k] = _coerce(k, v)
    return RunConfig(**values).validate()


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    mapping = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            mapping = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
        if not isinstance(mapping, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    return build_config(mapping, overrides)
