"""Command-line entry point: ``dvae <train|eval|resynth|sample> --config PATH [--set k=v ...]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config, parse_overrides
from .data import (
    SequenceStore,
    atomic_write_text,
    build_from_wavs,
    build_synthetic,
    manifest_from_dir,
    write_wav,
)
from .errors import CheckpointIOError, DvaeError
from .evaluate import evaluate, reconstruct
from .models import build_model
from .spectral import Waveform, istft, resynth_waveform
from .trainer import fit, load_checkpoint, save_checkpoint

log = logging.getLogger("dvae")

MODEL_FILE = "model.ckpt"


def build_store(cfg: RunConfig) -> SequenceStore:
    if cfg.data == "synthetic":
        return build_synthetic(cfg.synthetic_kind, cfg.synthetic_seed, cfg.num_train, cfg.num_val, cfg.num_test,
                               cfg.seq_len, cfg.x_dim)
    T = cfg.seq_len
    trim = (dict(threshold_db=cfg.trim_threshold_db, hangover_ms=cfg.trim_hangover_ms)
            if cfg.trim_silence else None)
    rate = cfg.sample_rate if cfg.preset == "paper-wsj0" else None
    return build_from_wavs(manifest_from_dir(cfg.train_dir, "train", T), manifest_from_dir(cfg.val_dir, "val", T),
                           manifest_from_dir(cfg.test_dir, "test", T), cfg.window_len, cfg.hop, rate, trim)


def _checkpoint_path(args, out: Path) -> Path:
    return Path(args.checkpoint) if args.checkpoint else out / MODEL_FILE


def _load_model(args, out: Path):
    path = _checkpoint_path(args, out)
    if not path.exists():
        raise CheckpointIOError(f"checkpoint {path} not found; run `dvae train` first or pass --checkpoint")
    return load_checkpoint(path).model, path


def cmd_train(cfg: RunConfig, args, out: Path) -> int:
    store = build_store(cfg)
    if len(store.train) == 0 or len(store.val) == 0:
        raise DvaeError("training or validation split yields no sequences")
    ckdir = out / "checkpoints"
    log_path = out / "train_log.jsonl"
    resume = ckdir / "last.ckpt"
    if args.resume and resume.exists():
        ck = load_checkpoint(resume)
        model, kwargs = ck.model, dict(state=ck.state, adam=ck.adam, rng=ck.rng, best_params=ck.best_params)
        log.info("resuming from epoch %d", ck.state.epoch)
    else:
        model, kwargs = build_model(cfg.model_config(), seed=cfg.seed), {}
        if log_path.exists():
            log_path.unlink()
    atomic_write_text(out / "config.json", json.dumps(cfg.to_dict(), sort_keys=True, indent=1) + "\n")
    res = fit(model, store.train, store.val, cfg.train_config(), checkpoint_dir=ckdir, log_path=log_path, **kwargs)
    meta = {"dataset_id": store.dataset_id, "best_epoch": res.state.best_epoch}
    save_checkpoint(out / MODEL_FILE, model, res.state, res.adam, res.rng, res.best_params, meta)
    print(f"trained {cfg.model_kind}: {res.state.epoch} epochs, best val loss {res.state.best_val_loss:.6g} "
          f"at epoch {res.state.best_epoch + 1}; checkpoint {out / MODEL_FILE}")
    return 0


def cmd_eval(cfg: RunConfig, args, out: Path) -> int:
    model, path = _load_model(args, out)
    store = build_store(cfg)
    rep = evaluate(model, store.test, checkpoint_id=path.name, dataset_id=store.dataset_id)
    atomic_write_text(out / "report.jsonl", rep.to_jsonl())
    atomic_write_text(out / "report.txt", rep.to_table())
    print(rep.to_table(), end="")
    return 0


def cmd_resynth(cfg: RunConfig, args, out: Path) -> int:
    model, _ = _load_model(args, out)
    store = build_store(cfg)
    dest = out / "resynth"
    for utt in store.test:
        sigma2 = reconstruct(model, utt.spec)
        s = utt.spec
        est = resynth_waveform(sigma2, s.phase, s.window_len, s.hop, s.sample_rate).samples
        peak = np.max(np.abs(istft(s).samples))
        write_wav(dest / f"{utt.utterance_id}.wav", Waveform(est / peak if peak > 0 else est, s.sample_rate))
    print(f"wrote {len(store.test)} files to {dest}")
    return 0


def cmd_sample(cfg: RunConfig, args, out: Path) -> int:
    """Prior samples with uniformly random phase; a diagnostic, not meant to sound like speech."""
    model, _ = _load_model(args, out)
    rng = np.random.default_rng(cfg.seed)
    frames = args.frames or cfg.seq_len
    _, sigma2 = model.generate(frames, rng, batch=args.num)
    dest = out / "samples"
    for i in range(args.num):
        phase = rng.uniform(-np.pi, np.pi, size=sigma2[i].shape)
        w = resynth_waveform(sigma2[i], phase, cfg.window_len, cfg.hop, cfg.sample_rate).samples
        peak = np.max(np.abs(w))
        write_wav(dest / f"sample{i:03d}.wav", Waveform(w / peak if peak > 0 else w, cfg.sample_rate))
    print(f"wrote {args.num} files to {dest}")
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "resynth": cmd_resynth, "sample": cmd_sample}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dvae", description="Train and evaluate dynamical VAEs on power spectrograms.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="YAML config file (flat mapping; may name a preset)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--seed", type=int, help="shorthand for --set seed=N")
    p.add_argument("--out", help="output directory (default: out_dir from the config)")
    p.add_argument("--checkpoint", help="checkpoint for eval/resynth/sample (default: OUT/model.ckpt)")
    p.add_argument("--resume", action="store_true", help="train: continue from OUT/checkpoints/last.ckpt")
    p.add_argument("--num", type=int, default=4, help="sample: number of sequences")
    p.add_argument("--frames", type=int, help="sample: frames per sequence (default seq_len)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        overrides = parse_overrides(args.overrides)
        if args.seed is not None:
            overrides["seed"] = str(args.seed)
        cfg = load_config(args.config, overrides)
        out = Path(args.out or cfg.out_dir)
        return COMMANDS[args.command](cfg, args, out)
    except (DvaeError, OSError, ValueError) as exc:
        print(f"dvae {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
