"""Analysis-resynthesis scores: waveform RMSE, its spectral counterpart and IS divergence."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .distributions import POWER_FLOOR
from .errors import DomainError, LengthMismatchError, ShapeError
from .spectral import Waveform, bin_weights, cola_sum

REPORT_SCHEMA_VERSION = 1


def _samples(w) -> np.ndarray:
    return w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)


def waveform_rmse(ref, est) -> float:
    r, e = _samples(ref), _samples(est)
    if r.shape != e.shape:
        raise LengthMismatchError(f"waveform lengths differ: {r.shape} vs {e.shape}")
    return float(np.sqrt(np.mean((r - e) ** 2)))


def magnitude_spectrogram_rmse(ref_mag, est_mag, window_len: int | None = None, hop: int | None = None) -> float:
    """RMSE between magnitude spectrograms, scaled to waveform units.

    Uses Parseval over the full spectrum (bins 1..N/2-1 counted twice) and
    divides by the window energy summed over frames, so an error spectrogram
    that is itself a valid STFT gives the RMSE of the corresponding waveform
    error.
    """
    a = np.asarray(ref_mag, dtype=np.float64)
    b = np.asarray(est_mag, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeError(f"magnitude spectrograms must be equal [T, F], got {a.shape} and {b.shape}")
    if np.any(a < 0) or np.any(b < 0):
        raise DomainError("magnitudes must be nonnegative")
    N = window_len or 2 * (a.shape[1] - 1)
    hop = hop or N // 2
    c = float(cola_sum(N, hop).mean())
    energy = (bin_weights(N) * (a - b) ** 2).sum() / N
    samples = a.shape[0] * hop * c  # window energy per frame is N/2 = hop*c for the sine window
    return float(np.sqrt(energy / samples))


def is_divergence(ref_power, est_power) -> float:
    """Mean over bins of ``r/e - ln(r/e) - 1`` after flooring both at 1e-10."""
    r = np.asarray(ref_power, dtype=np.float64)
    e = np.asarray(est_power, dtype=np.float64)
    if r.shape != e.shape:
        raise ShapeError(f"power spectrograms differ in shape: {r.shape} vs {e.shape}")
    if np.any(r < 0) or np.any(e < 0):
        raise DomainError("power values must be nonnegative")
    ratio = np.maximum(r, POWER_FLOOR) / np.maximum(e, POWER_FLOOR)
    return float(np.mean(ratio - np.log(ratio) - 1.0))


def trim_silence(samples: np.ndarray, sample_rate: int, threshold_db: float = -40.0,
                 hangover_ms: float = 100.0, frame_ms: float = 10.0) -> np.ndarray:
    """Drop leading/trailing segments whose short-term energy is below ``threshold_db`` re the peak frame.

    ``hangover_ms`` of audio is kept on each side of the detected activity.
    """
    s = np.asarray(samples, dtype=np.float64)
    hop = max(1, int(sample_rate * frame_ms / 1000))
    n = len(s) // hop
    if n == 0:
        return s
    energy = (s[:n * hop].reshape(n, hop) ** 2).mean(axis=1)
    peak = energy.max()
    if peak <= 0:
        return s
    active = np.flatnonzero(10 * np.log10(np.maximum(energy, 1e-300) / peak) > threshold_db)
    pad = int(sample_rate * hangover_ms / 1000)
    start = max(0, active[0] * hop - pad)
    stop = min(len(s), (active[-1] + 1) * hop + pad)
    return s[start:stop]


@dataclass
class UtteranceScore:
    utterance_id: str
    rmse: float
    spectral_rmse: float
    is_divergence: float
    num_frames: int


@dataclass
class EvalReport:
    utterances: list[UtteranceScore]
    model_kind: str = ""
    checkpoint_id: str = ""
    dataset_id: str = ""
    # room for externally computed perceptual scores (PESQ, STOI); never filled here
    extra: dict = field(default_factory=dict)

    def _mean(self, key) -> float:
        return float(np.mean([getattr(u, key) for u in self.utterances])) if self.utterances else float("nan")

    @property
    def mean_rmse(self) -> float:
        return self._mean("rmse")

    @property
    def mean_spectral_rmse(self) -> float:
        return self._mean("spectral_rmse")

    @property
    def mean_is_divergence(self) -> float:
        return self._mean("is_divergence")

    def summary(self) -> dict:
        return {
            "record": "summary",
            "schema_version": REPORT_SCHEMA_VERSION,
            "model_kind": self.model_kind,
            "checkpoint_id": self.checkpoint_id,
            "dataset_id": self.dataset_id,
            "num_utterances": len(self.utterances),
            "rmse": self.mean_rmse,
            "spectral_rmse": self.mean_spectral_rmse,
            "is_divergence": self.mean_is_divergence,
            "pesq": self.extra.get("pesq"),
            "stoi": self.extra.get("stoi"),
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.summary(), sort_keys=True)]
        lines += [json.dumps({"record": "utterance", **asdict(u)}, sort_keys=True) for u in self.utterances]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "EvalReport":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        head = rows[0]
        if head.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {head.get('schema_version')}")
        utts = [UtteranceScore(**{k: v for k, v in r.items() if k != "record"}) for r in rows[1:]]
        extra = {k: head[k] for k in ("pesq", "stoi") if head.get(k) is not None}
        return cls(utts, head["model_kind"], head["checkpoint_id"], head["dataset_id"], extra)

    def to_table(self) -> str:
        s = self.summary()
        lines = [
            f"model: {self.model_kind}   checkpoint: {self.checkpoint_id}   dataset: {self.dataset_id}",
            f"{'utterance':<24}{'frames':>8}{'RMSE':>12}{'spec RMSE':>12}{'IS div':>12}",
        ]
        for u in self.utterances:
            lines.append(f"{u.utterance_id:<24}{u.num_frames:>8d}{u.rmse:>12.4e}{u.spectral_rmse:>12.4e}{u.is_divergence:>12.4e}")
        lines.append(f"{'mean':<24}{'':>8}{s['rmse']:>12.4e}{s['spectral_rmse']:>12.4e}{s['is_divergence']:>12.4e}")
        return "\n".join(lines) + "\n"
