"""Corpus ingestion: PCM16 WAV I/O, synthetic spectrogram generators and chunked dataset stores."""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
import wave
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .distributions import floor_power
from .errors import IoError, UnsupportedFormatError
from .metrics import trim_silence
from .spectral import SpectrogramSequence, Waveform, stft

GENERATOR_KINDS = ("ar2_modulated", "harmonic_glide", "noise_bursts")


# ----------------------------------------------------------------------
# WAV

def read_wav(path, expected_rate: int | None = None) -> Waveform:
    """Read a mono 16-bit PCM RIFF file; samples are scaled by 1/32768."""
    try:
        with wave.open(str(path), "rb") as f:
            channels, width, rate, n = f.getnchannels(), f.getsampwidth(), f.getframerate(), f.getnframes()
            comp = f.getcomptype()
            raw = f.readframes(n)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except (wave.Error, EOFError) as exc:
        raise UnsupportedFormatError(f"{path}: not a PCM WAV file ({exc})") from exc
    if comp != "NONE" or width != 2 or channels != 1:
        raise UnsupportedFormatError(f"{path}: need mono 16-bit linear PCM, got {channels} ch / {8 * width} bit / {comp}")
    if expected_rate is not None and rate != expected_rate:
        raise UnsupportedFormatError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz (no resampling)")
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    return Waveform(pcm / 32768.0, rate)


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")


def write_wav(path, w: Waveform):
    """Atomic PCM16 mono write (temp file then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        with wave.open(tmp, "wb") as f:
            f.setnchannels(1)
            f.setsampwidth(2)
            f.setframerate(int(w.sample_rate))
            f.writeframes(to_pcm16(w.samples).tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def peak_normalize(samples: np.ndarray) -> np.ndarray:
    peak = np.max(np.abs(samples)) if len(samples) else 0.0
    return samples / peak if peak > 0 else samples


# ----------------------------------------------------------------------
# synthetic corpora

@dataclass
class SyntheticSpec:
    kind: str = "ar2_modulated"
    seed: int = 0
    num_sequences: int = 100
    frames: int = 50
    F: int = 33

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator {self.kind!r}; expected one of {GENERATOR_KINDS}")
        if self.num_sequences < 1 or self.frames < 1 or self.F < 2:
            raise ValueError("num_sequences, frames must be >= 1 and F >= 2")


def _ar2(rng, n, T, radius, freq, burn=200) -> np.ndarray:
    """``n`` independent AR(2) series with complex poles ``radius * exp(+-j freq)``, unit variance."""
    a1, a2 = 2 * radius * np.cos(freq), -radius ** 2
    e = rng.standard_normal((n, T + burn))
    y = np.zeros((n, T + burn))
    for t in range(2, T + burn):
        y[:, t] = a1 * y[:, t - 1] + a2 * y[:, t - 2] + e[:, t]
    y = y[:, burn:]
    # stationary variance of AR(2)
    var = (1 - a2) / ((1 + a2) * ((1 - a2) ** 2 - a1 ** 2))
    return y / np.sqrt(var)


def _random_phase(rng, shape) -> np.ndarray:
    ph = rng.uniform(-np.pi, np.pi, size=shape)
    ph[..., 0] = 0.0
    ph[..., -1] = 0.0
    return ph


def _ar2_modulated(rng, spec: SyntheticSpec) -> np.ndarray:
    """Log-power = tilt + per-sequence envelope + a few weak, slowly drifting AR(2) components.

    Each component is small next to the likelihood's per-bin noise, so a
    frame-wise encoder under an i.i.d. N(0, 1) prior shrinks it towards zero.
    Its value one frame earlier pins it down, which is what a temporal prior
    or posterior can exploit.
    """
    N, T, F = spec.num_sequences, spec.frames, spec.F
    f = np.linspace(0.0, 1.0, F)
    tilt = 1.0 - 3.0 * f
    static_basis = np.cos(np.pi * f)[None]                                   # [1, F]
    static = rng.normal(0.0, [0.4], size=(N, 1)) @ static_basis              # [N, F]
    dyn_basis = np.stack([np.ones(F), np.cos(2 * np.pi * f), np.cos(3 * np.pi * f)])  # [3, F]
    amps = np.array([0.35, 0.3, 0.3])
    radius = np.array([0.98, 0.98, 0.97])
    freq = np.array([0.04, 0.06, 0.08])
    dyn = np.zeros((N, T, F))
    for k in range(len(amps)):
        a = _ar2(rng, N, T, radius[k], freq[k]) * amps[k]
        dyn += a[:, :, None] * dyn_basis[k][None, None, :]
    noise = 0.05 * rng.standard_normal((N, T, F))
    return np.exp(tilt + static[:, None, :] + dyn + noise)


def _harmonic_glide(rng, spec: SyntheticSpec) -> np.ndarray:
    """Harmonic comb whose fundamental glides smoothly, over a noise floor."""
    N, T, F = spec.num_sequences, spec.frames, spec.F
    bins = np.arange(F)
    f0 = rng.uniform(2.0, 5.0, size=(N, 1)) + 1.0 * _ar2(rng, N, T, 0.98, 0.03)
    f0 = np.clip(f0, 1.5, None)
    power = np.full((N, T, F), 1e-3)
    for h in range(1, F):
        centre = h * f0[:, :, None]
        gain = np.exp(-0.3 * h)
        power += gain * np.exp(-0.5 * ((bins[None, None, :] - centre) / 0.6) ** 2)
    loud = np.exp(0.5 * _ar2(rng, N, T, 0.95, 0.05))
    return power * loud[:, :, None] * np.exp(0.05 * rng.standard_normal((N, T, F)))


def _noise_bursts(rng, spec: SyntheticSpec) -> np.ndarray:
    """Stationary coloured background with occasional broadband bursts that decay over a few frames."""
    N, T, F = spec.num_sequences, spec.frames, spec.F
    f = np.linspace(0.0, 1.0, F)
    floor = np.exp(-2.0 * f)[None, None, :] * np.exp(rng.normal(0, 0.3, size=(N, 1, 1)))
    env = np.zeros((N, T))
    onsets = rng.random((N, T)) < 0.08
    level = 0.0 * env[:, 0]
    for t in range(T):
        level = 0.7 * level + onsets[:, t] * rng.uniform(2.0, 10.0, size=N)
        env[:, t] = level
    shape = np.exp(-((f - rng.uniform(0.2, 0.8, size=(N, 1, 1))) ** 2) / 0.1)
    return floor + env[:, :, None] * shape * np.exp(0.05 * rng.standard_normal((N, T, F)))


_GENERATORS = {"ar2_modulated": _ar2_modulated, "harmonic_glide": _harmonic_glide, "noise_bursts": _noise_bursts}


def generate_synthetic(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(power [N, T, F], phase [N, T, F])``; bit-identical for a given spec."""
    rng = np.random.default_rng(spec.seed)
    power = floor_power(_GENERATORS[spec.kind](rng, spec))
    phase = _random_phase(rng, power.shape)
    return power, phase


def lag1_log_autocorrelation(power: np.ndarray) -> float:
    """Mean over sequences and bins of the lag-1 autocorrelation of log-power along time."""
    lp = np.log(floor_power(power))
    d = lp - lp.mean(axis=1, keepdims=True)
    num = (d[:, 1:] * d[:, :-1]).sum(axis=1)
    den = (d * d).sum(axis=1)
    return float(np.mean(num / np.maximum(den, 1e-300)))


# ----------------------------------------------------------------------
# manifests and chunked stores

def file_checksum(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def array_checksum(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a, dtype="<f8").tobytes()).hexdigest()


@dataclass
class ManifestEntry:
    source: str
    duration: float
    checksum: str


@dataclass
class DatasetManifest:
    split: str
    entries: list[ManifestEntry] = field(default_factory=list)
    chunk_frames: int = 150

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        d = json.loads(text)
        return cls(d["split"], [ManifestEntry(**e) for e in d["entries"]], d["chunk_frames"])


def manifest_from_dir(directory, split: str, chunk_frames: int) -> DatasetManifest:
    root = Path(directory)
    if not root.is_dir():
        raise IoError(f"{split} directory {root} does not exist")
    entries = []
    for p in sorted(root.rglob("*.wav")):
        with wave.open(str(p), "rb") as f:
            dur = f.getnframes() / f.getframerate()
        entries.append(ManifestEntry(str(p), dur, file_checksum(p)))
    return DatasetManifest(split, entries, chunk_frames)


def check_disjoint(*manifests: DatasetManifest):
    seen = {}
    for m in manifests:
        for e in m.entries:
            if e.checksum in seen and seen[e.checksum] != m.split:
                raise ValueError(f"{e.source} appears in both {seen[e.checksum]} and {m.split}")
            seen[e.checksum] = m.split


def chunk(power: np.ndarray, T: int) -> np.ndarray:
    """Split ``[frames, F]`` into ``[n, T, F]`` consecutive chunks; the trailing remainder is dropped."""
    n = power.shape[0] // T
    return power[:n * T].reshape(n, T, power.shape[1])


@dataclass
class TestUtterance:
    __test__ = False                  # not a pytest class despite the name

    utterance_id: str
    spec: SpectrogramSequence


@dataclass
class SequenceStore:
    train: np.ndarray                 # [N_tr, T, F]
    val: np.ndarray                   # [N_val, T, F]
    test: list[TestUtterance]
    dataset_id: str = ""

    @property
    def F(self) -> int:
        return self.train.shape[2]


def build_from_wavs(train: DatasetManifest, val: DatasetManifest, test: DatasetManifest, window_len=512, hop=256,
                    expected_rate: int | None = 16000, trim: dict | None = None) -> SequenceStore:
    check_disjoint(train, val, test)
    T = train.chunk_frames
    if val.chunk_frames != T:
        raise ValueError("train and val must share the chunk length")
    F = window_len // 2 + 1

    def analyse(entry, split):
        try:
            w = read_wav(entry.source, expected_rate)
        except Exception as exc:
            raise type(exc)(f"[{split}] {entry.source}: {exc}") from exc
        return Waveform(peak_normalize(w.samples), w.sample_rate)

    def chunks(m):
        out = []
        for e in m.entries:
            w = analyse(e, m.split)
            if len(w) < window_len:
                continue
            out.append(chunk(floor_power(stft(w, window_len, hop).power), T))
        return np.concatenate(out) if out else np.zeros((0, T, F))

    tests = []
    for e in test.entries:
        w = analyse(e, "test")
        if trim is not None:
            w = Waveform(trim_silence(w.samples, w.sample_rate, **trim), w.sample_rate)
        if len(w) < window_len:
            continue
        spec = stft(w, window_len, hop)
        spec.power = floor_power(spec.power)
        tests.append(TestUtterance(Path(e.source).stem, spec))
    ident = hashlib.sha256("".join(e.checksum for m in (train, val, test) for e in m.entries).encode()).hexdigest()[:16]
    return SequenceStore(chunks(train), chunks(val), tests, f"wav-{ident}")


def build_synthetic(kind: str, seed: int, num_train: int, num_val: int, num_test: int, T: int, F: int) -> SequenceStore:
    """Three disjoint splits from independent child seeds of ``seed``."""
    child = np.random.SeedSequence(seed).generate_state(3)
    window_len = 2 * (F - 1)
    tr, _ = generate_synthetic(SyntheticSpec(kind, int(child[0]), num_train, T, F))
    va, _ = generate_synthetic(SyntheticSpec(kind, int(child[1]), num_val, T, F))
    te, ph = generate_synthetic(SyntheticSpec(kind, int(child[2]), num_test, T, F))
    tests = [TestUtterance(f"syn{i:04d}", SpectrogramSequence(te[i], ph[i], window_len, window_len // 2))
             for i in range(num_test)]
    return SequenceStore(tr, va, tests, f"synthetic-{kind}-{seed}")
