"""STFT analysis, power spectrogram extraction and overlap-add resynthesis.

Conventions (these fix the Parseval scaling used in :mod:`dvae.metrics`):

* analysis frames ``frame_t[n] = w[n] * s[t*hop + n]`` with the sine window
  ``w[n] = sin(pi (n + 0.5) / N)``; no padding, trailing partial frames dropped;
* forward real FFT unnormalized, inverse ``1/N``;
* synthesis multiplies by ``w / c`` and overlap-adds, where ``c`` is the
  constant value of ``sum_m w^2[n - m*hop]`` (``c = 1`` at hop ``N/2``).

With these, ``istft(stft(s))`` reproduces ``s`` on the fully overlapped
interior, i.e. samples ``[N - hop, T*hop)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, TooShortError

DEFAULT_SAMPLE_RATE = 16000


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ShapeError("waveform must be 1-D")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class SpectrogramSequence:
    """One utterance: power ``|s_tf|^2`` and phase, both ``[T, F]``."""

    power: np.ndarray
    phase: np.ndarray
    window_len: int = 512
    hop: int = 256
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.power = np.asarray(self.power, dtype=np.float64)
        self.phase = np.asarray(self.phase, dtype=np.float64)
        if self.power.shape != self.phase.shape or self.power.ndim != 2:
            raise ShapeError(f"power {self.power.shape} and phase {self.phase.shape} must be equal [T, F]")
        if self.power.shape[1] != self.window_len // 2 + 1:
            raise ShapeError(f"F={self.power.shape[1]} inconsistent with window_len={self.window_len}")

    @property
    def num_frames(self) -> int:
        return self.power.shape[0]

    @property
    def magnitude(self) -> np.ndarray:
        return np.sqrt(self.power)

    def complex(self) -> np.ndarray:
        return np.sqrt(self.power) * np.exp(1j * self.phase)


def sine_window(n: int) -> np.ndarray:
    return np.sin(np.pi * (np.arange(n) + 0.5) / n)


def cola_sum(window_len: int, hop: int) -> np.ndarray:
    """``sum_m w^2[n - m*hop]`` over one hop period (should be constant)."""
    w2 = sine_window(window_len) ** 2
    return w2.reshape(-1, hop).sum(axis=0) if window_len % hop == 0 else _cola_generic(w2, hop)


def _cola_generic(w2, hop):
    n = len(w2)
    acc = np.zeros(n + hop * (n // hop + 2))
    for m in range(0, len(acc) - n, hop):
        acc[m:m + n] += w2
    return acc[n:n + hop]


def _check_params(window_len: int, hop: int) -> float:
    if window_len < 2 or window_len & (window_len - 1):
        raise ValueError(f"window_len must be a power of two, got {window_len}")
    if not 0 < hop <= window_len:
        raise ValueError(f"hop must be in (0, window_len], got {hop}")
    c = cola_sum(window_len, hop)
    if np.ptp(c) > 1e-9 * c.mean():
        raise ValueError(f"sine window at hop={hop} is not constant-overlap-add")
    return float(c.mean())


def num_frames(num_samples: int, window_len: int = 512, hop: int = 256) -> int:
    return (num_samples - window_len) // hop + 1


def interior_slice(num_frames_: int, window_len: int = 512, hop: int = 256) -> slice:
    """Samples covered by every overlapping frame (edge halves of the outer frames excluded)."""
    return slice(window_len - hop, num_frames_ * hop)


def stft(w: Waveform, window_len: int = 512, hop: int = 256) -> SpectrogramSequence:
    _check_params(window_len, hop)
    s = w.samples
    if len(s) < window_len:
        raise TooShortError(f"{len(s)} samples is shorter than one {window_len}-sample frame")
    T = num_frames(len(s), window_len, hop)
    frames = np.lib.stride_tricks.sliding_window_view(s, window_len)[::hop][:T]
    X = np.fft.rfft(frames * sine_window(window_len), axis=1)
    return SpectrogramSequence(np.abs(X) ** 2, np.angle(X), window_len, hop, w.sample_rate)


def _overlap_add(X: np.ndarray, window_len: int, hop: int) -> np.ndarray:
    c = _check_params(window_len, hop)
    T = X.shape[0]
    frames = np.fft.irfft(X, n=window_len, axis=1) * (sine_window(window_len) / c)
    out = np.zeros((T - 1) * hop + window_len)
    for t in range(T):
        out[t * hop:t * hop + window_len] += frames[t]
    return out


def istft(spec: SpectrogramSequence) -> Waveform:
    if spec.num_frames < 1:
        raise ShapeError("empty spectrogram")
    return Waveform(_overlap_add(spec.complex(), spec.window_len, spec.hop), spec.sample_rate)


def resynth_waveform(sigma2, phase, window_len: int | None = None, hop: int | None = None,
                     sample_rate: int = DEFAULT_SAMPLE_RATE) -> Waveform:
    """Phase-reuse resynthesis: inverse STFT of ``sqrt(sigma2) * exp(j phase)``."""
    sigma2 = np.asarray(sigma2, dtype=np.float64)
    phase = np.asarray(phase, dtype=np.float64)
    if sigma2.shape != phase.shape or sigma2.ndim != 2:
        raise ShapeError(f"sigma2 {sigma2.shape} and phase {phase.shape} must be equal [T, F]")
    if np.any(sigma2 < 0):
        raise ValueError("sigma2 must be nonnegative")
    N = window_len or 2 * (sigma2.shape[1] - 1)
    return istft(SpectrogramSequence(sigma2, phase, N, hop or N // 2, sample_rate))


def bin_weights(window_len: int) -> np.ndarray:
    """Multiplicity of each rfft bin in the full spectrum (1 for DC and Nyquist, else 2)."""
    c = np.full(window_len // 2 + 1, 2.0)
    c[0] = 1.0
    c[-1] = 1.0
    return c


def spectral_energy(X: np.ndarray, window_len: int) -> float:
    """Time-domain energy of the windowed frames implied by rfft coefficients (Parseval)."""
    return float((bin_weights(window_len) * np.abs(X) ** 2).sum() / window_len)
