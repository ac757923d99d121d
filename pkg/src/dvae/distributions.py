"""Diagonal Gaussians for latents and the shape-1 Gamma likelihood for power spectra.

All log-densities and divergences reduce over the last axis, so a batch of
``[B, L]`` parameters yields a ``[B]`` tensor and an unbatched ``[L]`` input a scalar.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DomainError, ShapeError

VAR_FLOOR = 1e-6
LOG_VAR_FLOOR = math.log(VAR_FLOOR)
POWER_FLOOR = 1e-10
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def floor_power(x: np.ndarray) -> np.ndarray:
    """Clamp a power spectrogram away from zero (silent bins)."""
    return np.maximum(np.asarray(x, dtype=np.float64), POWER_FLOOR)


@dataclass(frozen=True)
class DiagGaussian:
    mean: Tensor
    log_var: Tensor

    def __post_init__(self):
        if self.mean.shape != self.log_var.shape:
            raise ShapeError(f"mean {self.mean.shape} vs log_var {self.log_var.shape}")

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]

    def floored_log_var(self) -> Tensor:
        return ad.clamp_min(self.log_var, LOG_VAR_FLOOR)

    def variance(self) -> np.ndarray:
        return np.exp(np.maximum(self.log_var.data, LOG_VAR_FLOOR))

    def sample(self, noise) -> Tensor:
        return gaussian_sample(self, noise)

    def log_prob(self, x) -> Tensor:
        return gaussian_log_prob(self, x)


@dataclass(frozen=True)
class StandardGaussianPrior:
    dim: int

    def as_diag(self, batch: int | None = None) -> DiagGaussian:
        shape = (self.dim,) if batch is None else (batch, self.dim)
        return DiagGaussian(ad.zeros(shape), ad.zeros(shape))


@dataclass(frozen=True)
class GammaShape1:
    """Exponential law on power bins; ``exp(log_scale)`` is the power spectral density."""

    log_scale: Tensor

    def scale(self) -> np.ndarray:
        return np.exp(np.maximum(self.log_scale.data, LOG_VAR_FLOOR))

    def log_prob(self, x) -> Tensor:
        return gamma1_log_prob(self, x)


def gaussian_sample(d: DiagGaussian, noise) -> Tensor:
    noise = ad.as_tensor(noise)
    if noise.shape != d.mean.shape:
        raise ShapeError(f"noise shape {noise.shape} != mean shape {d.mean.shape}")
    std = ad.exp(d.floored_log_var() * 0.5)
    return d.mean + std * noise


def gaussian_log_prob(d: DiagGaussian, x) -> Tensor:
    x = ad.as_tensor(x)
    if x.shape != d.mean.shape:
        raise ShapeError(f"x shape {x.shape} != mean shape {d.mean.shape}")
    lv = d.floored_log_var()
    diff = x - d.mean
    per_dim = -_HALF_LOG_2PI - 0.5 * lv - 0.5 * ad.square(diff) * ad.exp(-lv)
    return ad.tsum(per_dim, axis=-1)


def gaussian_kl(q: DiagGaussian, p: DiagGaussian | StandardGaussianPrior) -> Tensor:
    """Closed-form KL(q || p) between diagonal Gaussians."""
    if isinstance(p, StandardGaussianPrior):
        if p.dim != q.dim:
            raise ShapeError(f"KL between dims {q.dim} and {p.dim}")
        lvq = q.floored_log_var()
        per_dim = 0.5 * (ad.exp(lvq) + ad.square(q.mean) - lvq - 1.0)
        return ad.tsum(per_dim, axis=-1)
    if q.mean.shape != p.mean.shape:
        raise ShapeError(f"KL between shapes {q.mean.shape} and {p.mean.shape}")
    lvq, lvp = q.floored_log_var(), p.floored_log_var()
    ratio = ad.exp(lvq - lvp)
    per_dim = 0.5 * (lvp - lvq + ratio + ad.square(q.mean - p.mean) * ad.exp(-lvp) - 1.0)
    return ad.tsum(per_dim, axis=-1)


def gamma1_log_prob(d: GammaShape1, x) -> Tensor:
    """Sum over bins of ``-ln(theta) - x / theta``."""
    xv = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if xv.shape != d.log_scale.shape:
        raise ShapeError(f"x shape {xv.shape} != scale shape {d.log_scale.shape}")
    if np.any(xv < 0.0):
        raise DomainError("power spectrogram values must be nonnegative")
    ls = ad.clamp_min(d.log_scale, LOG_VAR_FLOOR)
    per_bin = ad.neg(ls + ad.exp(-ls) * xv)
    return ad.tsum(per_bin, axis=-1)
