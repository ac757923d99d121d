"""Analysis-resynthesis evaluation of a trained model on a test set."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .data import TestUtterance
from .metrics import EvalReport, UtteranceScore, is_divergence, magnitude_spectrogram_rmse, waveform_rmse
from .models import DvaeModel
from .spectral import SpectrogramSequence, interior_slice, istft, resynth_waveform


def score_utterance(utt: TestUtterance, sigma2: np.ndarray) -> UtteranceScore:
    """Compare a reconstructed power spectrogram against the reference utterance.

    Both waveforms are scaled by the same factor so the reference peak is 1,
    and the RMSE is taken over the fully overlapped interior samples only.
    """
    spec = utt.spec
    ref = istft(spec).samples
    est = resynth_waveform(sigma2, spec.phase, spec.window_len, spec.hop, spec.sample_rate).samples
    peak = np.max(np.abs(ref))
    g = 1.0 / peak if peak > 0 else 1.0
    inner = interior_slice(spec.num_frames, spec.window_len, spec.hop)
    return UtteranceScore(
        utterance_id=utt.utterance_id,
        rmse=waveform_rmse(g * ref[inner], g * est[inner]),
        spectral_rmse=magnitude_spectrogram_rmse(g * spec.magnitude, g * np.sqrt(sigma2), spec.window_len, spec.hop),
        is_divergence=is_divergence(spec.power, sigma2),
        num_frames=spec.num_frames,
    )


def reconstruct(model: DvaeModel, spec: SpectrogramSequence) -> np.ndarray:
    """Posterior-mean reconstruction of one full-length utterance."""
    with ad.no_grad():
        return model.resynthesize(spec.power[None], use_posterior_mean=True)[0]


def evaluate(model: DvaeModel, tests: list[TestUtterance], checkpoint_id: str = "", dataset_id: str = "") -> EvalReport:
    scores = [score_utterance(u, reconstruct(model, u.spec)) for u in tests]
    return EvalReport(scores, model.config.kind, checkpoint_id, dataset_id)
