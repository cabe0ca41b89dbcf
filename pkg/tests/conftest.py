"""Shared fixtures: tiny deterministic datasets that keep the suite fast."""

import numpy as np
import pytest

from affectreg.ingest import ModalitySpec, SynthSpec, generate_synthetic
from affectreg.timeseries import AffectDimension


def smooth_signal(rng, n, n_components=6, bandwidth_hz=0.5, period_s=0.04):
    """Band-limited random signal in (-1, 1), good stand-in for an affect trace."""
    t = np.arange(n) * period_s
    amps = rng.uniform(0.3, 1.0, n_components)
    freqs = rng.uniform(0.02, bandwidth_hz, n_components)
    phases = rng.uniform(0.0, 2.0 * np.pi, n_components)
    return np.tanh(0.5 * np.sum(amps[:, None] * np.sin(2 * np.pi * freqs[:, None] * t + phases[:, None]), axis=0))


@pytest.fixture(scope="session")
def clean_split():
    """Noise-free single-modality split: 2 train / 1 dev subjects, no lag."""
    spec = SynthSpec(
        n_subjects_train=2,
        n_subjects_dev=1,
        frames_per_subject=160,
        modalities=(ModalitySpec("audio", 3),),
        dimensions=(AffectDimension.AROUSAL,),
        seed=7,
    )
    return generate_synthetic(spec)


@pytest.fixture(scope="session")
def noisy_split():
    """Two noisy modalities with dropped frames and a 20-frame annotation lag."""
    spec = SynthSpec(
        n_subjects_train=2,
        n_subjects_dev=1,
        frames_per_subject=200,
        modalities=(
            ModalitySpec("audio", 4, noise_sigma=0.2, invalid_fraction=0.1),
            ModalitySpec("video", 3, noise_sigma=0.2, invalid_fraction=0.15),
        ),
        annotation_lag_frames=20,
        seed=11,
    )
    return generate_synthetic(spec)
