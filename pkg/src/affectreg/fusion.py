"""Early (feature-level) and late (prediction-level) fusion.

Early fusion concatenates per-frame feature vectors across modalities so
one regressor sees the joint representation; late fusion averages the
per-modality predictions. Both operate on aligned frame grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .timeseries import FeatureStream, FrameMask
from .validation import as_float_vector, check_equal_length

FUSION_SCHEMES = ("early", "late")


@dataclass(frozen=True)
class FusionConfig:
    scheme: str
    modalities: tuple[str, ...]
    late_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.scheme not in FUSION_SCHEMES:
            raise ValidationError(
                f"unknown fusion scheme {self.scheme!r}; expected one of {FUSION_SCHEMES}"
            )
        object.__setattr__(self, "modalities", tuple(self.modalities))
        if len(self.modalities) < 2:
            raise ValidationError("fusion needs at least 2 modalities")
        if len(set(self.modalities)) != len(self.modalities):
            raise ValidationError(f"duplicate modalities: {self.modalities}")
        if self.late_weights is not None:
            weights = tuple(float(w) for w in self.late_weights)
            object.__setattr__(self, "late_weights", weights)
            if len(weights) != len(self.modalities):
                raise ValidationError(
                    f"{len(weights)} weights for {len(self.modalities)} modalities"
                )
            if any(w < 0 for w in weights):
                raise ValidationError("late weights must be non-negative")
            if abs(sum(weights) - 1.0) > 1e-12:
                raise ValidationError(f"late weights sum to {sum(weights)}, not 1")


def early_fuse(streams: list[FeatureStream], name: str = "fused") -> FeatureStream:
    """Concatenate streams per frame, in the order given.

    The fused mask is the AND of the inputs: a frame survives only when
    every modality produced usable features there.
    """
    if len(streams) < 2:
        raise ValidationError("early fusion needs at least 2 streams")
    counts = {s.n_frames for s in streams}
    if len(counts) > 1:
        raise ValidationError(f"frame counts differ across streams: {sorted(counts)}")
    periods = {s.frame_period_s for s in streams}
    if len(periods) > 1:
        raise ValidationError(f"frame periods differ across streams: {sorted(periods)}")
    mask = streams[0].mask
    for s in streams[1:]:
        mask = mask.intersect(s.mask)
    frames = np.hstack([s.frames for s in streams])
    # rows invalid in any modality may hold detector garbage; zero them
    # so fused content is deterministic on dropped frames
    frames[~mask.valid] = 0.0
    return FeatureStream(
        modality=name,
        frames=frames,
        mask=mask,
        frame_period_s=streams[0].frame_period_s,
    )


def late_fuse(predictions: list, weights=None) -> np.ndarray:
    """Per-frame weighted mean of aligned prediction sequences."""
    if len(predictions) < 2:
        raise ValidationError("late fusion needs at least 2 prediction sequences")
    seqs = [as_float_vector(p, f"predictions[{k}]") for k, p in enumerate(predictions)]
    for s in seqs[1:]:
        check_equal_length(seqs[0], s, "prediction sequences")
    if weights is None:
        w = np.full(len(seqs), 1.0 / len(seqs))
    else:
        w = as_float_vector(weights, "weights")
        if w.size != len(seqs):
            raise ValidationError(f"{w.size} weights for {len(seqs)} sequences")
        if np.any(w < 0):
            raise ValidationError("late weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValidationError(f"late weights sum to {w.sum()}, not 1")
    return np.vstack(seqs).T @ w
