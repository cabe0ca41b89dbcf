"""Frame-indexed affect traces and feature streams.

A trace holds one scalar per 40 ms frame for a single affect dimension;
a feature stream holds one vector per frame for a single modality plus a
validity mask marking frames where the detector produced nothing usable.
All containers are immutable after construction and safe to share across
parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .validation import (
    as_bool_vector,
    as_float_vector,
    check_equal_length,
    readonly,
)

DEFAULT_FRAME_PERIOD_S = 0.04  # 25 fps annotation timeline


class AffectDimension(Enum):
    AROUSAL = "arousal"
    VALENCE = "valence"

    @classmethod
    def parse(cls, text: str) -> "AffectDimension":
        try:
            return cls(text.lower())
        except ValueError:
            raise ValidationError(
                f"unknown affect dimension {text!r}; expected arousal or valence"
            ) from None


@dataclass(frozen=True)
class AffectTrace:
    """Per-frame scalar annotation or prediction sequence for one dimension.

    Gold-standard traces must stay inside [-1, +1]; predictions may exceed
    the range transiently, so the bound is enforced by loaders and the
    generator rather than here.
    """

    dimension: AffectDimension
    values: np.ndarray
    frame_period_s: float = DEFAULT_FRAME_PERIOD_S
    subject_id: str = ""

    def __post_init__(self):
        values = as_float_vector(self.values, "trace values")
        object.__setattr__(self, "values", readonly(values))
        if not (self.frame_period_s > 0 and np.isfinite(self.frame_period_s)):
            raise ValidationError(
                f"frame_period_s must be > 0, got {self.frame_period_s}"
            )

    def __len__(self) -> int:
        return int(self.values.size)

    def check_gold_range(self) -> "AffectTrace":
        if self.values.size and (self.values.min() < -1.0 or self.values.max() > 1.0):
            bad = int(np.argmax((self.values < -1.0) | (self.values > 1.0)))
            raise ValidationError(
                f"gold trace value {self.values[bad]} at frame {bad} "
                "outside [-1, 1]"
            )
        return self


@dataclass(frozen=True)
class FrameMask:
    """Per-frame validity flags; False marks frames to drop from training."""

    valid: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "valid", readonly(as_bool_vector(self.valid)))

    def __len__(self) -> int:
        return int(self.valid.size)

    @property
    def valid_count(self) -> int:
        return int(self.valid.sum())

    def intersect(self, other: "FrameMask") -> "FrameMask":
        check_equal_length(self.valid, other.valid, "masks")
        return FrameMask(self.valid & other.valid)

    @classmethod
    def all_valid(cls, n: int) -> "FrameMask":
        return cls(np.ones(n, dtype=bool))


@dataclass(frozen=True)
class FeatureStream:
    """Per-frame feature vectors for one modality with a validity mask."""

    modality: str
    frames: np.ndarray
    mask: FrameMask
    frame_period_s: float = DEFAULT_FRAME_PERIOD_S

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise ValidationError(
                f"frames must be 2-dimensional, got shape {frames.shape}"
            )
        if frames.shape[1] < 1:
            raise ValidationError("feature dim must be >= 1")
        if len(self.mask) != frames.shape[0]:
            raise ValidationError(
                f"mask length {len(self.mask)} != frame count {frames.shape[0]}"
            )
        valid_rows = frames[self.mask.valid]
        if valid_rows.size and not np.all(np.isfinite(valid_rows)):
            raise ValidationError(
                f"modality {self.modality!r} has non-finite features on valid frames"
            )
        if not (self.frame_period_s > 0 and np.isfinite(self.frame_period_s)):
            raise ValidationError(
                f"frame_period_s must be > 0, got {self.frame_period_s}"
            )
        object.__setattr__(self, "frames", readonly(frames))

    @property
    def dim(self) -> int:
        return int(self.frames.shape[1])

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    def truncated(self, n: int) -> "FeatureStream":
        """First ``n`` frames; used to pair streams with a shifted gold trace."""
        if not 0 <= n <= self.n_frames:
            raise ValidationError(
                f"cannot truncate stream of {self.n_frames} frames to {n}"
            )
        return replace(self, frames=self.frames[:n], mask=FrameMask(self.mask.valid[:n]))


@dataclass(frozen=True)
class SubjectRecord:
    """All streams and gold traces recorded for one subject."""

    subject_id: str
    features: Mapping[str, FeatureStream]
    gold: Mapping[AffectDimension, AffectTrace]

    def __post_init__(self):
        lengths = {m: s.n_frames for m, s in self.features.items()}
        lengths.update({d.value: len(t) for d, t in self.gold.items()})
        if len(set(lengths.values())) > 1:
            raise ValidationError(
                f"subject {self.subject_id!r} has inconsistent frame counts: {lengths}"
            )
        periods = {s.frame_period_s for s in self.features.values()}
        periods.update(t.frame_period_s for t in self.gold.values())
        if len(periods) > 1:
            raise ValidationError(
                f"subject {self.subject_id!r} has inconsistent frame periods: {periods}"
            )

    @property
    def n_frames(self) -> int:
        for stream in self.features.values():
            return stream.n_frames
        for trace in self.gold.values():
            return len(trace)
        return 0


@dataclass(frozen=True)
class DatasetSplit:
    """Train/dev partition with disjoint subject ids."""

    train: tuple[SubjectRecord, ...]
    dev: tuple[SubjectRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "dev", tuple(self.dev))
        train_ids = [r.subject_id for r in self.train]
        dev_ids = [r.subject_id for r in self.dev]
        overlap = set(train_ids) & set(dev_ids)
        if overlap:
            raise ValidationError(f"train/dev subject ids overlap: {sorted(overlap)}")
        for ids, name in ((train_ids, "train"), (dev_ids, "dev")):
            if len(set(ids)) != len(ids):
                raise ValidationError(f"duplicate subject ids in {name} split")


def shift_gold(gold: AffectTrace, delay_frames: int) -> AffectTrace:
    """Advance a gold trace to cancel annotator reaction lag.

    Output frame t carries the input value at t + delay_frames; the final
    delay_frames frames are dropped. Callers truncate the paired feature
    streams to the shortened length so features at frame t line up with
    gold originally annotated at t + delay_frames.
    """
    delay = int(delay_frames)
    if delay < 0:
        raise ValidationError(f"delay_frames must be non-negative, got {delay}")
    if delay >= len(gold):
        raise ValidationError(
            f"delay exceeds trace: delay {delay} >= length {len(gold)}"
        )
    if delay == 0:
        return gold
    return replace(gold, values=gold.values[delay:])


def apply_mask_for_training(
    stream: FeatureStream, gold: AffectTrace
) -> tuple[np.ndarray, np.ndarray]:
    """Keep only valid frames, pairing each kept row with its gold value."""
    if stream.n_frames != len(gold):
        raise ValidationError(
            f"stream has {stream.n_frames} frames but gold has {len(gold)}"
        )
    keep = stream.mask.valid
    if not keep.any():
        raise ValidationError("empty training set: no valid frames under the mask")
    return stream.frames[keep], gold.values[keep]


def impute_predictions(pred, mask: FrameMask, fill_start: float = 0.0) -> np.ndarray:
    """Expand per-valid-frame predictions to a full-length sequence.

    Valid frames take their prediction; invalid frames hold the most recent
    valid prediction; leading invalid frames take ``fill_start`` (default 0,
    the neutral center of the affect range).
    """
    pred = as_float_vector(pred, "pred")
    valid = mask.valid
    if pred.size != int(valid.sum()):
        raise ValidationError(
            f"got {pred.size} predictions for {int(valid.sum())} valid frames"
        )
    out = np.empty(valid.size, dtype=np.float64)
    last = float(fill_start)
    j = 0
    for i in range(valid.size):
        if valid[i]:
            last = pred[j]
            j += 1
        out[i] = last
    return out


def scan_delay(
    gold: AffectTrace, pred, candidate_delays: Sequence[int]
) -> tuple[int, dict[int, float]]:
    """CCC of pred against gold re-aligned at each candidate delay.

    Returns the argmax delay (ties broken toward the smallest delay) and the
    full delay -> CCC table.
    """
    from . import metrics

    candidates = [int(d) for d in candidate_delays]
    if not candidates:
        raise ValidationError("candidate_delays is empty")
    pred = as_float_vector(pred, "pred")
    check_equal_length(pred, gold.values, "pred and gold")
    table: dict[int, float] = {}
    for d in candidates:
        shifted = shift_gold(gold, d)
        if len(shifted) < 2:
            raise ValidationError(f"delay {d} leaves fewer than 2 frames")
        table[d] = metrics.ccc(pred[: len(shifted)], shifted.values)
    best = max(sorted(table), key=lambda d: (table[d], -d))
    return best, table
