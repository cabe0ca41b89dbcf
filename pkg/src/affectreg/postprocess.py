"""Prediction enhancement: median smoothing, variance-matching rescaling,
and mean centering, with a dev-set tuner over the step combinations.

Scale and gold-mean statistics are always fitted on raw training
predictions against training gold; the tuner only decides which steps to
enable and with which settings, scored by dev CCC.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import metrics
from .errors import ValidationError
from .validation import as_float_vector, check_equal_length

SCALE_MODES = ("std_ratio", "mean_ratio")
# subtract_gold_mean shifts by the gold mean alone; align_means moves the
# prediction mean onto the gold mean
CENTER_MODES = ("align_means", "subtract_gold_mean")
STEP_NAMES = ("median", "scale", "center")

MIN_WINDOW_S = 0.4
MAX_WINDOW_S = 8.0
DEFAULT_WINDOWS_S = (0.4, 0.8, 1.6, 2.0, 2.8, 4.0, 8.0)


def window_frames(window_s: float, frame_period_s: float) -> int:
    """Window length in frames, forced odd and >= 1."""
    if not (frame_period_s > 0 and np.isfinite(frame_period_s)):
        raise ValidationError(f"frame_period_s must be > 0, got {frame_period_s}")
    w = int(round(window_s / frame_period_s))
    if w % 2 == 0:
        w += 1
    return max(w, 1)


def median_filter(
    pred,
    window_s: float,
    frame_period_s: float,
    allow_any_window: bool = False,
) -> np.ndarray:
    """Sliding median with shrinking windows at the edges.

    Near the edges the window shrinks symmetrically (it stays centered
    and odd) rather than being padded, so no fabricated values enter any
    median and the filter is a no-op on monotone stretches.
    """
    pred = as_float_vector(pred, "pred", min_len=1)
    if not allow_any_window and not (MIN_WINDOW_S <= window_s <= MAX_WINDOW_S):
        raise ValidationError(
            f"window_s {window_s} outside [{MIN_WINDOW_S}, {MAX_WINDOW_S}]; "
            "pass allow_any_window=True to override"
        )
    w = window_frames(window_s, frame_period_s)
    half = w // 2
    n = pred.size
    out = np.empty(n)
    for i in range(n):
        r = min(half, i, n - 1 - i)
        out[i] = np.median(pred[i - r : i + r + 1])
    return out


def fit_scale_factor(gold_train, pred_train, mode: str = "std_ratio") -> float:
    """Train-set ratio used to rescale predictions.

    std_ratio divides population standard deviations, mean_ratio divides
    means. A zero denominator means the predictions carry no usable
    statistic to match.
    """
    gold_train = as_float_vector(gold_train, "gold_train", min_len=2)
    pred_train = as_float_vector(pred_train, "pred_train", min_len=2)
    check_equal_length(gold_train, pred_train, "gold_train and pred_train")
    if mode not in SCALE_MODES:
        raise ValidationError(f"unknown scale mode {mode!r}; expected {SCALE_MODES}")
    if mode == "std_ratio":
        num, den = float(np.std(gold_train)), float(np.std(pred_train))
    else:
        num, den = float(np.mean(gold_train)), float(np.mean(pred_train))
    if den == 0.0:
        raise ValidationError(
            f"degenerate predictions: {mode} denominator is zero"
        )
    return num / den


def apply_scaling(pred, scale_factor: float) -> np.ndarray:
    pred = as_float_vector(pred, "pred")
    if not (np.isfinite(scale_factor) and scale_factor > 0):
        raise ValidationError(f"scale factor must be finite and > 0, got {scale_factor}")
    return pred * scale_factor


def apply_centering(
    pred, gold_mean: float, mode: str = "align_means", pred_mean: float | None = None
) -> np.ndarray:
    """Shift a prediction sequence toward the gold mean.

    align_means adds (gold_mean - pred_mean); subtract_gold_mean removes
    gold_mean outright. pred_mean defaults to the sequence's own mean, so
    align_means leaves the output mean exactly at gold_mean.
    """
    pred = as_float_vector(pred, "pred")
    if mode not in CENTER_MODES:
        raise ValidationError(f"unknown center mode {mode!r}; expected {CENTER_MODES}")
    if not np.isfinite(gold_mean):
        raise ValidationError(f"gold_mean must be finite, got {gold_mean}")
    if mode == "subtract_gold_mean":
        return pred - gold_mean
    if pred_mean is None:
        pred_mean = float(np.mean(pred)) if pred.size else 0.0
    if not np.isfinite(pred_mean):
        raise ValidationError(f"pred_mean must be finite, got {pred_mean}")
    return pred + (gold_mean - pred_mean)


@dataclass(frozen=True)
class PostProcessParams:
    """Fitted settings for the enhancement chain.

    A step is enabled exactly when its parameter is set, and step_order
    records the application order (default median -> scale -> center for
    whichever steps are on).
    """

    median_window_s: float | None = None
    scale_factor: float | None = None
    gold_mean_train: float | None = None
    scale_mode: str = "std_ratio"
    center_mode: str = "align_means"
    step_order: tuple[str, ...] = ()

    def __post_init__(self):
        if self.median_window_s is not None and not (
            MIN_WINDOW_S <= self.median_window_s <= MAX_WINDOW_S
        ):
            raise ValidationError(
                f"median_window_s {self.median_window_s} outside "
                f"[{MIN_WINDOW_S}, {MAX_WINDOW_S}]"
            )
        if self.scale_factor is not None and not (
            np.isfinite(self.scale_factor) and self.scale_factor > 0
        ):
            raise ValidationError(f"scale_factor must be > 0, got {self.scale_factor}")
        if self.gold_mean_train is not None and not np.isfinite(self.gold_mean_train):
            raise ValidationError("gold_mean_train must be finite")
        if self.scale_mode not in SCALE_MODES:
            raise ValidationError(f"unknown scale mode {self.scale_mode!r}")
        if self.center_mode not in CENTER_MODES:
            raise ValidationError(f"unknown center mode {self.center_mode!r}")
        enabled = self.enabled_steps()
        order = tuple(self.step_order) or enabled
        object.__setattr__(self, "step_order", order)
        if sorted(order) != sorted(enabled):
            raise ValidationError(
                f"step_order {order} does not match enabled steps {enabled}"
            )

    def enabled_steps(self) -> tuple[str, ...]:
        steps = []
        if self.median_window_s is not None:
            steps.append("median")
        if self.scale_factor is not None:
            steps.append("scale")
        if self.gold_mean_train is not None:
            steps.append("center")
        return tuple(steps)

    @property
    def n_steps(self) -> int:
        return len(self.step_order)

    def to_dict(self) -> dict:
        return {
            "median_window_s": self.median_window_s,
            "scale_factor": self.scale_factor,
            "gold_mean_train": self.gold_mean_train,
            "scale_mode": self.scale_mode,
            "center_mode": self.center_mode,
            "step_order": list(self.step_order),
        }

    @classmethod
    def from_dict(cls, record: dict) -> "PostProcessParams":
        return cls(
            median_window_s=record["median_window_s"],
            scale_factor=record["scale_factor"],
            gold_mean_train=record["gold_mean_train"],
            scale_mode=record["scale_mode"],
            center_mode=record["center_mode"],
            step_order=tuple(record["step_order"]),
        )


def fit_chain(
    gold_train,
    pred_train,
    median_window_s: float | None = None,
    use_scale: bool = False,
    scale_mode: str = "std_ratio",
    use_center: bool = False,
    center_mode: str = "align_means",
) -> PostProcessParams:
    """Fit chain statistics on the training pair; toggles pick the steps."""
    gold_train = as_float_vector(gold_train, "gold_train", min_len=2)
    pred_train = as_float_vector(pred_train, "pred_train", min_len=2)
    check_equal_length(gold_train, pred_train, "gold_train and pred_train")
    scale_factor = (
        fit_scale_factor(gold_train, pred_train, scale_mode) if use_scale else None
    )
    return PostProcessParams(
        median_window_s=median_window_s,
        scale_factor=scale_factor,
        gold_mean_train=float(np.mean(gold_train)) if use_center else None,
        scale_mode=scale_mode,
        center_mode=center_mode,
    )


def apply_chain(pred, params: PostProcessParams, frame_period_s: float) -> np.ndarray:
    """Run the enabled steps in params.step_order."""
    out = as_float_vector(pred, "pred")
    for step in params.step_order:
        if step == "median":
            out = median_filter(out, params.median_window_s, frame_period_s)
        elif step == "scale":
            out = apply_scaling(out, params.scale_factor)
        elif step == "center":
            out = apply_centering(out, params.gold_mean_train, params.center_mode)
        else:
            raise ValidationError(f"unknown chain step {step!r}")
    return out


@dataclass(frozen=True)
class ChainSearchSpace:
    windows_s: tuple[float, ...] = DEFAULT_WINDOWS_S
    scale_modes: tuple[str, ...] = SCALE_MODES
    center_mode: str = "align_means"

    def __post_init__(self):
        object.__setattr__(self, "windows_s", tuple(float(w) for w in self.windows_s))
        object.__setattr__(self, "scale_modes", tuple(self.scale_modes))
        for w in self.windows_s:
            if not (MIN_WINDOW_S <= w <= MAX_WINDOW_S):
                raise ValidationError(
                    f"search window {w} outside [{MIN_WINDOW_S}, {MAX_WINDOW_S}]"
                )
        if not self.scale_modes:
            raise ValidationError("scale_modes must be non-empty")
        for m in self.scale_modes:
            if m not in SCALE_MODES:
                raise ValidationError(f"unknown scale mode {m!r}")
        if self.center_mode not in CENTER_MODES:
            raise ValidationError(f"unknown center mode {self.center_mode!r}")


@dataclass(frozen=True)
class ChainCell:
    params: PostProcessParams | None
    ccc: float | None
    error: str | None = None


def tune_chain(
    raw_dev_pred,
    gold_dev,
    raw_train_pred,
    gold_train,
    space: ChainSearchSpace = ChainSearchSpace(),
    frame_period_s: float = 0.04,
) -> tuple[PostProcessParams, list[ChainCell]]:
    """Pick the step combination maximizing dev CCC.

    Every window (plus "off") is crossed with the scale toggle, the
    center toggle, and the scale mode; the empty chain is always a
    candidate, so the winner can never score below it. Ties go to fewer
    enabled steps, then the smaller window, then enumeration order.
    Cells whose statistics cannot be fitted (for example a zero-variance
    prediction under std_ratio) are recorded as errors and skipped.
    """
    raw_dev_pred = as_float_vector(raw_dev_pred, "raw_dev_pred", min_len=2)
    gold_dev = as_float_vector(gold_dev, "gold_dev", min_len=2)
    check_equal_length(raw_dev_pred, gold_dev, "dev pred and gold")
    raw_train_pred = as_float_vector(raw_train_pred, "raw_train_pred", min_len=2)
    gold_train = as_float_vector(gold_train, "gold_train", min_len=2)
    check_equal_length(raw_train_pred, gold_train, "train pred and gold")

    filtered: dict[float | None, np.ndarray] = {None: raw_dev_pred}
    for w in space.windows_s:
        filtered[w] = median_filter(raw_dev_pred, w, frame_period_s)

    table: list[ChainCell] = []
    for window in (None, *space.windows_s):
        for use_scale in (False, True):
            for use_center in (False, True):
                for scale_mode in space.scale_modes:
                    try:
                        params = fit_chain(
                            gold_train,
                            raw_train_pred,
                            median_window_s=window,
                            use_scale=use_scale,
                            scale_mode=scale_mode,
                            use_center=use_center,
                            center_mode=space.center_mode,
                        )
                        out = filtered[window]
                        if use_scale:
                            out = apply_scaling(out, params.scale_factor)
                        if use_center:
                            out = apply_centering(
                                out, params.gold_mean_train, params.center_mode
                            )
                        table.append(ChainCell(params, metrics.ccc(out, gold_dev)))
                    except ValidationError as exc:
                        table.append(ChainCell(None, None, error=str(exc)))

    scored = [(idx, cell) for idx, cell in enumerate(table) if cell.error is None]
    if not scored:
        raise ValidationError("every chain configuration failed to fit")
    best = min(
        scored,
        key=lambda item: (
            -item[1].ccc,
            item[1].params.n_steps,
            item[1].params.median_window_s or 0.0,
            item[0],
        ),
    )[1]
    return best.params, table
