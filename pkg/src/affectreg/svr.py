"""Epsilon-SVR trained by sequential minimal optimization.

The dual is solved over 2n box variables (one pair per training row)
with a single equality constraint. Each step picks the maximal
KKT-violating pair, solves the two-variable subproblem in closed form,
and updates the cached kernel expansion, so the dual objective decreases
monotonically until the violation gap drops below ``tol``.

Feature standardization is folded into the model: fit computes per-column
mean/std on the training rows and predict re-applies them, so callers
never handle scaling themselves.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, RegressorMixin

from . import metrics
from .errors import DataFormatError, ValidationError
from .validation import (
    as_float_matrix,
    as_float_vector,
    check_equal_length,
    check_positive,
    readonly,
)

# curvature floor for the two-variable subproblem; mirrors the usual
# SMO guard so duplicate rows cannot divide by zero
TAU = 1e-12

DEFAULT_TOL = 1e-3
DEFAULT_MAX_PASSES = 10_000

DEFAULT_C_GRID = (1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)
DEFAULT_EPSILON_GRID = (1e-4, 1e-3, 1e-2, 1e-1)

MODEL_FORMAT = "affectreg-svr-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class KernelConfig:
    name: str = "linear"
    gamma: float | None = None

    def __post_init__(self):
        if self.name not in ("linear", "rbf"):
            raise ValidationError(f"unknown kernel {self.name!r}")
        if self.name == "rbf":
            if self.gamma is None or not (self.gamma > 0 and np.isfinite(self.gamma)):
                raise ValidationError(f"rbf kernel needs gamma > 0, got {self.gamma}")
        elif self.gamma is not None:
            raise ValidationError("linear kernel takes no gamma")

    def matrix(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        if self.name == "linear":
            return A @ B.T
        sq = (
            np.sum(A * A, axis=1)[:, None]
            + np.sum(B * B, axis=1)[None, :]
            - 2.0 * (A @ B.T)
        )
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-self.gamma * sq)


@dataclass(frozen=True)
class SvrHyperParams:
    """Regularization weight, tube half-width, and kernel choice."""

    c: float
    epsilon: float
    kernel: KernelConfig = KernelConfig()

    def __post_init__(self):
        check_positive(self.c, "c")
        if not (self.epsilon >= 0 and np.isfinite(self.epsilon)):
            raise ValidationError(f"epsilon must be >= 0, got {self.epsilon}")


@dataclass(frozen=True)
class GridSpec:
    c_values: tuple[float, ...] = DEFAULT_C_GRID
    epsilon_values: tuple[float, ...] = DEFAULT_EPSILON_GRID
    kernels: tuple[KernelConfig, ...] = (KernelConfig(),)

    def __post_init__(self):
        object.__setattr__(self, "c_values", tuple(float(c) for c in self.c_values))
        object.__setattr__(
            self, "epsilon_values", tuple(float(e) for e in self.epsilon_values)
        )
        object.__setattr__(self, "kernels", tuple(self.kernels))
        if not (self.c_values and self.epsilon_values and self.kernels):
            raise ValidationError("grid axes must be non-empty")
        for c in self.c_values:
            check_positive(c, "grid c")
        for e in self.epsilon_values:
            if not (e >= 0 and np.isfinite(e)):
                raise ValidationError(f"grid epsilon must be >= 0, got {e}")

    def cells(self) -> list[SvrHyperParams]:
        return [
            SvrHyperParams(c, e, k)
            for k in self.kernels
            for c in self.c_values
            for e in self.epsilon_values
        ]


class Standardizer(BaseEstimator):
    """Per-column z-scoring with population std; constant columns pass
    through centered (std stored as 1)."""

    def fit(self, X, y=None):
        X = as_float_matrix(X, "X", min_rows=2)
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0.0] = 1.0
        self.scale_ = std
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        X = as_float_matrix(X, "X")
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(
                f"expected {self.n_features_in_} columns, got {X.shape[1]}"
            )
        return (X - self.mean_) / self.scale_

    def fit_transform(self, X, y=None) -> np.ndarray:
        return self.fit(X).transform(X)


@dataclass(frozen=True)
class SvrModel:
    """Trained regressor: kernel expansion over retained rows plus bias.

    Rows whose dual coefficient came out exactly zero are dropped, so
    ``support_vectors`` and ``dual_coefs`` cover support vectors only.
    """

    hyper: SvrHyperParams
    mean: np.ndarray
    scale: np.ndarray
    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    converged: bool = True
    n_updates: int = 0
    termination: str = "converged"

    def __post_init__(self):
        object.__setattr__(self, "mean", readonly(as_float_vector(self.mean, "mean")))
        object.__setattr__(
            self, "scale", readonly(as_float_vector(self.scale, "scale"))
        )
        sv = np.asarray(self.support_vectors, dtype=np.float64)
        if sv.ndim != 2:
            raise ValidationError("support_vectors must be 2-dimensional")
        coefs = as_float_vector(self.dual_coefs, "dual_coefs")
        if sv.shape[0] != coefs.size:
            raise ValidationError(
                f"{sv.shape[0]} support vectors but {coefs.size} dual coefs"
            )
        object.__setattr__(self, "support_vectors", readonly(sv))
        object.__setattr__(self, "dual_coefs", readonly(coefs))

    @property
    def n_support(self) -> int:
        return int(self.dual_coefs.size)


def _dual_objective_theta(K, y, theta, epsilon) -> float:
    n = y.size
    beta = theta[:n] - theta[n:]
    return 0.5 * float(beta @ K @ beta) + epsilon * float(theta.sum()) - float(y @ beta)


def dual_objective(K, y, beta, epsilon: float) -> float:
    """Dual value of a coefficient vector in reduced form.

    Minimized over the box {sum(beta)=0, |beta_i| <= C}; any feasible beta
    scores at or above the optimum, which is what solver-vs-solver
    comparisons need.
    """
    beta = as_float_vector(beta, "beta")
    return (
        0.5 * float(beta @ K @ beta)
        + float(epsilon) * float(np.abs(beta).sum())
        - float(np.asarray(y, dtype=np.float64) @ beta)
    )


def _smo(K, y, c, epsilon, tol, max_updates, record_objective=False):
    """SMO on the doubled variable vector.

    theta[:n] holds the positive-side coefficients, theta[n:] the
    negative side; beta = theta[:n] - theta[n:] and base = y - K @ beta
    are maintained incrementally. Pair selection is the maximal KKT
    violator joined with the partner promising the largest objective
    decrease for the two-variable step.
    """
    n = y.size
    theta = np.zeros(2 * n)
    beta = np.zeros(n)
    base = y.copy()
    kdiag = np.ascontiguousarray(np.diag(K))
    neg = np.empty(2 * n)
    trace: list[float] = []
    updates = 0
    converged = False
    while True:
        # negated projected gradient; the two halves differ only by the
        # sign of the tube term
        neg[:n] = base - epsilon
        neg[n:] = base + epsilon
        up = np.empty(2 * n, dtype=bool)
        np.less(theta[:n], c, out=up[:n])
        np.greater(theta[n:], 0.0, out=up[n:])
        low = np.empty(2 * n, dtype=bool)
        np.greater(theta[:n], 0.0, out=low[:n])
        np.less(theta[n:], c, out=low[n:])
        i = int(np.argmax(np.where(up, neg, -np.inf)))
        m_up = neg[i]
        m_low = np.min(np.where(low, neg, np.inf))
        gap = m_up - m_low
        if gap <= tol:
            converged = True
            break
        if updates >= max_updates:
            break
        p = i % n
        diff = m_up - neg
        eta = np.maximum(kdiag[p] + kdiag - 2.0 * K[p], TAU)
        score = diff * diff
        score[:n] /= eta
        score[n:] /= eta
        usable = low & (diff > 0.0)
        j = int(np.argmax(np.where(usable, score, -np.inf)))
        q = j % n
        step = diff[j] / max(K[p, p] + K[q, q] - 2.0 * K[p, q], TAU)
        cap_i = (c - theta[i]) if i < n else theta[i]
        cap_j = theta[j] if j < n else (c - theta[j])
        delta = min(step, cap_i, cap_j)
        theta[i] += delta if i < n else -delta
        theta[j] -= delta if j < n else -delta
        # keep box membership exact so the free-variable test below is
        # a strict comparison, not an epsilon test
        theta[i] = min(max(theta[i], 0.0), c)
        theta[j] = min(max(theta[j], 0.0), c)
        if p != q:
            beta[p] += delta
            beta[q] -= delta
            base -= delta * (K[:, p] - K[:, q])
        # p == q pairs shrink both sides of one row; beta is unchanged
        updates += 1
        if record_objective:
            trace.append(_dual_objective_theta(K, y, theta, epsilon))

    free = (theta > 0.0) & (theta < c)
    if free.any():
        bias = float(neg[free].mean())
    else:
        bias = float((m_up + m_low) / 2.0)
    return beta, bias, updates, converged, trace


def train_svr(
    X,
    y,
    hyper: SvrHyperParams,
    tol: float = DEFAULT_TOL,
    max_passes: int = DEFAULT_MAX_PASSES,
    subsample: int | None = None,
    subsample_seed: int = 0,
    record_objective: bool = False,
):
    """Fit an epsilon-SVR; returns the model, plus the objective trace
    when instrumentation is requested.

    ``max_passes`` is a sweep budget: the solver stops after
    max_passes * n pair updates and flags the model as unconverged.
    ``subsample`` caps the number of training rows (seeded, sorted draw)
    for oversized synthetic sets; off by default.
    """
    X = as_float_matrix(X, "X", min_rows=2)
    y = as_float_vector(y, "y")
    check_equal_length(X, y, "X rows and y")
    check_positive(tol, "tol")
    if max_passes < 1:
        raise ValidationError(f"max_passes must be >= 1, got {max_passes}")
    if subsample is not None and subsample < 2:
        raise ValidationError(f"subsample must be >= 2, got {subsample}")
    if subsample is not None and subsample < X.shape[0]:
        keep = np.sort(
            np.random.default_rng(subsample_seed).choice(
                X.shape[0], size=subsample, replace=False
            )
        )
        X, y = X[keep], y[keep]

    standardizer = Standardizer().fit(X)
    Xs = standardizer.transform(X)
    K = hyper.kernel.matrix(Xs, Xs)
    max_updates = int(max_passes) * Xs.shape[0]
    beta, bias, updates, converged, trace = _smo(
        K, y, hyper.c, hyper.epsilon, tol, max_updates, record_objective
    )
    if not converged:
        warnings.warn(
            f"SMO used its full budget of {max_updates} pair updates "
            f"without reaching tol={tol}",
            RuntimeWarning,
            stacklevel=2,
        )
    keep = beta != 0.0
    model = SvrModel(
        hyper=hyper,
        mean=standardizer.mean_,
        scale=standardizer.scale_,
        support_vectors=Xs[keep],
        dual_coefs=beta[keep],
        bias=bias,
        converged=converged,
        n_updates=updates,
        termination="converged" if converged else "max_passes",
    )
    if record_objective:
        return model, trace
    return model


def predict(model: SvrModel, X) -> np.ndarray:
    """Kernel expansion over the stored support vectors."""
    X = as_float_matrix(X, "X")
    if X.shape[1] != model.mean.size:
        raise ValidationError(
            f"model expects {model.mean.size} columns, got {X.shape[1]}"
        )
    Xs = (X - model.mean) / model.scale
    if model.n_support == 0:
        return np.full(X.shape[0], model.bias)
    K = model.hyper.kernel.matrix(Xs, model.support_vectors)
    return K @ model.dual_coefs + model.bias


class SvrRegressor(BaseEstimator, RegressorMixin):
    """Estimator-style wrapper around train_svr/predict."""

    def __init__(
        self,
        c: float = 1.0,
        epsilon: float = 0.1,
        kernel: str = "linear",
        gamma: float | None = None,
        tol: float = DEFAULT_TOL,
        max_passes: int = DEFAULT_MAX_PASSES,
        subsample: int | None = None,
        subsample_seed: int = 0,
    ):
        self.c = c
        self.epsilon = epsilon
        self.kernel = kernel
        self.gamma = gamma
        self.tol = tol
        self.max_passes = max_passes
        self.subsample = subsample
        self.subsample_seed = subsample_seed

    def _hyper(self) -> SvrHyperParams:
        return SvrHyperParams(self.c, self.epsilon, KernelConfig(self.kernel, self.gamma))

    def fit(self, X, y):
        self.model_ = train_svr(
            X,
            y,
            self._hyper(),
            tol=self.tol,
            max_passes=self.max_passes,
            subsample=self.subsample,
            subsample_seed=self.subsample_seed,
        )
        self.converged_ = self.model_.converged
        self.n_updates_ = self.model_.n_updates
        self.intercept_ = self.model_.bias
        self.n_features_in_ = self.model_.mean.size
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "model_"):
            raise ValidationError("predict called before fit")
        return predict(self.model_, X)


@dataclass(frozen=True)
class GridCell:
    hyper: SvrHyperParams
    score: float | None
    error: str | None = None


def _fit_and_score(X_tr, y_tr, X_dev, y_dev, hyper, tol, max_passes, objective):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            model = train_svr(X_tr, y_tr, hyper, tol=tol, max_passes=max_passes)
        pred = predict(model, X_dev)
        return GridCell(hyper, metrics.score(pred, y_dev, objective))
    except Exception as exc:  # noqa: BLE001 - cell failures go in the table
        return GridCell(hyper, None, error=f"{type(exc).__name__}: {exc}")


def grid_search(
    grid: GridSpec,
    train: tuple,
    dev: tuple,
    objective: str = "ccc",
    tol: float = DEFAULT_TOL,
    max_passes: int = DEFAULT_MAX_PASSES,
    n_jobs: int = 1,
) -> tuple[SvrHyperParams, list[GridCell]]:
    """Exhaustive search over the grid, scored on the dev pair.

    Cells run independently (optionally in parallel); the table keeps
    grid order so results are identical for any job count. Ties go to
    the smaller c, then the smaller epsilon.
    """
    X_tr, y_tr = train
    X_dev, y_dev = dev
    X_tr = as_float_matrix(X_tr, "train X", min_rows=2)
    y_tr = as_float_vector(y_tr, "train y")
    X_dev = as_float_matrix(X_dev, "dev X")
    y_dev = as_float_vector(y_dev, "dev y")
    cells = grid.cells()
    results = Parallel(n_jobs=n_jobs)(
        delayed(_fit_and_score)(
            X_tr, y_tr, X_dev, y_dev, hyper, tol, max_passes, objective
        )
        for hyper in cells
    )
    scored = [(idx, cell) for idx, cell in enumerate(results) if cell.error is None]
    if not scored:
        raise ValidationError("every grid cell failed to train")
    kernel_order = {k: i for i, k in enumerate(grid.kernels)}
    best = min(
        scored,
        key=lambda item: (
            -item[1].score,
            item[1].hyper.c,
            item[1].hyper.epsilon,
            kernel_order[item[1].hyper.kernel],
        ),
    )[1]
    return best.hyper, list(results)


def model_to_dict(model: SvrModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kernel": {"name": model.hyper.kernel.name, "gamma": model.hyper.kernel.gamma},
        "c": model.hyper.c,
        "epsilon": model.hyper.epsilon,
        "mean": model.mean.tolist(),
        "scale": model.scale.tolist(),
        "support_vectors": model.support_vectors.tolist(),
        "dual_coefs": model.dual_coefs.tolist(),
        "bias": model.bias,
        "converged": model.converged,
        "n_updates": model.n_updates,
        "termination": model.termination,
    }


def model_from_dict(record: dict) -> SvrModel:
    if record.get("format") != MODEL_FORMAT:
        raise DataFormatError(
            f"not a model record: format={record.get('format')!r}"
        )
    if record.get("version") != MODEL_VERSION:
        raise DataFormatError(
            f"unsupported model version {record.get('version')!r}"
        )
    kernel = KernelConfig(record["kernel"]["name"], record["kernel"]["gamma"])
    n_sv = len(record["dual_coefs"])
    sv = np.asarray(record["support_vectors"], dtype=np.float64)
    if sv.size == 0:
        sv = np.zeros((0, len(record["mean"])))
    return SvrModel(
        hyper=SvrHyperParams(record["c"], record["epsilon"], kernel),
        mean=np.asarray(record["mean"], dtype=np.float64),
        scale=np.asarray(record["scale"], dtype=np.float64),
        support_vectors=sv.reshape(n_sv, len(record["mean"])),
        dual_coefs=np.asarray(record["dual_coefs"], dtype=np.float64),
        bias=record["bias"],
        converged=record["converged"],
        n_updates=record["n_updates"],
        termination=record["termination"],
    )


def save_model(model: SvrModel, path) -> None:
    """JSON with shortest-round-trip float literals; reloading is
    bit-exact."""
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model), indent=1) + "\n", encoding="ascii")


def load_model(path) -> SvrModel:
    path = Path(path)
    try:
        record = json.loads(path.read_text(encoding="ascii"))
    except (OSError, ValueError) as exc:
        raise DataFormatError(f"{path}: unreadable model file: {exc}") from exc
    if not isinstance(record, dict):
        raise DataFormatError(f"{path}: model record must be a JSON object")
    try:
        return model_from_dict(record)
    except (KeyError, TypeError) as exc:
        raise DataFormatError(f"{path}: malformed model record: {exc}") from exc
