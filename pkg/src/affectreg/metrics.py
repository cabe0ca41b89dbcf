"""Evaluation metrics for prediction/gold trace pairs.

Three metrics are exposed: mean absolute error, Pearson correlation, and the
concordance correlation coefficient

    CCC = 2 * cov(y, g) / (var(y) + var(g) + (mean(y) - mean(g))^2)

which equals ``2 * rho * sd(y) * sd(g)`` over the same denominator and
penalizes scale and mean disagreement on top of decorrelation.

All moments are population moments (divide by n, not n-1), and every sum is
accumulated with compensated summation (``math.fsum``) so that results stay
trustworthy to ~1e-12 relative at sequence lengths around 1e5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .validation import as_float_vector, check_equal_length


@dataclass(frozen=True)
class EvaluationReport:
    """CCC, MAE, Pearson rho, and the moments they were computed from.

    ``degenerate`` is set when either sequence has zero variance, in which
    case ``pearson_rho`` is 0 by convention and ``ccc`` follows the
    continuous-limit conventions (1 for two identical constant sequences,
    0 otherwise).
    """

    ccc: float
    mae: float
    pearson_rho: float
    mean_pred: float
    mean_gold: float
    var_pred: float
    var_gold: float
    n: int
    degenerate: bool = False

    RECORD_KEYS = ("ccc", "mae", "pearson", "mean_pred", "mean_gold",
                   "var_pred", "var_gold", "n")

    def to_record(self) -> dict:
        """Flat key-value record with the documented exact key set."""
        return {
            "ccc": self.ccc,
            "mae": self.mae,
            "pearson": self.pearson_rho,
            "mean_pred": self.mean_pred,
            "mean_gold": self.mean_gold,
            "var_pred": self.var_pred,
            "var_gold": self.var_gold,
            "n": self.n,
        }

    def record_text(self) -> str:
        """One ``key=value`` pair per line, full float precision."""
        return "\n".join(f"{k}={v!r}" for k, v in self.to_record().items())


def _pair(pred, gold, min_len: int):
    p = as_float_vector(pred, "pred", min_len=min_len)
    g = as_float_vector(gold, "gold", min_len=min_len)
    check_equal_length(p, g, "pred and gold")
    return p, g


def _moments(p: np.ndarray, g: np.ndarray):
    n = p.size
    mean_p = math.fsum(p) / n
    mean_g = math.fsum(g) / n
    # a constant sequence must yield exactly zero variance, but its
    # rounded mean can leave tiny nonzero deviations; pin it
    if p.max() == p.min():
        mean_p = float(p[0])
    if g.max() == g.min():
        mean_g = float(g[0])
    dp = p - mean_p
    dg = g - mean_g
    var_p = math.fsum(dp * dp) / n
    var_g = math.fsum(dg * dg) / n
    cov = math.fsum(dp * dg) / n
    return mean_p, mean_g, var_p, var_g, cov


def mae(pred, gold) -> float:
    """Mean absolute error, (1/n) * sum |pred_j - gold_j|."""
    p, g = _pair(pred, gold, min_len=1)
    return math.fsum(np.abs(p - g)) / p.size


def pearson(pred, gold) -> float:
    """Sample Pearson correlation using population moments.

    Returns 0 when either sequence is constant (degenerate case).
    """
    p, g = _pair(pred, gold, min_len=2)
    _, _, var_p, var_g, cov = _moments(p, g)
    if var_p == 0.0 or var_g == 0.0:
        return 0.0
    return cov / math.sqrt(var_p * var_g)


def ccc(pred, gold) -> float:
    """Concordance correlation coefficient as a scalar."""
    return evaluate(pred, gold).ccc


def evaluate(pred, gold) -> EvaluationReport:
    """Full metric report for a prediction/gold pair of length >= 2."""
    p, g = _pair(pred, gold, min_len=2)
    n = p.size
    mean_p, mean_g, var_p, var_g, cov = _moments(p, g)
    mae_value = math.fsum(np.abs(p - g)) / n

    degenerate = var_p == 0.0 or var_g == 0.0
    if degenerate:
        rho = 0.0
        if var_p == 0.0 and var_g == 0.0:
            ccc_value = 1.0 if mean_p == mean_g else 0.0
        else:
            ccc_value = 0.0
    else:
        rho = cov / math.sqrt(var_p * var_g)
        ccc_value = 2.0 * cov / (var_p + var_g + (mean_p - mean_g) ** 2)

    return EvaluationReport(
        ccc=ccc_value,
        mae=mae_value,
        pearson_rho=rho,
        mean_pred=mean_p,
        mean_gold=mean_g,
        var_pred=var_p,
        var_gold=var_g,
        n=n,
        degenerate=degenerate,
    )


def score(pred, gold, objective: str) -> float:
    """Scalar score for an objective selector; higher is always better.

    ``mae`` is negated so that every objective is maximized uniformly.
    """
    if objective == "ccc":
        return ccc(pred, gold)
    if objective == "pearson":
        return pearson(pred, gold)
    if objective == "mae":
        return -mae(pred, gold)
    raise ValidationError(f"unknown objective {objective!r}; use ccc, pearson, or mae")
