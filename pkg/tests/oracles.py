"""Independent reference implementations used by the tests.

Everything here is deliberately written from a different angle than the
package code: extended-precision accumulation instead of compensated
sums, a convex QP solver instead of SMO, explicit sorting instead of
np.median, index walking instead of vectorized imputation.
"""

from __future__ import annotations

import numpy as np


def longdouble_moments(x) -> tuple[np.longdouble, np.longdouble]:
    """Population mean and variance accumulated in extended precision."""
    x = np.asarray(x, dtype=np.longdouble)
    n = np.longdouble(x.size)
    mean = x.sum() / n
    var = ((x - mean) ** 2).sum() / n
    return mean, var


def ccc_reference(pred, gold) -> float:
    p = np.asarray(pred, dtype=np.longdouble)
    g = np.asarray(gold, dtype=np.longdouble)
    mp, vp = longdouble_moments(p)
    mg, vg = longdouble_moments(g)
    cov = ((p - mp) * (g - mg)).sum() / np.longdouble(p.size)
    denom = vp + vg + (mp - mg) ** 2
    if denom == 0:
        return 1.0
    return float(2.0 * cov / denom)


def mae_reference(pred, gold) -> float:
    p = np.asarray(pred, dtype=np.longdouble)
    g = np.asarray(gold, dtype=np.longdouble)
    return float(np.abs(p - g).sum() / np.longdouble(p.size))


def pearson_reference(pred, gold) -> float:
    p = np.asarray(pred, dtype=np.longdouble)
    g = np.asarray(gold, dtype=np.longdouble)
    mp, vp = longdouble_moments(p)
    mg, vg = longdouble_moments(g)
    if vp == 0 or vg == 0:
        return 0.0
    cov = ((p - mp) * (g - mg)).sum() / np.longdouble(p.size)
    return float(cov / np.sqrt(vp * vg))


def qp_dual_solution(K, y, c, epsilon):
    """Epsilon-SVR dual solved as a dense convex QP.

    Decision variable is the reduced coefficient vector; returns
    (coefs, optimal objective value).
    """
    import cvxpy as cp

    n = y.size
    beta = cp.Variable(n)
    # symmetrize against tiny asymmetry from floating-point products
    Ks = 0.5 * (K + K.T)
    objective = cp.Minimize(
        0.5 * cp.quad_form(beta, cp.psd_wrap(Ks))
        + epsilon * cp.norm1(beta)
        - y @ beta
    )
    problem = cp.Problem(
        objective, [cp.sum(beta) == 0, beta <= c, beta >= -c]
    )
    problem.solve(solver=cp.CLARABEL)
    if problem.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"QP solver returned status {problem.status}")
    return np.asarray(beta.value, dtype=np.float64), float(problem.value)


def median_filter_reference(x, window_frames: int) -> np.ndarray:
    """Sort-based sliding median, window shrunk symmetrically at edges.

    The window around index i keeps radius min(half, i, n-1-i), so it is
    always odd-length and the median is the middle of the sorted window.
    """
    x = np.asarray(x, dtype=np.float64)
    half = window_frames // 2
    out = np.empty_like(x)
    for i in range(x.size):
        r = min(half, i, x.size - 1 - i)
        window = sorted(x[i - r : i + r + 1].tolist())
        out[i] = window[len(window) // 2]
    return out


def impute_reference(pred, valid, fill_start: float = 0.0) -> list[float]:
    """Hold-last imputation by explicit index walking."""
    out = []
    src = list(pred)
    pos = 0
    current = fill_start
    for flag in valid:
        if flag:
            current = src[pos]
            pos += 1
        out.append(float(current))
    return out


def weighted_mean_reference(rows, weights) -> list[float]:
    """Per-frame weighted mean via an explicit double loop."""
    n = len(rows[0])
    out = []
    for t in range(n):
        acc = 0.0
        for seq, w in zip(rows, weights):
            acc += w * seq[t]
        out.append(acc)
    return out
