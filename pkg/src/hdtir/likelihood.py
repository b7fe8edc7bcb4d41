"""Tail negative log-likelihood, score and Hessian for alpha(x) = exp(x'theta).

Conditional on exceeding omega, m = log(Y/omega) is exponential with rate
alpha(x), which gives the per-observation loss (alpha + 1) m - x'theta.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError, DivergenceError
from .tail_data import TailSample

# |x'theta| above this is treated as a divergent iterate, never clamped
CAP = 30.0


def linear_predictor(rows: np.ndarray, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).ravel()
    if rows.shape[1] != theta.shape[0]:
        raise DataError(f"theta has length {theta.shape[0]}, design has {rows.shape[1]} columns")
    if not np.all(np.isfinite(theta)):
        raise DivergenceError("theta has non-finite entries")
    eta = rows @ theta
    worst = np.max(np.abs(eta)) if eta.size else 0.0
    if not worst <= CAP:
        raise DivergenceError(f"linear predictor reached {worst:.3g} > CAP={CAP}")
    return eta


def link_weights(tail: TailSample, theta) -> tuple[np.ndarray, np.ndarray]:
    """Return (eta, w) with eta = X theta and w_i = m_i exp(eta_i)."""
    eta = linear_predictor(tail.rows, theta)
    return eta, tail.log_exceedances * np.exp(eta)


def neg_log_likelihood(tail: TailSample, theta) -> float:
    eta, w = link_weights(tail, theta)
    return float(np.mean(w + tail.log_exceedances - eta))


def score(tail: TailSample, theta) -> np.ndarray:
    _, w = link_weights(tail, theta)
    return tail.rows.T @ (w - 1.0) / tail.n0


def hessian(tail: TailSample, theta) -> np.ndarray:
    _, w = link_weights(tail, theta)
    X = tail.rows
    H = (X * (w / tail.n0)[:, None]).T @ X
    return 0.5 * (H + H.T)


def hessian_vec(tail: TailSample, theta, v) -> np.ndarray:
    """Hessian-vector product without forming the p x p matrix."""
    v = np.asarray(v, dtype=float).ravel()
    if v.shape[0] != tail.p:
        raise DataError("vector length does not match design width")
    _, w = link_weights(tail, theta)
    X = tail.rows
    return X.T @ (w * (X @ v)) / tail.n0


def value_and_score(tail: TailSample, theta) -> tuple[float, np.ndarray]:
    """Objective and gradient from one pass over the rows."""
    eta, w = link_weights(tail, theta)
    val = float(np.mean(w + tail.log_exceedances - eta))
    return val, tail.rows.T @ (w - 1.0) / tail.n0


def hill_theta(tail: TailSample) -> float:
    """Stationary intercept for a constant design column of ones: -log(mean m)."""
    return float(-np.log(np.mean(tail.log_exceedances)))
