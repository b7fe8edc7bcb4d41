"""Conditional extreme quantiles of the response above the threshold."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .debias import _debias_functionals, cross_fit_pairs, make_folds, normal_quantile
from .errors import ConfigError, DataError, DivergenceError, ProjectionError
from .lasso import LassoConfig
from .likelihood import CAP
from .projection import ProjectionConfig
from .tail_data import TailSample


def _check_tau(tau: float) -> None:
    if not 0.0 < tau < 1.0:
        raise ConfigError(f"tau must lie strictly inside (0, 1), got {tau}")


def _index(theta, x) -> float:
    theta = np.asarray(theta, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    if theta.shape != x.shape:
        raise DataError(f"x has length {x.size}, theta has length {theta.size}")
    s = float(x @ theta)
    if not abs(s) <= CAP:
        raise DivergenceError(f"|x'theta| = {abs(s):.3g} exceeds CAP={CAP}")
    return s


def quantile_at(s: float, omega: float, tau: float) -> float:
    """omega * (1 - tau)^(-exp(-s)) for a linear index s = x'theta."""
    _check_tau(tau)
    if not omega > 0:
        raise ConfigError("omega must be positive")
    try:
        val = omega * math.exp(-math.exp(-s) * math.log1p(-tau))
    except OverflowError:
        val = math.inf
    if not math.isfinite(val):
        raise DivergenceError("quantile overflows")
    return val


def quantile_slope_at(s: float, omega: float, tau: float) -> float:
    """d/ds of ``quantile_at``: omega * exp(-a L) * L * a with a = e^-s, L = log(1 - tau)."""
    _check_tau(tau)
    L = math.log1p(-tau)
    try:
        a = math.exp(-s)
        val = omega * math.exp(-a * L) * L * a
    except OverflowError:
        val = -math.inf
    if not math.isfinite(val):
        raise DivergenceError("quantile derivative overflows")
    return val


def conditional_quantile(theta, x, omega: float, tau: float) -> float:
    return quantile_at(_index(theta, x), omega, tau)


def quantile_derivative(theta, x, omega: float, tau: float) -> float:
    return quantile_slope_at(_index(theta, x), omega, tau)


def integrated_tau(tau: float, f_omega: float) -> float:
    """Unconditional level 1 - (1 - tau)(1 - F(omega | x)) matching a conditional tau."""
    _check_tau(tau)
    if not 0.0 <= f_omega < 1.0:
        raise ConfigError("f_omega must lie in [0, 1)")
    return 1.0 - (1.0 - tau) * (1.0 - f_omega)


@dataclass
class QuantileEstimate:
    tau: float
    x: np.ndarray
    q_hat: float
    se: float
    ci_low: float
    ci_high: float
    v3: float
    omega: float
    n0: int
    K: int
    n_eff: float
    truncated: bool = False
    method: str = "crossfit"
    index: float = math.nan  # debiased x'theta

    def to_json(self) -> dict:
        return {
            "tau": float(self.tau),
            "x": [float(v) for v in self.x],
            "q_hat": float(self.q_hat),
            "se": float(self.se),
            "ci": [float(self.ci_low), float(self.ci_high)],
            "n0": int(self.n0),
            "K": int(self.K),
            "method": self.method,
            "v3": float(self.v3),
            "omega": float(self.omega),
            "ci_truncated_at_omega": bool(self.truncated),
        }


def quantile_inference(tail: TailSample, x, tau: float, K: int = 5,
                       lasso_cfg: LassoConfig = LassoConfig(),
                       proj_cfg: ProjectionConfig = ProjectionConfig(),
                       seed: int = 0, level: float = 0.95,
                       correction_fold: str = "estimation") -> QuantileEstimate:
    """Cross-fitted estimate and delta-method interval for the tau-quantile at x.

    The index x'theta is debiased directly with a projection direction that
    targets x, so the point estimate and its variance come from the same
    direction. The slope of the quantile map is taken at the fold-averaged
    lasso fit.
    """
    _check_tau(tau)
    x = np.asarray(x, dtype=float).ravel()
    if x.size != tail.p:
        raise DataError(f"x has length {x.size}, design has {tail.p} columns")
    if not 0.0 < level < 1.0:
        raise ConfigError("level must lie in (0, 1)")
    plan = make_folds(tail.n0, K, seed)
    pairs = cross_fit_pairs(plan, correction_fold)
    fe = _debias_functionals(tail, pairs, x[:, None], lasso_cfg, proj_cfg,
                             n_lambda=tail.n0, n_gamma=tail.n0)
    if fe.failed[0]:
        raise ProjectionError(f"projection toward x failed: {fe.messages[0]}")
    index = float(fe.estimate[0])
    if not abs(index) <= CAP:
        raise DivergenceError(f"debiased index {index:.3g} exceeds CAP={CAP}")
    v3 = max(float(fe.variance[0]), 0.0)
    theta_bar = fe.theta_hats.mean(axis=0)
    q_hat = quantile_at(index, tail.omega, tau)
    slope = quantile_derivative(theta_bar, x, tail.omega, tau)
    se = abs(slope) * math.sqrt(v3 / fe.n_eff)
    half = normal_quantile(1.0 - (1.0 - level) / 2.0) * se
    low = q_hat - half
    truncated = low < tail.omega
    return QuantileEstimate(tau, x, q_hat, se, max(low, tail.omega), q_hat + half, v3,
                            tail.omega, tail.n0, K, fe.n_eff, truncated, "crossfit", index)
