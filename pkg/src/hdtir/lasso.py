"""L1-penalised tail-index regression by accelerated proximal gradient."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError, DivergenceError
from .likelihood import CAP, linear_predictor
from .tail_data import TailSample


def default_lambda(n0: int, p: int, c: float) -> float:
    """Penalty level c * sqrt(log(p) / n0)."""
    if n0 < 1:
        raise ConfigError("n0 must be at least 1")
    if p < 2:
        raise ConfigError("the lambda rule needs p >= 2 (log p must be positive)")
    if c < 0:
        raise ConfigError("rule constant must be nonnegative")
    return c * math.sqrt(math.log(p) / n0)


def soft_threshold(z, t):
    """Proximal map of t * |.|: sign(z) * max(|z| - t, 0)."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be nonnegative")
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


@dataclass(frozen=True)
class LassoConfig:
    """Solver settings. ``lam`` overrides the ``c * sqrt(log p / n0)`` rule."""

    lam: Optional[float] = None
    c: float = 1.0
    max_iter: int = 10_000
    tol: float = 1e-8
    backtracking_shrink: float = 0.5
    init: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if not 0 < self.backtracking_shrink < 1:
            raise ConfigError("backtracking_shrink must lie in (0, 1)")
        if self.lam is not None and self.lam < 0:
            raise ConfigError("lambda must be nonnegative")
        if self.c < 0:
            raise ConfigError("rule constant c must be nonnegative")

    def resolve_lambda(self, n0: int, p: int) -> float:
        if self.lam is not None:
            return float(self.lam)
        if self.c == 0:
            return 0.0
        return default_lambda(n0, p, self.c)


@dataclass
class LassoFit:
    theta_hat: np.ndarray
    lam: float
    objective: float
    iterations: int
    converged: bool
    kkt_residual: float
    history: list = field(default_factory=list, repr=False)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.theta_hat))

    def to_json(self) -> dict:
        return {
            "theta": [float(v) for v in self.theta_hat],
            "lambda": float(self.lam),
            "objective": float(self.objective),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "kkt_residual": float(self.kkt_residual),
            "support": list(self.support),
        }


def _kkt_from_grad(theta: np.ndarray, g: np.ndarray, lam: float) -> float:
    if theta.size == 0:
        return 0.0
    nz = theta != 0
    r = np.where(nz, np.abs(g + lam * np.sign(theta)), np.maximum(np.abs(g) - lam, 0.0))
    return float(np.max(r))


def kkt_residual(tail: TailSample, theta, lam: float) -> float:
    """Sup-norm violation of the subgradient optimality condition."""
    theta = np.asarray(theta, dtype=float).ravel()
    eta = linear_predictor(tail.rows, theta)
    g = tail.rows.T @ (tail.log_exceedances * np.exp(eta) - 1.0) / tail.n0
    return _kkt_from_grad(theta, g, lam)


class _Smooth:
    """Loss and gradient on fixed (X, m); returns inf outside the CAP region."""

    def __init__(self, tail: TailSample):
        self.X = tail.rows
        self.m = tail.log_exceedances
        self.n = tail.n0

    def __call__(self, theta):
        eta = self.X @ theta
        if not np.all(np.abs(eta) <= CAP):
            return math.inf, None, None
        w = self.m * np.exp(eta)
        f = float(np.mean(w + self.m - eta))
        g = self.X.T @ (w - 1.0) / self.n
        return f, g, w

    def lipschitz_guess(self, w, iters: int = 20) -> float:
        X, n = self.X, self.n
        v = np.ones(X.shape[1]) / math.sqrt(X.shape[1])
        est = 0.0
        for _ in range(iters):
            hv = X.T @ (w * (X @ v)) / n
            est = float(np.linalg.norm(hv))
            if est == 0.0:
                break
            v = hv / est
        return est


def fit_lasso(tail: TailSample, config: LassoConfig = LassoConfig(),
              lam: Optional[float] = None) -> LassoFit:
    """Minimise loss(theta) + lam * ||theta||_1 over theta.

    FISTA with backtracking; momentum restarts whenever a step would raise the
    penalised objective, so accepted iterates are monotone. Returns
    ``converged=False`` with the best iterate if ``max_iter`` runs out.
    """
    p = tail.p
    if lam is None:
        lam = config.resolve_lambda(tail.n0, p)
    smooth = _Smooth(tail)
    theta = np.zeros(p) if config.init is None else np.array(config.init, dtype=float).ravel()
    if theta.shape[0] != p:
        raise DataError("initial theta has the wrong length")
    f, g, w = smooth(theta)
    if g is None:
        raise DivergenceError("initial point violates the link CAP")
    F = f + lam * np.abs(theta).sum()
    history = [F]
    kkt = _kkt_from_grad(theta, g, lam)
    L = max(smooth.lipschitz_guess(w), 1e-12)
    shrink = config.backtracking_shrink
    y, fy, gy = theta, f, g
    t = 1.0
    it = 0
    stalled = False
    while kkt > config.tol and it < config.max_iter and not stalled:
        it += 1
        while True:
            z = soft_threshold(y - gy / L, lam / L)
            fz, gz, wz = smooth(z)
            d = z - y
            if gz is not None and fz - fy - gy @ d <= 0.5 * L * (d @ d) + 1e-15 * max(1.0, abs(fy)):
                break
            L /= shrink
            if L > 1e40:
                stalled = True
                break
        if stalled:
            break
        Fz = fz + lam * np.abs(z).sum()
        if Fz > F + 1e-14 * max(1.0, abs(F)):
            if t == 1.0:
                stalled = True  # plain prox step could not decrease: numerical floor
                break
            y, fy, gy, t = theta, f, g, 1.0
            continue
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        prev = theta
        theta, f, g, w, F = z, fz, gz, wz, Fz
        history.append(F)
        kkt = _kkt_from_grad(theta, g, lam)
        if kkt <= config.tol:
            break
        beta = (t - 1.0) / t_next
        t = t_next
        y = theta + beta * (theta - prev)
        fy, gy, _ = smooth(y)
        if gy is None:
            y, fy, gy, t = theta, f, g, 1.0
        L *= 0.95
    return LassoFit(theta, float(lam), float(F), it, kkt <= config.tol, kkt, history)
