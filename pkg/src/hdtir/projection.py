"""Projection directions for debiasing.

For a weighted Gram matrix A, a target vector t (a basis vector or a query
point) and design rows R, the direction solves

    minimise    u'Au
    subject to  ||Au - t||_inf <= gamma1,   max_i |R_i u| <= gamma2.

The program is solved by ADMM on the splitting v = Au, w = Ru, with both
auxiliary blocks projected onto their boxes. Many targets share A and R, so
they are solved together as columns of one matrix with a single Cholesky
factorisation. Converged columns are finished by an equality-constrained
solve on the detected active set.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, lu_factor, lu_solve

from .errors import ConfigError, DataError, ProjectionError
from .likelihood import link_weights
from .tail_data import TailSample

log = logging.getLogger(__name__)


def projection_tuning(n0: int, p: int, c_prime: float, c_dprime: float) -> tuple[float, float]:
    """(c' sqrt(log p / n0), c'' sqrt(log n0))."""
    if n0 < 2 or p < 2:
        raise ConfigError("projection tuning needs n0 >= 2 and p >= 2")
    if c_prime <= 0 or c_dprime <= 0:
        raise ConfigError("projection rule constants must be positive")
    return c_prime * math.sqrt(math.log(p) / n0), c_dprime * math.sqrt(math.log(n0))


@dataclass(frozen=True)
class ProjectionConfig:
    """Constraint levels (explicit or by rule) and ADMM settings."""

    gamma1: Optional[float] = None
    gamma2: Optional[float] = None
    c_prime: float = 1.0
    c_dprime: float = 100.0
    solver_tol: float = 1e-6
    max_iter: int = 20_000
    feasibility_escalation: float = 1.5
    max_escalations: int = 10

    def __post_init__(self):
        if self.gamma1 is not None and not self.gamma1 > 0:
            raise ConfigError("gamma1 must be positive")
        if self.gamma2 is not None and not self.gamma2 >= 0:
            raise ConfigError("gamma2 must be nonnegative")
        if not self.solver_tol > 0:
            raise ConfigError("solver_tol must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if not self.feasibility_escalation > 1:
            raise ConfigError("feasibility_escalation must exceed 1")
        if self.max_escalations < 0:
            raise ConfigError("max_escalations must be nonnegative")

    def resolved(self, n0: int, p: int) -> "ProjectionConfig":
        """Copy with both gammas filled in from the rules where unset."""
        if self.gamma1 is not None and self.gamma2 is not None:
            return self
        g1, g2 = projection_tuning(n0, p, self.c_prime, self.c_dprime)
        return replace(self,
                       gamma1=self.gamma1 if self.gamma1 is not None else g1,
                       gamma2=self.gamma2 if self.gamma2 is not None else g2)


class WeightedGram:
    """A = sum_i c_i x_i x_i' given rows x_i and per-row coefficients c_i.

    Products are matrix-free; ``dense()`` materialises (and caches) A.
    """

    def __init__(self, rows: np.ndarray, coef: np.ndarray):
        self.rows = np.asarray(rows, dtype=float)
        self.coef = np.asarray(coef, dtype=float).ravel()
        if self.rows.shape[0] != self.coef.shape[0]:
            raise DataError("one coefficient per row is required")
        self._dense = None

    @property
    def p(self) -> int:
        return self.rows.shape[1]

    def matvec(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return self.rows.T @ (self.coef[:, None] * (self.rows @ v)) if v.ndim == 2 \
            else self.rows.T @ (self.coef * (self.rows @ v))

    __matmul__ = matvec

    def dense(self) -> np.ndarray:
        if self._dense is None:
            X = self.rows
            A = (X * self.coef[:, None]).T @ X
            self._dense = 0.5 * (A + A.T)
        return self._dense

    def quad(self, u) -> float:
        r = self.rows @ np.asarray(u, dtype=float)
        return float(np.sum(self.coef * r * r))


def weighted_gram(tail: TailSample, theta) -> WeightedGram:
    """Gram matrix (1/n) sum m_i exp(x_i'theta) x_i x_i' on the rows of ``tail``."""
    _, w = link_weights(tail, theta)
    return WeightedGram(tail.rows, w / tail.n0)


@dataclass
class ProjectionDirection:
    u: np.ndarray
    objective: float
    gram_gap: float
    row_gap: float
    gamma1_used: float
    gamma2: float
    iterations: int = 0
    converged: bool = True
    message: str = ""

    @property
    def failed(self) -> bool:
        return not self.converged


def _gaps(A: np.ndarray, R: np.ndarray, u: np.ndarray, t: np.ndarray):
    Au = A @ u
    return float(u @ Au), float(np.max(np.abs(Au - t))), \
        float(np.max(np.abs(R @ u))) if R.shape[0] else 0.0


class _Scaled:
    """Ruiz-equilibrated copy of the QP data shared by every target column."""

    def __init__(self, A: np.ndarray, R: np.ndarray, iters: int = 15):
        p = A.shape[0]
        P = 2.0 * A
        C = np.vstack([A, R])
        D = np.ones(p)
        E = np.ones(C.shape[0])
        Ps, Cs = P.copy(), C.copy()
        for _ in range(iters):
            colP = np.max(np.abs(Ps), axis=0)
            colC = np.max(np.abs(Cs), axis=0) if Cs.shape[0] else np.zeros(p)
            dcol = np.maximum(colP, colC)
            drow = np.max(np.abs(Cs), axis=1)
            dD = 1.0 / np.sqrt(np.clip(dcol, 1e-4, 1e4))
            dE = 1.0 / np.sqrt(np.clip(drow, 1e-4, 1e4))
            dD[dcol == 0] = 1.0
            dE[drow == 0] = 1.0
            Ps = dD[:, None] * Ps * dD[None, :]
            Cs = dE[:, None] * Cs * dD[None, :]
            D *= dD
            E *= dE
        colP = np.max(np.abs(Ps), axis=0)
        mean_col = float(np.mean(colP)) if colP.size else 1.0
        cost = 1.0 / min(max(mean_col, 1e-4), 1e4) if mean_col > 0 else 1.0
        self.P = cost * Ps
        self.C = Cs
        self.D = D
        self.E = E
        self.cost = cost
        self.p = p
        self.m = C.shape[0]
        self.P_raw = P
        self.C_raw = C


def _box(target: np.ndarray, gamma1, gamma2: float, n_rows: int):
    """Lower/upper bounds (m x T) for targets (p x T) and per-column gamma1."""
    T = target.shape[1]
    g1 = np.broadcast_to(np.asarray(gamma1, dtype=float), (T,))
    lo = np.vstack([target - g1[None, :], np.full((n_rows, T), -gamma2)])
    hi = np.vstack([target + g1[None, :], np.full((n_rows, T), gamma2)])
    return lo, hi


class _Admm:
    SIGMA = 1e-6
    ALPHA = 1.6

    def __init__(self, sc: _Scaled, rho: float = 0.1):
        self.sc = sc
        self.rho = rho
        self._factor()

    def _factor(self):
        sc = self.sc
        K = sc.P + self.SIGMA * np.eye(sc.p) + self.rho * (sc.C.T @ sc.C)
        self.chol = cho_factor(K)

    def solve(self, lo, hi, u0, tol, max_iter):
        """Run ADMM on every column; returns (U, converged, iters, infeasible)."""
        sc = self.sc
        p, T = sc.p, lo.shape[1]
        E, D, c = sc.E, sc.D, sc.cost
        los, his = E[:, None] * lo, E[:, None] * hi
        U = u0 / D[:, None]
        Z = np.clip(sc.C @ U, los, his)
        Y = np.zeros_like(Z)
        out = np.zeros((p, T))
        done = np.zeros(T, dtype=bool)
        infeasible = np.zeros(T, dtype=bool)
        iters = np.zeros(T, dtype=int)
        act = np.arange(T)
        next_polish = 25
        check_every = 10
        rho_checks = 0
        for k in range(1, max_iter + 1):
            Ua, Za, Ya = U[:, act], Z[:, act], Y[:, act]
            rhs = self.SIGMA * Ua + sc.C.T @ (self.rho * Za - Ya)
            Ut = cho_solve(self.chol, rhs)
            Zt = sc.C @ Ut
            Un = self.ALPHA * Ut + (1 - self.ALPHA) * Ua
            Zr = self.ALPHA * Zt + (1 - self.ALPHA) * Za
            Zn = np.clip(Zr + Ya / self.rho, los[:, act], his[:, act])
            dY = self.rho * (Zr - Zn)
            Yn = Ya + dY
            U[:, act], Z[:, act], Y[:, act] = Un, Zn, Yn
            if k % check_every and k != max_iter:
                continue
            Cu = sc.C @ Un
            Pu = sc.P @ Un
            Cty = sc.C.T @ Yn
            prim = np.max(np.abs((Cu - Zn) / E[:, None]), axis=0)
            dual = np.max(np.abs((Pu + Cty) / D[:, None]), axis=0) / c
            ok = (prim <= tol) & (dual <= tol)
            # primal infeasibility certificate on the dual increment
            dYu = E[:, None] * dY / c
            nrm = np.max(np.abs(dYu), axis=0)
            cert_lin = np.max(np.abs(sc.C_raw.T @ dYu), axis=0)
            cert_sup = np.sum(hi[:, act] * np.maximum(dYu, 0) + lo[:, act] * np.minimum(dYu, 0), axis=0)
            pinf = (nrm > 0) & (cert_lin <= 1e-6 * nrm) & (cert_sup <= -1e-6 * nrm) & ~ok
            for pos in np.flatnonzero(ok):
                j = act[pos]
                out[:, j] = D * Un[:, pos]
                done[j] = True
                iters[j] = k
            if k >= next_polish or k == max_iter:
                next_polish *= 2
                for pos in np.flatnonzero(~ok & ~pinf):
                    j = act[pos]
                    pol = self._polish(Un[:, pos], Zn[:, pos], Yn[:, pos],
                                       los[:, j], his[:, j], lo[:, j], hi[:, j], tol)
                    if pol is not None:
                        out[:, j] = pol
                        done[j] = True
                        iters[j] = k
                        ok[pos] = True
            for pos in np.flatnonzero(pinf):
                j = act[pos]
                infeasible[j] = True
                iters[j] = k
            keep = ~(ok | pinf)
            act = act[keep]
            if act.size == 0:
                break
            # adapt rho from the remaining columns' residual balance
            if k % 100 == 0 and rho_checks < 20:
                pr = np.max(np.abs(Cu - Zn)[:, keep], axis=0) / np.maximum(
                    np.maximum(np.max(np.abs(Cu[:, keep]), axis=0), np.max(np.abs(Zn[:, keep]), axis=0)), 1e-12)
                du = np.max(np.abs(Pu + Cty)[:, keep], axis=0) / np.maximum(
                    np.maximum(np.max(np.abs(Pu[:, keep]), axis=0), np.max(np.abs(Cty[:, keep]), axis=0)), 1e-12)
                ratio = math.sqrt(float(np.median(pr)) / max(float(np.median(du)), 1e-300))
                if ratio > 5 or ratio < 0.2:
                    self.rho = float(np.clip(self.rho * ratio, 1e-6, 1e6))
                    self._factor()
                    rho_checks += 1
        for j in act:
            out[:, j] = D * U[:, j]
            iters[j] = max_iter
        return out, done, iters, infeasible

    def _polish(self, u, z, y, los, his, lo, hi, tol):
        """Equality-constrained solve on the active set guessed from (z, y)."""
        sc = self.sc
        low = (z - los) < -y
        up = ((his - z) < y) & ~low
        act = np.flatnonzero(low | up)
        b = np.where(low, los, his)[act]
        Ca = sc.C[act]
        p = sc.p
        na = act.size
        delta = 1e-9
        K = np.zeros((p + na, p + na))
        K[:p, :p] = sc.P
        K[:p, p:] = Ca.T
        K[p:, :p] = Ca
        Kreg = K.copy()
        Kreg[:p, :p] += delta * np.eye(p)
        Kreg[p:, p:] -= delta * np.eye(na)
        rhs = np.concatenate([np.zeros(p), b])
        try:
            fac = lu_factor(Kreg)
        except (LinAlgError, ValueError):
            return None
        sol = lu_solve(fac, rhs)
        for _ in range(5):
            sol = sol + lu_solve(fac, rhs - K @ sol)
        if not np.all(np.isfinite(sol)):
            return None
        ub = sol[:p]
        yfull = np.zeros(sc.m)
        yfull[act] = sol[p:]
        # back to the original variables
        u_raw = sc.D * ub
        y_raw = sc.E * yfull / sc.cost
        Cu = sc.C_raw @ u_raw
        viol = max(float(np.max(lo - Cu)), float(np.max(Cu - hi)), 0.0)
        dual = float(np.max(np.abs(sc.P_raw @ u_raw + sc.C_raw.T @ y_raw)))
        sign_bad = max(float(np.max(y_raw[low], initial=0.0)),
                       float(np.max(-y_raw[up], initial=0.0)))
        if viol <= tol and dual <= tol and sign_bad <= tol:
            return u_raw
        return None


def _initial_point(A: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Scaled target: c * t with c minimising ||c A t - t||_2."""
    At = A @ target
    denom = np.sum(At * At, axis=0)
    scale = np.where(denom > 0, np.sum(target * At, axis=0) / np.where(denom > 0, denom, 1.0), 0.0)
    return target * scale[None, :]


def solve_projections(gram, targets: np.ndarray, rows: np.ndarray,
                      config: ProjectionConfig) -> list[ProjectionDirection]:
    """Solve the projection program for each column of ``targets``.

    ``config.gamma1`` and ``config.gamma2`` must already be numbers (see
    ``ProjectionConfig.resolved``). Columns whose box is certified infeasible
    are retried with gamma1 multiplied by ``feasibility_escalation``.
    """
    if config.gamma1 is None or config.gamma2 is None:
        raise ConfigError("gamma1 and gamma2 must be resolved before solving")
    A = gram.dense() if isinstance(gram, WeightedGram) else np.asarray(gram, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    p, T = targets.shape
    if A.shape != (p, p):
        raise DataError("target length does not match the Gram matrix")
    R = np.asarray(rows, dtype=float)
    if R.ndim != 2 or R.shape[1] != p:
        raise DataError("rows must be an n x p matrix")
    tol = config.solver_tol
    g2 = float(config.gamma2)
    g1 = np.full(T, float(config.gamma1))
    results: list[Optional[ProjectionDirection]] = [None] * T

    # u = 0 is optimal whenever it is feasible
    for j in range(T):
        if np.max(np.abs(targets[:, j])) <= g1[j]:
            results[j] = ProjectionDirection(np.zeros(p), 0.0, float(np.max(np.abs(targets[:, j]))),
                                             0.0, g1[j], g2, 0, True, "zero is feasible")

    pending = [j for j in range(T) if results[j] is None]
    if not pending:
        return results
    sc = _Scaled(A, R)
    admm = _Admm(sc)
    u_init = _initial_point(A, targets)
    escalations = 0
    while pending:
        cols = np.array(pending)
        lo, hi = _box(targets[:, cols], g1[cols], g2, R.shape[0])
        U, done, iters, infeasible = admm.solve(lo, hi, u_init[:, cols], tol, config.max_iter)
        retry = []
        for pos, j in enumerate(cols):
            u = U[:, pos]
            obj, ggap, rgap = _gaps(A, R, u, targets[:, j])
            if done[pos]:
                # never return something worse than a feasible starting point
                u0 = u_init[:, j]
                obj0, ggap0, rgap0 = _gaps(A, R, u0, targets[:, j])
                if ggap0 <= g1[j] and rgap0 <= g2 and obj0 < obj:
                    u, obj, ggap, rgap = u0, obj0, ggap0, rgap0
                results[j] = ProjectionDirection(u, obj, ggap, rgap, float(g1[j]), g2,
                                                 int(iters[pos]), True, "")
            elif infeasible[pos] and escalations < config.max_escalations:
                retry.append(j)
            else:
                msg = "infeasible after escalation cap" if infeasible[pos] else \
                    "max_iter reached before tolerance"
                results[j] = ProjectionDirection(u, obj, ggap, rgap, float(g1[j]), g2,
                                                 int(iters[pos]), False, msg)
        if retry:
            escalations += 1
            g1[retry] *= config.feasibility_escalation
            log.info("escalating gamma1 for %d target(s) to %s", len(retry), g1[retry[0]])
        pending = retry
    return results


def solve_projection(gram, target, rows, config: ProjectionConfig) -> ProjectionDirection:
    """Single-target convenience wrapper; raises if no direction was found."""
    res = solve_projections(gram, np.asarray(target, dtype=float)[:, None], rows, config)[0]
    if res.failed:
        raise ProjectionError(res.message)
    return res
