import numpy as np
import pytest

from hdtir.tail_data import Dataset, TailSample


def random_tail(n0: int, p: int, seed: int, scale: float = 0.3, theta=None) -> TailSample:
    """Exceedances drawn from the conditional model with a random design."""
    rng = np.random.default_rng(seed)
    x = scale * rng.standard_normal((n0, p))
    theta = rng.normal(0, 0.5, p) if theta is None else np.asarray(theta, dtype=float)
    m = rng.exponential(1.0 / np.exp(x @ theta))
    return TailSample(1.0, x, m, np.arange(n0))


def make_tail(x, m, omega: float = 1.0) -> TailSample:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m = np.asarray(m, dtype=float)
    return TailSample(omega, x, m, np.arange(m.size))


def dense_reference_qp(A, R, t, g1, g2):
    """Independent dense QP: min u'Au s.t. |Au - t| <= g1, |Ru| <= g2 (SLSQP, two starts)."""
    from scipy.optimize import minimize

    p = len(t)
    C = np.vstack([A, R])
    lo = np.r_[t - g1, -g2 * np.ones(len(R))]
    hi = np.r_[t + g1, g2 * np.ones(len(R))]
    cons = [dict(type="ineq", fun=lambda u: C @ u - lo, jac=lambda u: C),
            dict(type="ineq", fun=lambda u: hi - C @ u, jac=lambda u: -C)]
    best = None
    for x0 in (np.linalg.lstsq(A, t, rcond=None)[0], np.zeros(p)):
        r = minimize(lambda u: u @ A @ u, x0, jac=lambda u: 2 * A @ u, constraints=cons,
                     method="SLSQP", options=dict(ftol=1e-14, maxiter=2000))
        viol = max(np.max(lo - C @ r.x), np.max(C @ r.x - hi))
        if viol < 1e-8 and (best is None or r.fun < best):
            best = float(r.fun)
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
