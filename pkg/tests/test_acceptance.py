"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records one ``CRITERION n: PASS|FAIL`` line, printed again in the
pytest terminal summary. Run with ``pytest tests/test_acceptance.py -v``.
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from hdtir.cli import main as cli_main
from hdtir.debias import confidence_interval
from hdtir.lasso import LassoConfig, fit_lasso
from hdtir.likelihood import hessian, neg_log_likelihood, score
from hdtir.projection import ProjectionConfig, solve_projection
from hdtir.quantile import conditional_quantile, quantile_inference, quantile_at, quantile_slope_at
from hdtir.simulate import (DgpConfig, gen_covariates, gen_theta, pareto_inverse_cdf,
                            run_monte_carlo, simulate_dataset)
from hdtir.tail_data import Dataset, extract_tail, loglog_points, loglog_slope, tail_at_level
from hdtir.text_pipeline import (build_design, build_word_bank, read_corpus, read_stopwords,
                                 select_vocabulary)

import conftest
from conftest import dense_reference_qp, make_tail, random_tail
from test_text_pipeline import GOLDEN, GOLDEN_BANK, GOLDEN_RANKED, GOLDEN_TOP5_CELLS, GOLDEN_VOCAB

WORKERS = os.cpu_count() or 1


def record(n: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, line


# ---------------------------------------------------------------------------

def _fd(f, theta, h=1e-5):
    out = []
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = h
        out.append((f(theta + e) - f(theta - e)) / (2 * h))
    return np.array(out)


def test_criterion_01_analytic_derivatives():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_g = worst_h = 0.0
    for i in range(50):
        n0, p = int(rng.integers(5, 201)), int(rng.integers(1, 21))
        tail = random_tail(n0, p, 1000 + i)
        theta = rng.normal(0, 0.5, p)
        g = score(tail, theta)
        fd = _fd(lambda t: neg_log_likelihood(tail, t), theta)
        worst_g = max(worst_g, np.max(np.abs(g - fd)) / max(np.max(np.abs(g)), 1e-12))
        H = hessian(tail, theta)
        fdh = np.column_stack([_fd(lambda t, j=j: score(tail, t)[j], theta) for j in range(p)])
        worst_h = max(worst_h, np.max(np.abs(H - fdh)) / np.max(np.abs(H)))
    dt = time.perf_counter() - t0
    record(1, worst_g < 1e-6 and worst_h < 1e-5 and dt < 10,
           f"score rel err {worst_g:.2e} (<1e-6), hessian rel err {worst_h:.2e} (<1e-5), {dt:.1f}s (<10s)")


def test_criterion_02_hill_oracle():
    t0 = time.perf_counter()
    m = np.random.default_rng(2).exponential(0.7, 500)
    tail = make_tail(np.ones((500, 1)), m)
    fit = fit_lasso(tail, LassoConfig(c=0.0, tol=1e-12))
    hill = -math.log(m.mean())
    err = abs(fit.theta_hat[0] - hill)
    dt = time.perf_counter() - t0
    record(2, err <= 1e-8 and fit.kkt_residual < 1e-10 and dt < 1,
           f"|theta - Hill| {err:.1e} (<=1e-8), KKT {fit.kkt_residual:.1e} (<1e-10), {dt:.2f}s (<1s)")


def _independent_kkt(tail, theta, lam):
    x, m = np.asarray(tail.rows), np.asarray(tail.log_exceedances)
    g = np.mean(((np.exp(x @ theta) * m) - 1.0)[:, None] * x, axis=0)
    viol = [abs(g[j] + lam * math.copysign(1.0, theta[j])) if theta[j] != 0 else max(abs(g[j]) - lam, 0.0)
            for j in range(theta.size)]
    return max(viol)


def test_criterion_03_lasso_certificate():
    t0 = time.perf_counter()
    worst, monotone, fits, unconverged = 0.0, True, 0, 0
    for td in ("sparse", "exponential"):
        for xd in ("gaussian", "uniform", "bernoulli"):
            for p in (100, 500):
                data, _, _ = simulate_dataset(DgpConfig(td, xd, 10_000, p, seed=3), 0)
                tail = tail_at_level(data, 0.95)
                assert tail.n0 == 500
                for c in (1.0, 0.1):
                    fit = fit_lasso(tail, LassoConfig(c=c))
                    fits += 1
                    if not fit.converged:
                        unconverged += 1
                        continue
                    worst = max(worst, _independent_kkt(tail, fit.theta_hat, fit.lam))
                    h = np.array(fit.history)
                    monotone &= bool(np.all(np.diff(h) <= 1e-12 * np.maximum(1.0, np.abs(h[:-1]))))
    dt = time.perf_counter() - t0
    record(3, worst <= 1e-8 and monotone and dt < 120,
           f"{fits} fits ({unconverged} unconverged), max recomputed KKT {worst:.1e} (<=1e-8), "
           f"monotone objective {monotone}, {dt:.1f}s (<120s)")


def test_criterion_04_projection_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst_obj, worst_gap, missing = 0.0, -np.inf, 0
    for _ in range(30):
        p, n = int(rng.integers(2, 9)), int(rng.integers(5, 51))
        X = rng.standard_normal((n, p))
        w = rng.exponential(size=n)
        A = (X * w[:, None]).T @ X / n
        t = np.eye(p)[:, int(rng.integers(p))]
        g1, g2 = 0.1, float(rng.choice([0.5, 1.0, 100.0]))
        r = solve_projection(A, t, X, ProjectionConfig(gamma1=g1, gamma2=g2))
        worst_gap = max(worst_gap, r.gram_gap - r.gamma1_used, r.row_gap - g2)
        ref = dense_reference_qp(A, X, t, r.gamma1_used, g2)
        if ref is None:
            missing += 1
        else:
            worst_obj = max(worst_obj, abs(r.objective - ref))
    dt = time.perf_counter() - t0
    record(4, worst_obj <= 1e-4 and worst_gap <= 1e-6 and missing == 0 and dt < 30,
           f"max |objective - reference| {worst_obj:.1e} (<=1e-4), max gap excess {worst_gap:.1e} "
           f"(<=1e-6), reference failures {missing}, {dt:.1f}s (<30s)")


def test_criterion_05_exceedance_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    x = np.array([0.3, -0.2, 0.5])
    theta0 = np.array([1.0, 0.5, -0.4])
    alpha = math.exp(x @ theta0)
    omega = 1.5
    need = 200_000
    n = int(need / omega ** -alpha * 1.05) + 1000
    y = pareto_inverse_cdf(rng.random(n), np.full(n, alpha))
    tail = extract_tail(Dataset(y, np.tile(x, (n, 1))), omega)
    assert tail.n0 >= need
    m = tail.log_exceedances[:need]
    checks = []
    # (i) E log(Y/omega) = exp(-x'theta0)
    checks.append(("E m", m.mean(), 1 / alpha, m.std(ddof=1) / math.sqrt(need)))
    # (ii) E (e^{x'theta0} m - 1) x = 0, coordinatewise
    s = alpha * m - 1.0
    for j in range(3):
        v = s * x[j]
        checks.append((f"E score_{j + 1}", v.mean(), 0.0, v.std(ddof=1) / math.sqrt(need)))
    # (iii) E (e^{x'theta0} m - 1)^2 = 2 - 2 + 1 = 1
    checks.append(("E w^2", (s ** 2).mean(), 1.0, (s ** 2).std(ddof=1) / math.sqrt(need)))
    ok = all(abs(est - target) <= 3 * se for _, est, target, se in checks)
    dt = time.perf_counter() - t0
    detail = ", ".join(f"{name} {est:.4f} vs {target:g} ({abs(est - target) / se:.2f} SE)"
                       for name, est, target, se in checks)
    record(5, ok and dt < 30, f"{detail}; {dt:.1f}s (<30s)")


def test_criterion_06_simulation_rows():
    t0 = time.perf_counter()
    a = run_monte_carlo(DgpConfig("exponential", "gaussian", 10_000, 100, seed=7), 500,
                        "crossfit", 5, workers=WORKERS)
    b = run_monte_carlo(DgpConfig("sparse", "bernoulli", 10_000, 100, seed=7), 500,
                        "crossfit", 5, workers=WORKERS)
    lo, hi = confidence_interval(-0.14, 0.06 ** 2, 1, 0.95)
    checks = {
        "gauss/exp bias": abs(a.bias - (-0.01)) <= 0.08,
        "gauss/exp sd": abs(a.sd - 0.48) <= 0.08,
        "gauss/exp coverage": 0.915 <= a.coverage <= 0.975,
        "bern/sparse bias": -0.37 <= b.bias <= -0.09,
        "bern/sparse coverage": 0.93 <= b.coverage <= 0.99,
        "CI layout": abs(lo - (-0.26)) <= 0.01 and abs(hi - (-0.03)) <= 0.01,
    }
    dt = time.perf_counter() - t0
    failed = [k for k, v in checks.items() if not v]
    record(6, not failed,
           f"Gaussian/Exponential bias {a.bias:+.3f} sd {a.sd:.3f} coverage {a.coverage:.3f} "
           f"(failures {a.failures}); Bernoulli/Sparse bias {b.bias:+.3f} sd {b.sd:.3f} "
           f"coverage {b.coverage:.3f} (failures {b.failures}); CI(-0.14, se 0.06) = "
           f"[{lo:.3f}, {hi:.3f}]; {dt / 60:.1f} min; out of band: {failed or 'none'}")


def _quantile_replicates(n0: int, reps: int, seed: int):
    p, tau = 50, 0.9
    x = gen_covariates("gaussian", 1, p, np.random.default_rng(12345))[0]
    theta0 = gen_theta("exponential", p)
    rel, cover = [], []
    for r in range(reps):
        data, _, rng = simulate_dataset(DgpConfig("exponential", "gaussian", n0 * 20, p, seed=seed), r)
        tail = tail_at_level(data, 0.95)
        est = quantile_inference(tail, x, tau, seed=int(rng.integers(2**62)))
        q = conditional_quantile(theta0, x, tail.omega, tau)
        rel.append(abs(est.q_hat / q - 1))
        cover.append(est.ci_low <= q <= est.ci_high)
    return np.array(rel), np.array(cover)


def test_criterion_07_quantile_suite():
    t0 = time.perf_counter()
    worst = 0.0
    for s in np.linspace(-2, 2, 21):
        for tau in (0.05, 0.5, 0.9, 0.99):
            for omega in (0.5, 1.0, 20.0):
                h = 1e-5
                fd = (quantile_at(s + h, omega, tau) - quantile_at(s - h, omega, tau)) / (2 * h)
                d = quantile_slope_at(s, omega, tau)
                worst = max(worst, abs(fd - d) / abs(d))
    medians = [float(np.median(_quantile_replicates(n0, 50, 71)[0])) for n0 in (250, 1000, 4000)]
    decreasing = medians[0] > medians[1] > medians[2]
    _, cover = _quantile_replicates(500, 300, 72)
    coverage = float(cover.mean())
    dt = time.perf_counter() - t0
    record(7, worst < 1e-7 and decreasing and 0.90 <= coverage <= 0.99 and dt < 1200,
           f"derivative rel err {worst:.1e} (<1e-7); median |q/q0 - 1| over n0=250,1000,4000: "
           f"{medians[0]:.3f}, {medians[1]:.3f}, {medians[2]:.3f} (strictly decreasing {decreasing}); "
           f"coverage {coverage:.3f} at 300 reps (in [0.90, 0.99]); {dt / 60:.1f} min (<20)")


def test_criterion_08_pareto_dgp():
    t0 = time.perf_counter()
    n = 1_000_000
    y = pareto_inverse_cdf(np.random.default_rng(8).random(n), 1.0)
    parts = []
    ok = True
    for t in (2, 5, 10):
        p = 1 / t
        est = float(np.mean(y > t))
        z = abs(est - p) / math.sqrt(p * (1 - p) / n)
        ok &= z <= 3
        parts.append(f"P(Y>{t}) {est:.5f} ({z:.2f} SE)")
    slope = loglog_slope(loglog_points(y), 0.1)
    ok &= abs(slope + 1) <= 0.15
    dt = time.perf_counter() - t0
    record(8, ok and dt < 30, f"{', '.join(parts)}; log-log slope {slope:.3f}; {dt:.1f}s (<30s)")


def test_criterion_09_text_golden():
    t0 = time.perf_counter()
    corpus = read_corpus(GOLDEN)
    bank = build_word_bank(corpus)
    spec = select_vocabulary(bank, 500, read_stopwords())
    spec5 = select_vocabulary(bank, 5, read_stopwords())
    design = build_design(corpus, spec5)
    cells = {(int(i), int(j)) for i, j in zip(*design.x.nonzero())}
    col_sums = np.asarray(design.x.sum(axis=0)).ravel().tolist()
    checks = {
        "bank": bank.entries == GOLDEN_BANK and bank.ranked() == GOLDEN_RANKED,
        "vocabulary": list(spec.vocabulary) == GOLDEN_VOCAB,
        "design": cells == GOLDEN_TOP5_CELLS and set(design.x.data) == {1.0},
        "column sums": col_sums == [bank.doc_count(w) for w in spec5.vocabulary],
        "workers": all(build_word_bank(corpus, workers=k).entries == bank.entries for k in (2, 4)),
    }
    dt = time.perf_counter() - t0
    failed = [k for k, v in checks.items() if not v]
    record(9, not failed and dt < 5, f"checks {sorted(checks)} failed: {failed or 'none'}; {dt:.2f}s (<5s)")


def test_criterion_10_cli_determinism(tmp_path):
    data = tmp_path / "data.csv"
    assert cli_main(["generate", "--design", "uniform-sparse", "--n", "2000", "--p", "15",
                     "--seed", "10", "--out", str(data)]) == 0
    ini = tmp_path / "run.ini"
    ini.write_text(
        "[common]\nseed = 10\n\n"
        "[simulate]\ndesign = bernoulli-exponential\nn = 1500\np = 12\nreps = 4\n"
        f"[fit]\ndata = {data}\n"
        f"[infer]\ndata = {data}\ncoord = all\n"
        f"[quantile]\ndata = {data}\nx = {','.join(['0.05'] * 15)}\n"
        f"[text-prep]\ncorpus = {GOLDEN}\ntop_p = 6\n"
        f"[loglog]\ndata = {data}\n"
        "[generate]\ndesign = gaussian-sparse\nn = 300\np = 10\n")
    commands = {
        "simulate": ["replicates.csv", "summary.csv"],
        "generate": ["", ".theta.json"],
        "fit": [""],
        "infer": [""],
        "quantile": [""],
        "text-prep": ["word_bank.csv", "vocabulary.txt", "design_triplets.csv",
                      "design_vocabulary.txt", "design_response.csv"],
        "loglog": ["loglog.csv", "slope.json"],
    }
    mismatched = []
    for command, files in commands.items():
        digests = []
        for run, threads in enumerate(("1", "2", "1")):
            out = tmp_path / f"{command}-{run}"
            if command == "generate":
                out = out.with_suffix(".csv")
            code = cli_main([command, "--config", str(ini), "--threads", threads, "--out", str(out)])
            assert code == 0, (command, code)
            blobs = []
            for f in files:
                path = (out.parent / (out.stem + f)) if command == "generate" and f else (
                    out / f if f else out)
                blobs.append(Path(path).read_bytes())
            digests.append(blobs)
        if not (digests[0] == digests[1] == digests[2]):
            mismatched.append(command)
    record(10, not mismatched,
           f"{len(commands)} commands re-run with threads 1, 2, 1; byte mismatches: {mismatched or 'none'}")
