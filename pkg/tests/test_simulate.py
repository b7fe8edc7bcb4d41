import math

import numpy as np
import pytest

from hdtir.errors import ConfigError
from hdtir.simulate import (DgpConfig, McJob, Replicate, gen_covariates, gen_response, gen_theta,
                            mix_seed, pareto_inverse_cdf, run_monte_carlo, splitmix64, summarize,
                            write_replicates_csv, write_summary_csv)


def test_theta_designs():
    np.testing.assert_allclose(gen_theta("sparse", 12),
                               [1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.0, 0.0])
    np.testing.assert_array_equal(gen_theta("exponential", 4), [1, 0.5, 0.25, 0.125])
    assert gen_theta("sparse", 50)[0] == gen_theta("exponential", 50)[0] == 1.0
    with pytest.raises(ConfigError):
        gen_theta("sparse", 9)


def test_covariate_designs():
    rng = np.random.default_rng(0)
    n = 10_000
    g = gen_covariates("gaussian", n, 5, rng)
    assert np.all(np.abs(g.mean(axis=0)) <= 4 / math.sqrt(n) * 0.1)
    assert np.all(np.abs(g.std(axis=0) / 0.1 - 1) < 0.05)
    b = gen_covariates("bernoulli", n, 5, rng)
    assert set(np.unique(b)) <= {0.0, 0.1}
    share = np.mean(b == 0.1)
    assert abs(share - 0.1) <= 3 * math.sqrt(0.09 / b.size)
    u = gen_covariates("uniform", n, 5, rng)
    assert np.all((u > -0.1) & (u < 0.1))


def test_response_examples():
    assert pareto_inverse_cdf(0.75, 2.0) == pytest.approx(2.0)
    assert pareto_inverse_cdf(0.0, 3.3) == 1.0
    rng = np.random.default_rng(1)
    y = gen_response(gen_covariates("gaussian", 1000, 4, rng), gen_theta("exponential", 4), rng)
    assert np.all(y >= 1.0)


def test_pareto_tail_at_fixed_x():
    rng = np.random.default_rng(2)
    x = np.tile([[0.3, -0.2]], (200_000, 1))
    theta = np.array([1.0, 0.5])
    alpha = math.exp(x[0] @ theta)
    y = gen_response(x, theta, rng)
    for t in (1.5, 3.0):
        p = t ** -alpha
        assert abs(np.mean(y > t) - p) <= 3 * math.sqrt(p * (1 - p) / y.size)


def test_seed_mixing():
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    seeds = {mix_seed(7, r) for r in range(1000)}
    assert len(seeds) == 1000 and all(0 <= s < 2**64 for s in seeds)
    assert mix_seed(7, 3) == mix_seed(7, 3) != mix_seed(8, 3)


def test_dgp_validation():
    with pytest.raises(ConfigError):
        DgpConfig("sparse", "gaussian", n=5)
    with pytest.raises(ConfigError):
        DgpConfig("exponential", "gaussian", p=1)
    with pytest.raises(ValueError):
        DgpConfig("dense", "gaussian")


def test_summary_arithmetic():
    dgp = DgpConfig("exponential", "gaussian", n=100, p=5)
    job = McJob(dgp)
    reps = [Replicate(2, 1.3, 0.2, True, False, 5), Replicate(0, 0.9, 0.2, False, False, 5),
            Replicate(1, math.nan, math.nan, False, True, 5)]
    s = summarize(job, reps)
    assert s.failures == 1 and s.reps == 3
    assert s.bias == pytest.approx(0.1)
    assert s.sd == pytest.approx(np.std([0.9, 1.3], ddof=1))
    assert s.coverage == 0.5
    assert abs(s.rmse ** 2 - (s.bias ** 2 + s.sd ** 2)) < 1e-10
    assert [r.rep for r in s.replicates] == [0, 1, 2]


def test_single_replicate_is_degenerate():
    s = run_monte_carlo(DgpConfig("exponential", "gaussian", n=400, p=5, seed=3), 1)
    assert s.degenerate and s.sd == 0.0 and s.coverage in (0.0, 1.0)


def test_worker_count_invariance(tmp_path):
    dgp = DgpConfig("sparse", "bernoulli", n=1000, p=12, seed=5)
    a = run_monte_carlo(dgp, 6, workers=1)
    b = run_monte_carlo(dgp, 6, workers=3)
    for s, d in ((a, "a"), (b, "b")):
        (tmp_path / d).mkdir()
        write_replicates_csv(s, tmp_path / d / "r.csv")
        write_summary_csv(s, tmp_path / d / "s.csv")
    for f in ("r.csv", "s.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    header = (tmp_path / "a" / "s.csv").read_text().splitlines()[0]
    assert header.startswith("n0,p,theta_design,x_design,bias,sd,rmse,coverage")


def test_split_method_runs():
    s = run_monte_carlo(DgpConfig("exponential", "uniform", n=600, p=6, seed=1), 3, method="split")
    assert s.reps == 3
    with pytest.raises(ConfigError):
        run_monte_carlo(DgpConfig("exponential", "uniform", n=600, p=6), 0)
