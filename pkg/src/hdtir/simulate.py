"""Simulation designs and the Monte Carlo harness for the debiased estimators."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ConfigError, HdtirError
from .debias import debias_cross_fit, debias_sample_split
from .lasso import LassoConfig
from .likelihood import CAP
from .projection import ProjectionConfig
from .tail_data import Dataset, extract_tail, select_threshold

MASK64 = (1 << 64) - 1


class ThetaDesign(str, Enum):
    SPARSE = "sparse"
    EXPONENTIAL = "exponential"


class XDesign(str, Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"
    BERNOULLI = "bernoulli"


def splitmix64(x: int) -> int:
    """One SplitMix64 output step (Steele, Lea & Flood 2014) on a 64-bit state."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def mix_seed(seed: int, index: int) -> int:
    """Deterministic 64-bit child seed for replicate ``index`` of run ``seed``."""
    return splitmix64(splitmix64(seed & MASK64) ^ (index & MASK64))


def gen_theta(design, p: int) -> np.ndarray:
    design = ThetaDesign(design)
    if p < 1:
        raise ConfigError("p must be positive")
    if design is ThetaDesign.SPARSE:
        if p < 10:
            raise ConfigError("the sparse design needs p >= 10")
        theta = np.zeros(p)
        theta[:10] = np.arange(10, 0, -1) / 10.0
        return theta
    return 0.5 ** np.arange(p)


def gen_covariates(design, n: int, p: int, rng: np.random.Generator) -> np.ndarray:
    design = XDesign(design)
    if design is XDesign.GAUSSIAN:
        return 0.1 * rng.standard_normal((n, p))
    if design is XDesign.UNIFORM:
        return rng.uniform(-0.1, 0.1, size=(n, p))
    return 0.1 * (rng.random((n, p)) < 0.1)


def pareto_inverse_cdf(u, alpha):
    """Inverse of the unit-scale Pareto CDF 1 - t^(-alpha), t >= 1."""
    return (1.0 - np.asarray(u, dtype=float)) ** (-1.0 / np.asarray(alpha, dtype=float))


def gen_response(x: np.ndarray, theta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    eta = x @ theta
    if np.any(np.abs(eta) > CAP):
        raise ConfigError("design and theta put the link outside CAP")
    return pareto_inverse_cdf(rng.random(x.shape[0]), np.exp(eta))


@dataclass(frozen=True)
class DgpConfig:
    theta_design: ThetaDesign
    x_design: XDesign
    n: int = 10_000
    p: int = 100
    cutoff_level: float = 0.95
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "theta_design", ThetaDesign(self.theta_design))
        object.__setattr__(self, "x_design", XDesign(self.x_design))
        if self.n < 10:
            raise ConfigError("n must be at least 10")
        if self.p < 2:
            raise ConfigError("p must be at least 2")
        if not 0.0 <= self.cutoff_level < 1.0:
            raise ConfigError("cutoff_level must lie in [0, 1)")
        gen_theta(self.theta_design, self.p)  # validates p for the sparse ramp


def simulate_dataset(dgp: DgpConfig, rep: int = 0) -> tuple[Dataset, np.ndarray, np.random.Generator]:
    """Draw replicate ``rep`` of ``dgp``. Returns the data, theta_0 and the
    replicate's generator, positioned after the draw, for any later randomness."""
    rng = np.random.default_rng(mix_seed(dgp.seed, rep))
    theta = gen_theta(dgp.theta_design, dgp.p)
    x = gen_covariates(dgp.x_design, dgp.n, dgp.p, rng)
    y = gen_response(x, theta, rng)
    return Dataset(y, x), theta, rng


@dataclass(frozen=True)
class McJob:
    dgp: DgpConfig
    method: str = "crossfit"
    K: int = 5
    lasso_cfg: LassoConfig = field(default_factory=LassoConfig)
    proj_cfg: ProjectionConfig = field(default_factory=ProjectionConfig)
    level: float = 0.95
    coord: int = 1  # 1-based, as in the summary tables
    correction_fold: str = "estimation"


@dataclass(frozen=True)
class Replicate:
    rep: int
    theta_tilde: float
    se: float
    covered: bool
    failed: bool
    n0: int
    message: str = ""


def run_replicate(job: McJob, rep: int) -> Replicate:
    """One replicate: generate, threshold, debias coordinate ``job.coord``."""
    data, theta0, rng = simulate_dataset(job.dgp, rep)
    j = job.coord - 1
    try:
        omega = select_threshold(data.y, job.dgp.cutoff_level)
        tail = extract_tail(data, omega)
        fold_seed = int(rng.integers(0, 2**63 - 1))
        if job.method == "split":
            res = debias_sample_split(tail, [j], job.lasso_cfg, job.proj_cfg,
                                      seed=fold_seed, level=job.level,
                                      correction_fold=job.correction_fold)[0]
        else:
            res = debias_cross_fit(tail, job.K, [j], job.lasso_cfg, job.proj_cfg,
                                   seed=fold_seed, level=job.level,
                                   correction_fold=job.correction_fold)[0]
    except HdtirError as exc:
        return Replicate(rep, math.nan, math.nan, False, True, 0, str(exc))
    if res.failed:
        return Replicate(rep, math.nan, math.nan, False, True, tail.n0, res.message)
    return Replicate(rep, res.theta_tilde, res.se, res.covers(float(theta0[j])), False,
                     tail.n0, "")


def _run_chunk(job: McJob, reps: list) -> list:
    # single-threaded BLAS keeps every replicate bit-identical across worker counts
    with threadpool_limits(limits=1):
        return [run_replicate(job, r) for r in reps]


@dataclass
class McSummary:
    reps: int
    coord: int
    bias: float
    sd: float
    rmse: float
    coverage: float
    failures: int
    degenerate: bool
    n0: float
    p: int
    theta_design: str
    x_design: str
    replicates: list = field(default_factory=list, repr=False)


def summarize(job: McJob, replicates: list) -> McSummary:
    reps = sorted(replicates, key=lambda r: r.rep)
    ok = [r for r in reps if not r.failed]
    if not ok:
        raise HdtirError("every replicate failed")
    theta0 = gen_theta(job.dgp.theta_design, job.dgp.p)[job.coord - 1]
    est = np.array([r.theta_tilde for r in ok])
    bias = float(est.mean() - theta0)
    degenerate = est.size < 2
    sd = 0.0 if degenerate else float(est.std(ddof=1))
    return McSummary(
        reps=len(reps), coord=job.coord, bias=bias, sd=sd,
        rmse=math.sqrt(bias * bias + sd * sd),
        coverage=float(np.mean([r.covered for r in ok])),
        failures=len(reps) - len(ok), degenerate=degenerate,
        n0=float(np.mean([r.n0 for r in ok])), p=job.dgp.p,
        theta_design=job.dgp.theta_design.value, x_design=job.dgp.x_design.value,
        replicates=reps)


def run_monte_carlo(dgp: DgpConfig, reps: int, method: str = "crossfit", K: int = 5,
                    lasso_cfg: LassoConfig = LassoConfig(),
                    proj_cfg: ProjectionConfig = ProjectionConfig(),
                    level: float = 0.95, coord: int = 1, workers: int = 1,
                    correction_fold: str = "estimation") -> McSummary:
    """Replicate the debiased estimator of coordinate ``coord`` (1-based).

    Replicate r draws from its own generator seeded by ``mix_seed(dgp.seed, r)``,
    so the summary does not depend on ``workers``.
    """
    if reps < 1:
        raise ConfigError("reps must be >= 1")
    if method not in ("split", "crossfit"):
        raise ConfigError("method must be 'split' or 'crossfit'")
    if not 1 <= coord <= dgp.p:
        raise ConfigError(f"coord must lie in [1, {dgp.p}]")
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    job = McJob(dgp, method, K, lasso_cfg, proj_cfg, level, coord, correction_fold)
    idx = list(range(reps))
    if workers == 1 or reps == 1:
        results = _run_chunk(job, idx)
    else:
        chunks = [idx[w::workers] for w in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = [r for part in pool.map(_run_chunk, [job] * workers, chunks) for r in part]
    return summarize(job, results)


REPLICATE_COLUMNS = ["rep", "theta_tilde", "se", "covered", "failed"]
SUMMARY_COLUMNS = ["n0", "p", "theta_design", "x_design", "bias", "sd", "rmse", "coverage",
                   "reps", "failures", "degenerate"]


def write_replicates_csv(summary: McSummary, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPLICATE_COLUMNS)
        for r in summary.replicates:
            w.writerow([r.rep, repr(r.theta_tilde), repr(r.se), int(r.covered), int(r.failed)])


def write_summary_csv(summary: McSummary, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        w.writerow([repr(summary.n0), summary.p, summary.theta_design, summary.x_design,
                    repr(summary.bias), repr(summary.sd), repr(summary.rmse),
                    repr(summary.coverage), summary.reps, summary.failures,
                    int(summary.degenerate)])
