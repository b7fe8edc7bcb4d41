"""Command-line entry point: simulate, generate, fit, infer, quantile, text-prep, loglog.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import config as cfg
from .debias import CORRECTION_FOLDS, debias_cross_fit, debias_sample_split, write_inference_csv
from .errors import ConfigError, DataError, DivergenceError, HdtirError, ProjectionError
from .lasso import LassoConfig, fit_lasso
from .projection import ProjectionConfig
from .quantile import quantile_inference
from .simulate import (DgpConfig, XDesign, ThetaDesign, run_monte_carlo, simulate_dataset,
                       write_replicates_csv, write_summary_csv)
from .tail_data import (Dataset, extract_tail, loglog_points, loglog_slope, read_csv_dataset,
                        read_response, read_sparse_dataset, select_threshold, write_csv_dataset,
                        write_loglog_csv)
from .text_pipeline import (export_design, read_corpus, read_stopwords, text_prep,
                            write_vocabulary, write_word_bank)

log = logging.getLogger("hdtir")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

_FLAG_ALIASES = {"lambda_": "--lambda"}


def _flag(name: str) -> str:
    return _FLAG_ALIASES.get(name, "--" + name.replace("_", "-"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdtir", description=(
        "Tail index regression with debiased lasso inference for heavy-tailed responses."))
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, names in cfg.COMMANDS.items():
        sp = sub.add_parser(command)
        sp.add_argument("--config", help="INI file with [common] and per-command sections")
        for n in names:
            k = cfg.key(n)
            sp.add_argument(_flag(n), dest=n, type=k.kind, default=None,
                            help=f"{k.help} (default: {k.default!r})")
    return parser


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _require(values: dict, name: str) -> str:
    if not values.get(name):
        raise ConfigError(f"{_flag(name)} is required")
    return values[name]


def _choice(values: dict, name: str, allowed: Sequence[str]) -> str:
    v = values[name]
    if v not in allowed:
        raise ConfigError(f"{_flag(name)} must be one of {', '.join(allowed)}; got {v!r}")
    return v


def _lasso_cfg(values: dict) -> LassoConfig:
    return LassoConfig(lam=values.get("lambda_"), c=values["lambda_c"])


def _proj_cfg(values: dict) -> ProjectionConfig:
    return ProjectionConfig(c_prime=values["gamma1_c"], c_dprime=values["gamma2_c"])


def _parse_design(text: str) -> tuple[XDesign, ThetaDesign]:
    try:
        xd, td = text.split("-")
        return XDesign(xd), ThetaDesign(td)
    except ValueError:
        raise ConfigError(f"design must look like gaussian-exponential; got {text!r}") from None


def _load_dataset(values: dict) -> Dataset:
    if values.get("data"):
        return read_csv_dataset(values["data"], values.get("response_column") or "y")
    if values.get("triplets"):
        if not values.get("response") or not values.get("vocabulary"):
            raise ConfigError("a sparse design needs --response and --vocabulary")
        return read_sparse_dataset(values["triplets"], values["response"], values["vocabulary"],
                                   response_column=values.get("response_column") or "likes")
    raise ConfigError("give --data, or --triplets with --response and --vocabulary")


def _load_tail(values: dict):
    data = _load_dataset(values)
    omega = select_threshold(data.y, values["cutoff_level"])
    tail = extract_tail(data, omega)
    log.info("threshold %r leaves %d exceedances of %d", omega, tail.n0, data.n)
    return data, tail


def _parse_coords(text: str, p: int) -> list[int]:
    if text.strip().lower() == "all":
        return list(range(p))
    try:
        coords = [int(t) - 1 for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"--coord must be 1-based integers or 'all'; got {text!r}") from None
    if not coords or min(coords) < 0 or max(coords) >= p:
        raise ConfigError(f"--coord entries must lie in 1..{p}")
    return coords


def _parse_x(text: str, p: int) -> np.ndarray:
    if not text:
        raise ConfigError("--x is required")
    if text.strip().lower() == "zeros":
        return np.zeros(p)
    try:
        x = np.array([float(t) for t in text.split(",")])
    except ValueError:
        raise ConfigError(f"--x must be comma-separated numbers; got {text!r}") from None
    if x.size != p:
        raise ConfigError(f"--x has {x.size} entries, the design has {p} columns")
    return x


def _write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _out_dir(values: dict) -> Path:
    out = Path(_require(values, "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(values: dict) -> int:
    xd, td = _parse_design(values["design"])
    method = _choice(values, "method", ("split", "crossfit"))
    _choice(values, "correction_fold", CORRECTION_FOLDS)
    try:
        coord = int(values["coord"])
    except ValueError:
        raise ConfigError("simulate takes a single --coord") from None
    dgp = DgpConfig(td, xd, values["n"], values["p"], values["cutoff_level"], values["seed"])
    out = _out_dir(values)
    summary = run_monte_carlo(dgp, values["reps"], method, values["folds"], _lasso_cfg(values),
                              _proj_cfg(values), values["level"], coord,
                              workers=max(1, values["threads"]),
                              correction_fold=values["correction_fold"])
    write_replicates_csv(summary, out / "replicates.csv")
    write_summary_csv(summary, out / "summary.csv")
    if summary.degenerate:
        log.warning("only one successful replicate: sd reported as 0")
    log.info("bias %.4f sd %.4f rmse %.4f coverage %.4f failures %d", summary.bias, summary.sd,
             summary.rmse, summary.coverage, summary.failures)
    return EXIT_OK


def cmd_generate(values: dict) -> int:
    xd, td = _parse_design(values["design"])
    dgp = DgpConfig(td, xd, values["n"], values["p"], seed=values["seed"])
    data, theta, _ = simulate_dataset(dgp, 0)
    out = Path(_require(values, "out"))
    write_csv_dataset(data, out)
    _write_json({"theta": [float(v) for v in theta], "design": values["design"],
                 "n": dgp.n, "p": dgp.p, "seed": dgp.seed}, out.with_suffix(".theta.json"))
    return EXIT_OK


def cmd_fit(values: dict) -> int:
    data, tail = _load_tail(values)
    fit = fit_lasso(tail, _lasso_cfg(values))
    if not fit.converged:
        raise DivergenceError(f"lasso did not converge (KKT residual {fit.kkt_residual:.3g})")
    res = fit.to_json()
    res.update({"omega": float(tail.omega), "n0": tail.n0, "p": tail.p,
                "feature_names": [data.feature_name(j) for j in range(data.p)]})
    _write_json(res, _require(values, "out"))
    return EXIT_OK


def cmd_infer(values: dict) -> int:
    method = _choice(values, "method", ("split", "crossfit"))
    fold = _choice(values, "correction_fold", CORRECTION_FOLDS)
    data, tail = _load_tail(values)
    coords = _parse_coords(values["coord"], tail.p)
    names = [data.feature_name(j) for j in range(data.p)]
    if method == "split":
        res = debias_sample_split(tail, coords, _lasso_cfg(values), _proj_cfg(values),
                                  values["seed"], values["level"], fold, names)
    else:
        res = debias_cross_fit(tail, values["folds"], coords, _lasso_cfg(values),
                               _proj_cfg(values), values["seed"], values["level"], fold, names)
    write_inference_csv(res, _require(values, "out"))
    for r in res:
        if r.failed:
            log.warning("coordinate %d (%s) failed: %s", r.index + 1, r.name, r.message)
    if all(r.failed for r in res):
        raise ProjectionError("every requested coordinate failed")
    return EXIT_OK


def cmd_quantile(values: dict) -> int:
    fold = _choice(values, "correction_fold", CORRECTION_FOLDS)
    _, tail = _load_tail(values)
    x = _parse_x(values["x"], tail.p)
    est = quantile_inference(tail, x, values["tau"], values["folds"], _lasso_cfg(values),
                             _proj_cfg(values), values["seed"], values["level"], fold)
    if est.truncated:
        log.info("lower confidence limit truncated at the threshold %r", est.omega)
    _write_json(est.to_json(), _require(values, "out"))
    return EXIT_OK


def cmd_text_prep(values: dict) -> int:
    rank_key = _choice(values, "rank_key", ("doc_count", "count"))
    corpus = read_corpus(_require(values, "corpus"))
    stop = read_stopwords(values["stopwords"] or None)
    bank, spec, design = text_prep(corpus, values["top_p"], stop, rank_key,
                                   workers=max(1, values["threads"]))
    out = _out_dir(values)
    write_word_bank(bank, out / "word_bank.csv", rank_key)
    write_vocabulary(spec, out / "vocabulary.txt")
    export_design(design, out)
    log.info("%d posts, %d distinct words, %d selected", len(corpus), len(bank), spec.p)
    return EXIT_OK


def cmd_loglog(values: dict) -> int:
    if values.get("data"):
        y = read_csv_dataset(values["data"], values.get("response_column") or "y").y
    elif values.get("response"):
        y = read_response(values["response"], values.get("response_column") or "y")
    else:
        raise ConfigError("give --data or --response")
    pts = loglog_points(y)
    slope = loglog_slope(pts, values["top_fraction"])
    out = _out_dir(values)
    write_loglog_csv(pts, out / "loglog.csv")
    _write_json({"slope": slope, "top_fraction": values["top_fraction"],
                 "points": len(pts), "dropped_nonpositive": pts.n_dropped}, out / "slope.json")
    if pts.n_dropped:
        log.info("dropped %d nonpositive responses", pts.n_dropped)
    return EXIT_OK


COMMAND_FUNCS = {
    "simulate": cmd_simulate, "generate": cmd_generate, "fit": cmd_fit, "infer": cmd_infer,
    "quantile": cmd_quantile, "text-prep": cmd_text_prep, "loglog": cmd_loglog,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        file_values = cfg.load_file(args.config) if args.config else None
        flags = {n: getattr(args, n) for n in cfg.COMMANDS[args.command]}
        values = cfg.resolve(args.command, file_values, flags)
        log.info("resolved configuration:\n%s", cfg.format_resolved(args.command, values))
        # single-threaded BLAS: results must not depend on the machine's core count
        with threadpool_limits(limits=1):
            return COMMAND_FUNCS[args.command](values)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except (DivergenceError, ProjectionError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except HdtirError as exc:
        log.error("failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
