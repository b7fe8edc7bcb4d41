"""Run configuration: per-command keys, INI files and flag overrides.

Values resolve in three layers: built-in defaults, then the config file
(a ``[common]`` section plus one section per command), then command-line
flags. Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

from .errors import ConfigError


@dataclass(frozen=True)
class Key:
    name: str
    kind: Callable[[str], Any]
    default: Any
    help: str


def _opt_float(text):
    return None if text in (None, "", "none", "None") else float(text)


_KEYS = {k.name: k for k in [
    Key("seed", int, 0, "master random seed"),
    Key("threads", int, os.cpu_count() or 1, "worker processes (results do not depend on it)"),
    Key("level", float, 0.95, "confidence level"),
    Key("cutoff_level", float, 0.95, "threshold = empirical quantile of y at this level"),
    Key("lambda_c", float, 1.0, "lasso rule constant c in c*sqrt(log p / n0)"),
    Key("lambda_", _opt_float, None, "explicit lasso penalty (overrides lambda_c)"),
    Key("gamma1_c", float, 1.0, "projection constant c' for the box on A u - t"),
    Key("gamma2_c", float, 100.0, "projection constant c'' for the row bound"),
    Key("folds", int, 5, "number of cross-fitting folds K"),
    Key("method", str, "crossfit", "debiasing scheme: split or crossfit"),
    Key("correction_fold", str, "estimation", "fold for the score correction: estimation or projection"),
    Key("coord", str, "1", "1-based coordinates: '1', '1,3,7' or 'all'"),
    Key("design", str, "gaussian-exponential", "simulation design as <x design>-<theta design>"),
    Key("n", int, 10_000, "simulated sample size"),
    Key("p", int, 100, "simulated dimension"),
    Key("reps", int, 500, "Monte Carlo replicates"),
    Key("data", str, "", "dense CSV dataset (response column plus covariates)"),
    Key("response_column", str, "", "response column name (default y for CSV, likes for sparse)"),
    Key("triplets", str, "", "sparse design as row,col,value triplets"),
    Key("response", str, "", "response CSV for a sparse design"),
    Key("vocabulary", str, "", "feature names, one per line"),
    Key("tau", float, 0.9, "conditional quantile level"),
    Key("x", str, "", "query covariates: comma-separated values or 'zeros'"),
    Key("corpus", str, "", "posts CSV with columns id,text,likes"),
    Key("top_p", int, 500, "vocabulary size"),
    Key("stopwords", str, "", "stopword file (default: bundled list)"),
    Key("rank_key", str, "doc_count", "vocabulary ranking: doc_count or count"),
    Key("top_fraction", float, 0.1, "share of largest points used for the log-log slope"),
    Key("out", str, "", "output file or directory"),
]}

_SHARED_FIT = ["seed", "cutoff_level", "lambda_c", "gamma1_c", "gamma2_c", "folds", "level",
               "correction_fold"]
_DATA = ["data", "response_column", "triplets", "response", "vocabulary"]

COMMANDS = {
    "simulate": ["design", "n", "p", "reps", "coord", "method", "threads", "out"] + _SHARED_FIT,
    "generate": ["design", "n", "p", "seed", "threads", "out"],
    "fit": _DATA + ["cutoff_level", "lambda_c", "lambda_", "threads", "out"],
    "infer": _DATA + _SHARED_FIT + ["method", "coord", "threads", "out"],
    "quantile": _DATA + _SHARED_FIT + ["tau", "x", "threads", "out"],
    "text-prep": ["corpus", "top_p", "stopwords", "rank_key", "threads", "out"],
    "loglog": ["data", "response_column", "response", "top_fraction", "threads", "out"],
}

COMMON_KEYS = sorted(set().union(*COMMANDS.values()))


def key(name: str) -> Key:
    return _KEYS[name]


def ini_name(name: str) -> str:
    return name.rstrip("_")


def _from_ini(name: str) -> str:
    return name + "_" if name + "_" in _KEYS else name


def _convert(name: str, raw, where: str):
    k = _KEYS[name]
    try:
        return k.kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: bad value {raw!r} for {ini_name(name)}") from None


def load_file(path) -> dict:
    """Parse an INI file into {section: {key: raw string}} after validation."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        with Path(path).open(encoding="utf-8") as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = {}
    for section in parser.sections():
        if section == "common":
            allowed = set(COMMON_KEYS)
        elif section in COMMANDS:
            allowed = set(COMMANDS[section])
        else:
            raise ConfigError(f"{path}: unknown section [{section}]")
        vals = {}
        for raw_key, raw in parser.items(section):
            name = _from_ini(raw_key)
            if name not in allowed:
                raise ConfigError(f"{path}: unknown key {raw_key!r} in [{section}]")
            vals[name] = raw
        out[section] = vals
    return out


def resolve(command: str, file_values: Optional[dict], flags: dict) -> dict:
    """Defaults, then [common], then [command], then non-None flags."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    names = COMMANDS[command]
    values = {n: _KEYS[n].default for n in names}
    file_values = file_values or {}
    for section in ("common", command):
        for n, raw in file_values.get(section, {}).items():
            if n in values:
                values[n] = _convert(n, raw, f"[{section}]")
    for n, v in flags.items():
        if n in values and v is not None:
            values[n] = v
    return values


def format_resolved(command: str, values: dict, skip=("threads",)) -> str:
    """INI text that reproduces ``values`` when passed back via --config.

    ``threads`` is left out because it never changes results.
    """
    lines = [f"[{command}]"]
    for n in COMMANDS[command]:
        if n in skip:
            continue
        v = values[n]
        lines.append(f"{ini_name(n)} = {'' if v is None else v}")
    return "\n".join(lines) + "\n"
