"""Experiment configuration: YAML files, defaults and overrides.

A config file has the top-level keys ``experiment``, ``seed``, ``threads``
and ``parameters``.  Parameters not listed in :data:`DEFAULTS` for the
experiment are rejected with their dotted path.  Command-line values win
over the file, which wins over the defaults.
"""

import copy
import hashlib
import json
from dataclasses import dataclass, field

import yaml

from ..errors import DomainError

LOCALIZE_TIMES = [1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 0.1]

SIGMA_DEFAULT = {"kind": "bounded_sin", "p0": None, "p1": 1.0, "lo": None, "hi": None}

DEFAULTS = {
    "cov": {"t": 1.0, "s": 1.0, "x": 0.0, "y": 0.0},
    "localize-check": {"t": LOCALIZE_TIMES, "alpha": [0.25, 0.5, 0.75]},
    "sample-h": {"a": 1.0, "b": 64.0, "points_per_octave": 4, "n_paths": 10},
    "simulate": {
        "sigma": SIGMA_DEFAULT, "dx": 0.01, "dt": None, "horizon": 2.0**-4,
        "t_first": 2.0**-12, "per_octave": 1, "replicas": 200, "half_width": None,
        "alpha": 0.5, "shard_size": 250,
    },
    "exponent": {
        "theta": [0.4, 0.6, 0.8, 1.0, 1.4, 2.0], "ratios": [64.0, 256.0, 1024.0, 4096.0],
        "density": 32, "sub_densities": [16], "trials": 100_000, "min_hits": 30,
    },
    "smallball-u": {
        "theta": 1.0, "eps": [2.0**-6, 2.0**-8, 2.0**-10], "f_power": 0.5,
        "trials": 20_000, "sigma": SIGMA_DEFAULT, "density": 8, "mesh": 4,
        "gaussian_trials": 200_000, "shard_size": 250,
    },
    "slowset": {
        "theta": 1.2, "sigma": SIGMA_DEFAULT, "dx": 2.0**-10, "t_min": 2.0**-16,
        "t_max": 2.0**-6, "per_octave": 8, "replicas": 4, "n_max": None,
        "level_range": None, "lambda_hat": None, "lambda_se": 0.0, "theta_c": None,
        "lambda_trials": 100_000, "ratios": [64.0, 256.0, 1024.0, 4096.0], "density": 32,
    },
    "report": {"dir": None},
}

EXPERIMENTS = tuple(DEFAULTS)
TOP_KEYS = {"experiment", "seed", "threads", "parameters"}


class ConfigError(DomainError):
    """Invalid or unknown configuration entry; ``param`` is the dotted path."""


@dataclass
class ExperimentConfig:
    experiment: str
    parameters: dict
    seed: int = 0
    threads: int = 1
    source: str | None = None
    warnings: list = field(default_factory=list)

    def resolved(self) -> dict:
        """Everything that determines the data outputs (not ``threads``)."""
        return {"experiment": self.experiment, "seed": self.seed,
                "parameters": self.parameters}

    def digest(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _merge(base, upd, path):
    out = copy.deepcopy(base)
    for k, v in upd.items():
        p = f"{path}.{k}"
        if k not in base:
            raise ConfigError(f"unknown key {k!r}", param=p)
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError("expected a mapping", param=p)
            out[k] = _merge(base[k], v, p)
        else:
            out[k] = v
    return out


def parse_value(text):
    """YAML scalar or list; a bare comma-separated string becomes a list."""
    v = yaml.safe_load(text)
    if isinstance(v, str) and "," in v:
        return [yaml.safe_load(x) for x in v.split(",")]
    return v


def _set_path(d, dotted, value):
    keys = dotted.split(".")
    cur = d
    for k in keys[:-1]:
        cur = cur.setdefault(k, {})
    cur[keys[-1]] = value


def build_config(experiment, file_params=None, overrides=None, seed=None, threads=None,
                 file_seed=None, file_threads=None, source=None) -> ExperimentConfig:
    if experiment not in DEFAULTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {EXPERIMENTS}",
                          param="experiment")
    params = _merge(DEFAULTS[experiment], file_params or {}, "parameters")
    upd = {}
    for k, v in (overrides or {}).items():
        _set_path(upd, k, v)
    params = _merge(params, upd, "parameters")
    seed = seed if seed is not None else (file_seed if file_seed is not None else 0)
    threads = threads if threads is not None else (file_threads or 1)
    try:
        seed = int(seed)
    except (TypeError, ValueError):
        raise ConfigError(f"seed must be an integer, got {seed!r}", param="seed") from None
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must fit in 64 bits", param="seed")
    if int(threads) < 1:
        raise ConfigError("must be >= 1", param="threads")
    return ExperimentConfig(experiment, params, seed, int(threads), source)


def load_config(path, overrides=None, seed=None, threads=None, experiment=None):
    """Read a YAML config file and apply overrides."""
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping", param="<root>")
    extra = set(doc) - TOP_KEYS
    if extra:
        raise ConfigError(f"unknown key {sorted(extra)[0]!r}", param=sorted(extra)[0])
    exp = doc.get("experiment", experiment)
    if experiment is not None and exp != experiment:
        raise ConfigError(f"file is for {exp!r}, not {experiment!r}", param="experiment")
    params = doc.get("parameters") or {}
    if not isinstance(params, dict):
        raise ConfigError("expected a mapping", param="parameters")
    return build_config(exp, params, overrides, seed, threads, doc.get("seed"),
                        doc.get("threads"), str(path))
