"""Experiment configuration documents and reference presets.

Configs are TOML documents with three sections: ``[environment]``,
``[algorithm]``, and ``[run]``.  The hyperparameter tables label the
exploration-scaling factor "gamma"; both ``lambda`` and ``gamma`` are
accepted as keys for it.
"""

from __future__ import annotations

from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .correlation import Metric
from .harness import ExperimentConfig
from .updates import Algorithm, AlgorithmConfig

PRESETS = {
    # Diagonal-covariance study defaults: constrained update with
    # prioritized exploration, MI selector.
    "lqr-diag-table2": {
        "environment": {"kind": "lqr", "dim": 10, "n_ineffective": 7, "env_seed": 0},
        "algorithm": {
            "name": "creps", "eps": 2.5, "kappa": 6.0, "m": 30, "lambda": 0.1,
            "metric": "mi-knn-regression",
        },
        "run": {"episodes_per_fit": 25, "n_epochs": 80, "n_seeds": 25},
    },
    # Full-covariance study defaults: reduced constrained update, PCC selector.
    "lqr-full-table3": {
        "environment": {"kind": "lqr", "dim": 10, "n_ineffective": 7, "env_seed": 0},
        "algorithm": {
            "name": "dr-creps", "eps": 4.7, "kappa": 17.0, "m": 50, "lambda": 0.1,
            "metric": "pcc",
        },
        "run": {"episodes_per_fit": 50, "n_epochs": 100, "n_seeds": 25},
    },
    # Effective-parameter identification study defaults.
    "lqr-pr-table5": {
        "environment": {"kind": "lqr", "dim": 10, "n_ineffective": 7, "env_seed": 0},
        "algorithm": {
            "name": "dr-creps", "eps": 4.5, "kappa": 15.0, "m": 10, "lambda": 0.1,
            "metric": "pcc",
        },
        "run": {"episodes_per_fit": 50, "n_epochs": 40, "n_seeds": 10},
    },
    # Ship-steering defaults.
    "ship-table6": {
        "environment": {"kind": "ship", "env_seed": 0},
        "algorithm": {
            "name": "dr-creps", "eps": 3.4, "kappa": 20.0, "m": 200, "lambda": 0.1,
            "metric": "pcc",
        },
        "run": {"episodes_per_fit": 15, "n_epochs": 233, "n_seeds": 25},
    },
}


class ConfigError(ValueError):
    """A configuration document is malformed or inconsistent."""


def _algorithm_from_section(section: dict) -> AlgorithmConfig:
    section = dict(section)
    name = section.pop("name", None)
    if name is None:
        raise ConfigError("algorithm section needs a 'name'")
    lam = section.pop("lambda", section.pop("gamma", 1.0))
    known = {
        "eps": 1.0, "kappa": 1.0, "m": 1, "metric": "pcc", "beta": 0.2,
        "elites": 25, "mi_bins": 4, "mi_k": 4,
    }
    unknown = set(section) - set(known)
    if unknown:
        raise ConfigError(f"unknown algorithm settings: {sorted(unknown)}")
    known.update(section)
    try:
        return AlgorithmConfig(
            algorithm=Algorithm.parse(name),
            eps=float(known["eps"]),
            kappa=float(known["kappa"]),
            m=int(known["m"]),
            lam=float(lam),
            metric=Metric.parse(known["metric"]),
            beta=float(known["beta"]),
            elite_count=int(known["elites"]),
            mi_bins=int(known["mi_bins"]),
            mi_k=int(known["mi_k"]),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e


def experiment_from_dict(doc: dict) -> ExperimentConfig:
    for key in ("environment", "algorithm", "run"):
        if key not in doc:
            raise ConfigError(f"missing [{key}] section")
    run = dict(doc["run"])
    known = {
        "episodes_per_fit": None, "n_epochs": None, "n_seeds": None,
        "eval_episodes": 25, "sigma_init": None, "base_seed": 0,
    }
    unknown = set(run) - set(known)
    if unknown:
        raise ConfigError(f"unknown run settings: {sorted(unknown)}")
    known.update(run)
    for key in ("episodes_per_fit", "n_epochs", "n_seeds"):
        if known[key] is None:
            raise ConfigError(f"run section needs '{key}'")
    try:
        return ExperimentConfig(
            environment=dict(doc["environment"]),
            algorithm=_algorithm_from_section(doc["algorithm"]),
            episodes_per_fit=int(known["episodes_per_fit"]),
            n_epochs=int(known["n_epochs"]),
            n_seeds=int(known["n_seeds"]),
            eval_episodes=int(known["eval_episodes"]),
            sigma_init=None if known["sigma_init"] is None else float(known["sigma_init"]),
            base_seed=int(known["base_seed"]),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    return experiment_from_dict(doc)


def preset_config(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return experiment_from_dict(PRESETS[name])
