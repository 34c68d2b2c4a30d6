"""Environment registry and batch evaluation.

Environments are immutable descriptions; evaluation creates transient
per-call state only, so batches can fan out across workers with results
identical to sequential evaluation.
"""

from __future__ import annotations

import numpy as np

from .lqr import LqrEnv, lqr_evaluate_params, lqr_make
from .ship import ShipSteeringEnv, ship_evaluate_params, ship_make

DEFAULT_SIGMA_INIT = {"lqr": 0.3, "ship": 0.07}


def evaluate_batch(env, thetas, base_seed: int) -> np.ndarray:
    """Episode return per parameter row; row i runs under seed base_seed + i.

    Rows are independent and ordered by index.  LQR episodes are
    deterministic, so their per-row seeds are irrelevant but accepted for a
    uniform interface.
    """
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim != 2:
        raise ValueError("thetas must be a matrix with one parameter vector per row")
    if thetas.shape[0] == 0:
        return np.empty(0)
    try:
        if isinstance(env, LqrEnv):
            return lqr_evaluate_params(env, thetas)
        if isinstance(env, ShipSteeringEnv):
            return ship_evaluate_params(env, thetas, base_seed)
    except ValueError as e:
        raise ValueError(f"batch evaluation failed: {e}") from e
    raise TypeError(f"unsupported environment type {type(env).__name__}")


def param_count(env) -> int:
    return env.param_count


def make_environment(spec: dict):
    """Build an environment from a configuration section.

    Expected keys: ``kind`` ("lqr" or "ship") plus the kind-specific
    parameters; unknown keys raise so typos do not silently change runs.
    """
    spec = dict(spec)
    kind = str(spec.pop("kind", "")).lower()
    if kind == "lqr":
        known = {
            "dim": 10, "n_ineffective": 7, "env_seed": 0,
            "horizon": 50, "discount": 0.9, "clip": 1.0,
        }
        unknown = set(spec) - set(known)
        if unknown:
            raise ValueError(f"unknown lqr settings: {sorted(unknown)}")
        known.update(spec)
        return lqr_make(
            int(known["dim"]),
            int(known["n_ineffective"]),
            int(known["env_seed"]),
            horizon=int(known["horizon"]),
            discount=float(known["discount"]),
            clip=float(known["clip"]),
        )
    if kind == "ship":
        unknown = set(spec) - {"env_seed"}
        if unknown:
            raise ValueError(f"unknown ship settings: {sorted(unknown)}")
        return ship_make(int(spec.get("env_seed", 0)))
    raise ValueError(f"unknown environment kind {kind!r}")


def environment_kind(env) -> str:
    if isinstance(env, LqrEnv):
        return "lqr"
    if isinstance(env, ShipSteeringEnv):
        return "ship"
    raise TypeError(f"unsupported environment type {type(env).__name__}")
