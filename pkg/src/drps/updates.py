"""Episodic policy-search updates.

Implements the KL-bounded reweighting (temperature from a dual
minimization), the plain and constrained Gaussian refits, and the
rotated-space update that confines the refit to the highest-correlation
coordinates (guided dimensionality reduction) while scaling the sampling
variance of the remaining ones (prioritized exploration).  Reward-weighted
regression and cross-entropy baselines share the same state type.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .correlation import EffectiveSplit, Metric, score_parameters, select_effective
from .errors import ConstrainedUpdateError, IndefiniteUpdateError
from .gaussian import (
    GaussianDist,
    RotatedFrame,
    SampleBatch,
    WeightVector,
    back_project,
    constrained_wmle,
    project_samples,
    subst,
    svd_rotate,
    symmetrize,
    wmle_fit,
)

ETA_MIN = 1e-8
ETA_MAX = 1e8


class Algorithm(str, enum.Enum):
    REPS = "reps"
    CREPS = "creps"
    DR_REPS = "dr-reps"
    DR_CREPS = "dr-creps"
    RWR = "rwr"
    CEM = "cem"

    @classmethod
    def parse(cls, name: str) -> "Algorithm":
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            options = ", ".join(a.value for a in cls)
            raise ValueError(f"unknown algorithm {name!r}; expected one of: {options}") from None


@dataclass(frozen=True)
class AlgorithmConfig:
    """Hyperparameters for one update rule.

    ``lam`` is the exploration-scaling factor applied to the ineffective
    variances during sampling (the hyperparameter tables label it gamma);
    ``lam == 1`` disables prioritized exploration.  Fields irrelevant to the
    chosen algorithm are ignored but still range-checked.
    """

    algorithm: Algorithm
    eps: float = 1.0
    kappa: float = 1.0
    m: int = 1
    lam: float = 1.0
    metric: Metric = Metric.PCC
    beta: float = 0.2
    elite_count: int = 25
    mi_bins: int = 4
    mi_k: int = 4

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "metric", Metric(self.metric))
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")
        if self.kappa <= 0.0:
            raise ValueError("kappa must be positive")
        if self.m < 1:
            raise ValueError("m must be a positive integer")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("lam must lie in (0, 1]")
        if self.beta <= 0.0:
            raise ValueError("beta must be positive")
        if self.elite_count < 2:
            raise ValueError("elite_count must be at least 2")


@dataclass(frozen=True)
class SearchState:
    """Search distribution plus the sampling-time view of it.

    ``dist`` is the unmodified target distribution; ``sampling_dist`` only
    differs from it through prioritized exploration (covariance only, never
    the mean).  ``frame`` and ``split`` are the rotation and index partition
    computed by the most recent update.
    """

    dist: GaussianDist
    sampling_dist: GaussianDist
    frame: RotatedFrame
    split: Optional[EffectiveSplit] = None
    epoch: int = 0

    def __post_init__(self):
        if self.sampling_dist.dim != self.dist.dim:
            raise ValueError("sampling distribution dimension mismatch")
        if not np.array_equal(self.sampling_dist.mean, self.dist.mean):
            raise ValueError("prioritized exploration must not modify the mean")
        if self.epoch < 0:
            raise ValueError("epoch must be nonnegative")


def initial_state(dist: GaussianDist) -> SearchState:
    """State before the first update: sampling is unmodified."""
    return SearchState(dist=dist, sampling_dist=dist, frame=svd_rotate(dist), split=None, epoch=0)


@dataclass(frozen=True)
class DualSolution:
    eta_star: float
    dual_value: float

    def __post_init__(self):
        if not (math.isfinite(self.eta_star) and self.eta_star > 0.0):
            raise ValueError("eta_star must be positive and finite")


def reps_dual_minimize(returns, eps: float) -> DualSolution:
    """Minimize the reweighting dual g(eta) over a bounded log-domain.

    g(eta) = eta*eps + eta*ln(mean(exp((J - max J)/eta))) + max J.  At an
    interior optimum the KL of the induced weights from uniform equals eps.
    Constant returns yield a sentinel solution whose weights are uniform.
    """
    returns = np.asarray(returns, dtype=float).ravel()
    if returns.size < 2:
        raise ValueError("at least two returns are required")
    if not np.all(np.isfinite(returns)):
        raise ValueError("returns must be finite")
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    top = float(returns.max())
    shifted = returns - top
    if np.all(shifted == 0.0):
        return DualSolution(eta_star=1.0, dual_value=eps + top)

    def g(log_eta):
        eta = math.exp(log_eta)
        return eta * eps + eta * math.log(float(np.mean(np.exp(shifted / eta)))) + top

    res = minimize_scalar(
        g,
        bounds=(math.log(ETA_MIN), math.log(ETA_MAX)),
        method="bounded",
        options={"xatol": 1e-12},
    )
    eta_star = math.exp(float(res.x))
    return DualSolution(eta_star=eta_star, dual_value=float(res.fun))


def compute_weights(returns, eta_star: float) -> WeightVector:
    """Exponential weights exp((J - max J)/eta*); the best sample gets 1."""
    returns = np.asarray(returns, dtype=float).ravel()
    if not np.all(np.isfinite(returns)):
        raise ValueError("returns must be finite")
    if eta_star <= 0.0:
        raise ValueError("eta_star must be positive")
    return WeightVector(d=np.exp((returns - returns.max()) / eta_star))


def _weight_ess(eta: float, shifted: np.ndarray) -> float:
    d = np.exp(shifted / eta)
    total = float(d.sum())
    return total * total / float(d @ d)


def effective_temperature(returns, eps: float) -> float:
    """Dual-optimal temperature, floored so the weights keep ESS >= sqrt(N).

    When the KL bound approaches or exceeds ln N the empirical dual has no
    interior minimum and its boundary solution concentrates all weight on a
    single sample; a fit from one effective sample carries no covariance
    information and stalls the search.  The square-root-of-N effective
    sample size is the usual importance-sampling reliability floor, and the
    guard is inactive whenever the dual solution already satisfies it.
    """
    returns = np.asarray(returns, dtype=float).ravel()
    eta_star = reps_dual_minimize(returns, eps).eta_star
    shifted = returns - returns.max()
    if np.all(shifted == 0.0):
        return eta_star
    target = math.sqrt(returns.size)
    if _weight_ess(eta_star, shifted) >= target:
        return eta_star
    lo, hi = eta_star, 1e9
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if _weight_ess(mid, shifted) < target:
            lo = mid
        else:
            hi = mid
    return hi


def _successor(state: SearchState, new_dist: GaussianDist,
               sampling: Optional[GaussianDist] = None,
               frame: Optional[RotatedFrame] = None,
               split: Optional[EffectiveSplit] = None) -> SearchState:
    return SearchState(
        dist=new_dist,
        sampling_dist=new_dist if sampling is None else sampling,
        frame=svd_rotate(new_dist) if frame is None else frame,
        split=split,
        epoch=state.epoch + 1,
    )


def reps_update(state: SearchState, batch: SampleBatch, eps: float) -> SearchState:
    """Plain reweight-and-refit update in the original parameter space."""
    weights = compute_weights(batch.returns, effective_temperature(batch.returns, eps))
    return _successor(state, wmle_fit(batch.thetas, weights))


def creps_update(state: SearchState, batch: SampleBatch, eps: float, kappa: float) -> SearchState:
    """Constrained refit: KL(old || new) <= eps, entropy drop <= kappa."""
    weights = compute_weights(batch.returns, effective_temperature(batch.returns, eps))
    try:
        new_dist = constrained_wmle(state.dist, batch.thetas, weights, eps, kappa)
    except ConstrainedUpdateError as e:
        raise ConstrainedUpdateError(
            f"epoch {state.epoch + 1}: {e}",
            eta=e.eta, omega=e.omega, kl=e.kl, entropy_drop=e.entropy_drop,
        ) from e
    return _successor(state, new_dist)


def _rotated_update(state: SearchState, batch: SampleBatch, config: AlgorithmConfig,
                    *, constrained: bool, reduce_dims: bool, seed: Optional[int]) -> SearchState:
    """One pass of the rotated-space update.

    Rotate, score, split, reweight, refit the effective block, substitute,
    rotate back, and build the prioritized sampling covariance.  With
    ``reduce_dims`` disabled the refit covers the whole rotated space and
    only the exploration scaling remains.
    """
    dist = state.dist
    n = dist.dim
    if batch.size < 2:
        raise ValueError("at least two samples are required per update")
    frame = svd_rotate(dist)
    thetas_rot = project_samples(frame, dist.mean, batch.thetas)
    score_seed = state.epoch if seed is None else seed
    scores = score_parameters(
        thetas_rot, batch.returns, config.metric, score_seed,
        bins=config.mi_bins, k=config.mi_k,
    )
    # The split always uses the configured selection size (it drives the
    # exploration scaling); the refit block is the effective set only when
    # the reduced update is active.
    split = select_effective(scores, min(config.m, n))
    eff = split.effective if reduce_dims else np.arange(n)

    weights = compute_weights(batch.returns,
                              effective_temperature(batch.returns, config.eps))

    sub_prev = GaussianDist(mean=np.zeros(eff.size), cov=np.diag(frame.s[eff]))
    sub_data = thetas_rot[:, eff]
    if constrained:
        try:
            sub_new = constrained_wmle(sub_prev, sub_data, weights, config.eps, config.kappa)
        except ConstrainedUpdateError as e:
            raise ConstrainedUpdateError(
                f"epoch {state.epoch + 1} (effective block size {eff.size}): {e}",
                eta=e.eta, omega=e.omega, kl=e.kl, entropy_drop=e.entropy_drop,
            ) from e
    else:
        sub_new = wmle_fit(sub_data, weights)

    mean_rot = subst(np.zeros(n), sub_new.mean, eff)
    s_new = subst(np.diag(frame.s), sub_new.cov, eff)
    try:
        new_dist = back_project(dist.mean, frame, mean_rot, s_new)
    except IndefiniteUpdateError as e:
        raise IndefiniteUpdateError(
            f"epoch {state.epoch + 1} (effective block size {eff.size}): {e}"
        ) from e

    sampling = new_dist
    if config.lam < 1.0 and split.ineffective.size:
        # Scale the ineffective variances for sampling only.  The scaling is
        # applied as a congruence so it stays positive definite even when
        # cross terms are present; with the reduced update the cross terms
        # are zero and this equals substituting lam times the block.
        scale = np.ones(n)
        scale[split.ineffective] = math.sqrt(config.lam)
        s_pe = scale[:, None] * s_new * scale[None, :]
        cov_pe = symmetrize(frame.u @ s_pe @ frame.u.T)
        sampling = GaussianDist(mean=new_dist.mean, cov=cov_pe)

    return SearchState(
        dist=new_dist, sampling_dist=sampling, frame=frame, split=split,
        epoch=state.epoch + 1,
    )


def dr_creps_update(state: SearchState, batch: SampleBatch, config: AlgorithmConfig,
                    seed: Optional[int] = None) -> SearchState:
    """Constrained rotated-space update restricted to the effective block."""
    if config.algorithm is not Algorithm.DR_CREPS:
        raise ValueError("config.algorithm must be dr-creps")
    return _rotated_update(state, batch, config, constrained=True, reduce_dims=True, seed=seed)


def dr_reps_update(state: SearchState, batch: SampleBatch, config: AlgorithmConfig,
                   seed: Optional[int] = None) -> SearchState:
    """Unconstrained rotated-space update restricted to the effective block."""
    if config.algorithm is not Algorithm.DR_REPS:
        raise ValueError("config.algorithm must be dr-reps")
    return _rotated_update(state, batch, config, constrained=False, reduce_dims=True, seed=seed)


def rwr_update(state: SearchState, batch: SampleBatch, beta: float) -> SearchState:
    """Reward-weighted refit with fixed temperature ``beta``."""
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    weights = WeightVector(d=np.exp(beta * (batch.returns - batch.returns.max())))
    return _successor(state, wmle_fit(batch.thetas, weights))


def cem_update(state: SearchState, batch: SampleBatch, elite_count: int) -> SearchState:
    """Unweighted refit of the highest-return samples."""
    if not 2 <= elite_count <= batch.size:
        raise ValueError("elite_count must lie in [2, batch size]")
    order = np.argsort(-batch.returns, kind="stable")
    elites = batch.thetas[order[:elite_count]]
    return _successor(state, wmle_fit(elites, np.ones(elite_count)))


def apply_update(state: SearchState, batch: SampleBatch, config: AlgorithmConfig,
                 seed: Optional[int] = None) -> SearchState:
    """Dispatch one epoch's update for the configured algorithm.

    REPS/CREPS with ``lam < 1`` run through the rotated path with the refit
    covering the full space, which enables prioritized exploration without
    dimensionality reduction.
    """
    algo = config.algorithm
    if algo is Algorithm.REPS:
        if config.lam < 1.0:
            return _rotated_update(state, batch, config, constrained=False,
                                   reduce_dims=False, seed=seed)
        return reps_update(state, batch, config.eps)
    if algo is Algorithm.CREPS:
        if config.lam < 1.0:
            return _rotated_update(state, batch, config, constrained=True,
                                   reduce_dims=False, seed=seed)
        return creps_update(state, batch, config.eps, config.kappa)
    if algo is Algorithm.DR_REPS:
        return dr_reps_update(state, batch, config, seed=seed)
    if algo is Algorithm.DR_CREPS:
        return dr_creps_update(state, batch, config, seed=seed)
    if algo is Algorithm.RWR:
        return rwr_update(state, batch, config.beta)
    if algo is Algorithm.CEM:
        return cem_update(state, batch, config.elite_count)
    raise ValueError(f"unhandled algorithm {algo}")


def check_batch_size(config: AlgorithmConfig, episodes_per_fit: int, dim: int) -> None:
    """Warn when the effective-block fit has no spare degrees of freedom.

    The constrained refit stays positive definite through its KL multiplier
    even when the batch is smaller than the block, so this is advisory; the
    reference configurations routinely use m >= batch size.
    """
    if config.algorithm in (Algorithm.DR_REPS, Algorithm.DR_CREPS):
        m = min(config.m, dim)
        if episodes_per_fit < m + 2:
            warnings.warn(
                f"episodes_per_fit={episodes_per_fit} is below m+2={m + 2}; "
                "the effective-block fit will rely on the KL multiplier for "
                "positive definiteness",
                stacklevel=2,
            )
