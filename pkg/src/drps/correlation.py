"""Parameter-effectiveness metrics and effective/ineffective selection.

Scores each parameter coordinate against the episodic return with either
the absolute Pearson correlation or one of three mutual-information
estimators (plug-in histogram, Kraskov k-nearest-neighbor, and the
standardized/clamped variant of the latter), plus an analytic Gaussian MI
oracle for benchmarking the estimators.
"""

from __future__ import annotations

import enum
import math
import warnings
import zlib
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma


class Metric(str, enum.Enum):
    PCC = "pcc"
    MI_HISTOGRAM = "mi-histogram"
    MI_KSG = "mi-ksg"
    MI_KNN_REGRESSION = "mi-knn-regression"
    RANDOM = "random"

    @classmethod
    def parse(cls, name: str) -> "Metric":
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            options = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown metric {name!r}; expected one of: {options}") from None


@dataclass(frozen=True)
class CorrelationScores:
    """Per-coordinate effectiveness scores under a given metric."""

    scores: np.ndarray
    metric: Metric

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        if scores.ndim != 1:
            raise ValueError("scores must be a vector")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        if self.metric is Metric.PCC and (scores.min() < -1e-12 or scores.max() > 1.0 + 1e-12):
            raise ValueError("absolute Pearson scores must lie in [0, 1]")
        if self.metric is Metric.MI_KNN_REGRESSION and scores.min() < 0.0:
            raise ValueError("clamped MI scores must be nonnegative")
        scores = scores.copy()
        scores.flags.writeable = False
        object.__setattr__(self, "scores", scores)

    @property
    def dim(self) -> int:
        return self.scores.shape[0]


@dataclass(frozen=True)
class EffectiveSplit:
    """Partition of coordinate indices into effective and ineffective sets."""

    effective: np.ndarray
    ineffective: np.ndarray

    def __post_init__(self):
        eff = np.asarray(self.effective, dtype=int)
        ineff = np.asarray(self.ineffective, dtype=int)
        if np.any(np.diff(eff) <= 0) or np.any(np.diff(ineff) <= 0):
            raise ValueError("index sets must be sorted and duplicate-free")
        n = eff.size + ineff.size
        combined = np.concatenate([eff, ineff])
        if not np.array_equal(np.sort(combined), np.arange(n)):
            raise ValueError("effective and ineffective sets must partition 0..n-1")
        eff, ineff = eff.copy(), ineff.copy()
        eff.flags.writeable = False
        ineff.flags.writeable = False
        object.__setattr__(self, "effective", eff)
        object.__setattr__(self, "ineffective", ineff)

    @property
    def dim(self) -> int:
        return self.effective.size + self.ineffective.size


@dataclass(frozen=True)
class GaussianLinearModel:
    """Linear-Gaussian pair Y = A X + E with Gaussian X and noise E."""

    a: np.ndarray
    sigma_xx: np.ndarray
    mu_xx: np.ndarray
    sigma_e: np.ndarray
    mu_e: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        sigma_xx = np.atleast_2d(np.asarray(self.sigma_xx, dtype=float))
        sigma_e = np.atleast_2d(np.asarray(self.sigma_e, dtype=float))
        mu_xx = np.atleast_1d(np.asarray(self.mu_xx, dtype=float))
        mu_e = np.atleast_1d(np.asarray(self.mu_e, dtype=float))
        ny, nx = a.shape
        if sigma_xx.shape != (nx, nx) or mu_xx.shape != (nx,):
            raise ValueError("X moments do not match the transformation width")
        if sigma_e.shape != (ny, ny) or mu_e.shape != (ny,):
            raise ValueError("E moments do not match the transformation height")
        if np.linalg.matrix_rank(a) < min(ny, nx):
            raise ValueError("transformation matrix must have full rank")
        for name, m in (("sigma_xx", sigma_xx), ("sigma_e", sigma_e)):
            try:
                np.linalg.cholesky(m)
            except np.linalg.LinAlgError:
                raise ValueError(f"{name} must be positive definite") from None
        for key, val in {
            "a": a, "sigma_xx": sigma_xx, "mu_xx": mu_xx, "sigma_e": sigma_e, "mu_e": mu_e,
        }.items():
            val = val.copy()
            val.flags.writeable = False
            object.__setattr__(self, key, val)


def _check_pair(xs, ys):
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    if xs.shape != ys.shape:
        raise ValueError("inputs must have equal length")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise ValueError("inputs must be finite")
    return xs, ys


def pcc(xs, ys) -> float:
    """Absolute Pearson correlation between two sample vectors."""
    xs, ys = _check_pair(xs, ys)
    if xs.size < 2:
        raise ValueError("at least two samples are required")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        raise ValueError("undefined correlation: an input has zero variance")
    return min(abs(float(dx @ dy)) / denom, 1.0)


def mi_histogram(xs, ys, bins: int) -> float:
    """Plug-in mutual information from equal-width histograms, in nats.

    Computes H(X) + H(Y) - H(X, Y) on the binned sample distributions (bin
    widths cancel in the combination) and clamps the result at zero.
    """
    xs, ys = _check_pair(xs, ys)
    if bins < 2:
        raise ValueError("bins must be at least 2")
    if xs.size < bins:
        raise ValueError("need at least as many samples as bins")
    joint, _, _ = np.histogram2d(xs, ys, bins=bins)
    p = joint / joint.sum()
    px = p.sum(axis=1)
    py = p.sum(axis=0)

    def _h(q):
        q = q[q > 0.0]
        return -float(np.sum(q * np.log(q)))

    return max(_h(px) + _h(py) - _h(p.ravel()), 0.0)


def _ksg_counts(sorted_vals, vals, radii):
    # Number of points within the open interval (v - r, v + r), self excluded.
    left = np.searchsorted(sorted_vals, vals - radii, side="right")
    right = np.searchsorted(sorted_vals, vals + radii, side="left")
    return right - left - 1


def mi_ksg(xs, ys, k: int) -> float:
    """Kraskov k-nearest-neighbor mutual information (first variant), in nats.

    Uses max-norm neighborhoods in the joint space and strict-inequality
    marginal counts.  Coincident points that collapse the k-th neighbor
    distance are broken by a deterministic jitter of 1e-10 times the data
    range, seeded from a checksum of the input bytes.
    """
    xs, ys = _check_pair(xs, ys)
    n = xs.size
    if k < 1:
        raise ValueError("k must be at least 1")
    if k >= n:
        raise ValueError("k must be smaller than the number of samples")

    def _radii(x, y):
        tree = cKDTree(np.column_stack([x, y]))
        dist, _ = tree.query(np.column_stack([x, y]), k=k + 1, p=np.inf)
        return dist[:, k]

    eps = _radii(xs, ys)
    if np.any(eps == 0.0):
        seed = zlib.crc32(xs.tobytes() + ys.tobytes())
        rng = np.random.default_rng(seed)
        span_x = float(np.ptp(xs)) or 1.0
        span_y = float(np.ptp(ys)) or 1.0
        xs = xs + rng.uniform(-1.0, 1.0, n) * 1e-10 * span_x
        ys = ys + rng.uniform(-1.0, 1.0, n) * 1e-10 * span_y
        eps = _radii(xs, ys)

    nx = _ksg_counts(np.sort(xs), xs, eps)
    ny = _ksg_counts(np.sort(ys), ys, eps)
    return float(digamma(k) + digamma(n) - np.mean(digamma(nx + 1) + digamma(ny + 1)))


def mi_knn_regression(xs, ys, k: int) -> float:
    """Standardized, nonnegative variant of the Kraskov estimator."""
    xs, ys = _check_pair(xs, ys)
    sx = xs.std()
    sy = ys.std()
    if sx == 0.0 or sy == 0.0:
        raise ValueError("zero-variance input")
    xs = (xs - xs.mean()) / sx
    ys = (ys - ys.mean()) / sy
    return max(mi_ksg(xs, ys, k), 0.0)


def analytic_gaussian_mi(model: GaussianLinearModel) -> float:
    """Exact mutual information of the linear-Gaussian pair, in nats.

    H(Y) - H(Y|X) = 0.5 ln det(sigma_e + A sigma_xx A^T) - 0.5 ln det(sigma_e).
    """
    sigma_y = model.sigma_e + model.a @ model.sigma_xx @ model.a.T
    sign_y, logdet_y = np.linalg.slogdet(sigma_y)
    sign_e, logdet_e = np.linalg.slogdet(model.sigma_e)
    if sign_e <= 0.0:
        raise ValueError("sigma_e is singular")
    if sign_y <= 0.0:
        raise ValueError("marginal covariance of Y is singular")
    return max(0.5 * (logdet_y - logdet_e), 0.0)


def score_parameters(thetas_rot, returns, metric: Metric, seed: int,
                     bins: int = 4, k: int = 4) -> CorrelationScores:
    """Score every parameter column against the returns under ``metric``.

    Zero-variance columns score 0.0 with a warning instead of raising; the
    rotation can legitimately freeze directions.  ``Metric.RANDOM`` draws
    uniform scores from ``seed`` as a selector baseline.  Other estimator
    failures are re-raised tagged with the offending column index.
    """
    thetas_rot = np.asarray(thetas_rot, dtype=float)
    returns = np.asarray(returns, dtype=float).ravel()
    if thetas_rot.ndim != 2 or thetas_rot.shape[0] != returns.shape[0]:
        raise ValueError("need one return per sample row")
    metric = Metric(metric)
    n = thetas_rot.shape[1]

    if metric is Metric.RANDOM:
        rng = np.random.default_rng(seed)
        return CorrelationScores(scores=rng.uniform(size=n), metric=metric)

    if np.ptp(returns) == 0.0:
        # Constant returns carry no ranking information; every estimator is
        # degenerate, so scores collapse to zero rather than aborting a run.
        warnings.warn("constant returns: all scores set to 0", stacklevel=2)
        return CorrelationScores(scores=np.zeros(n), metric=metric)

    estimators = {
        Metric.PCC: lambda col: pcc(col, returns),
        Metric.MI_HISTOGRAM: lambda col: mi_histogram(col, returns, bins),
        Metric.MI_KSG: lambda col: mi_ksg(col, returns, k),
        Metric.MI_KNN_REGRESSION: lambda col: mi_knn_regression(col, returns, k),
    }
    estimate = estimators[metric]
    scores = np.empty(n)
    for j in range(n):
        col = thetas_rot[:, j]
        if np.ptp(col) == 0.0:
            warnings.warn(f"degenerate column {j}: score set to 0", stacklevel=2)
            scores[j] = 0.0
            continue
        try:
            scores[j] = estimate(col)
        except ValueError as e:
            raise ValueError(f"column {j}: {e}") from e
    return CorrelationScores(scores=scores, metric=metric)


def select_effective(scores: CorrelationScores, m: int) -> EffectiveSplit:
    """Pick the ``m`` highest-scoring coordinates (ties: lowest index wins)."""
    n = scores.dim
    if not 1 <= m <= n:
        raise ValueError(f"m must be in [1, {n}], got {m}")
    order = np.argsort(-scores.scores, kind="stable")
    effective = np.sort(order[:m])
    ineffective = np.sort(order[m:])
    return EffectiveSplit(effective=effective, ineffective=ineffective)
