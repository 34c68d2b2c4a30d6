"""Gaussian search-distribution algebra.

Sampling, KL divergence and entropy, SVD rotation into a decorrelated
frame, block substitution, and weighted maximum-likelihood fits with and
without KL/entropy constraints.  All values are immutable after
construction; every operation is a pure function of its arguments plus an
explicit integer seed where randomness is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import brentq

from .errors import ConstrainedUpdateError, DegenerateDistributionError, IndefiniteUpdateError

_LOG_2PI = math.log(2.0 * math.pi)

# Absolute tolerance for declaring a covariance symmetric.
SYMMETRY_ATOL = 1e-9
# Per-entry tolerance for orthogonality of a rotation matrix.
ORTHOGONALITY_ATOL = 1e-8


def _as_vector(x, name="vector"):
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {v.shape}")
    return v


def _as_matrix(x, name="matrix"):
    m = np.asarray(x, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {m.shape}")
    return m


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def symmetrize(mat):
    """Average a matrix with its transpose to wash out floating-point drift."""
    mat = _as_matrix(mat)
    return 0.5 * (mat + mat.T)


def _cholesky_or_raise(cov, exc=DegenerateDistributionError, context="covariance"):
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as e:
        raise exc(f"{context} is not positive definite") from e


@dataclass(frozen=True)
class GaussianDist:
    """Multivariate normal over policy parameters.

    The covariance must be symmetric (within ``SYMMETRY_ATOL``) and positive
    definite; violation raises :class:`DegenerateDistributionError` at
    construction.  The Cholesky factor is computed once and reused.
    """

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = _as_vector(self.mean, "mean")
        cov = _as_matrix(self.cov, "cov")
        if cov.shape[0] != cov.shape[1]:
            raise ValueError(f"cov must be square, got shape {cov.shape}")
        if mean.shape[0] != cov.shape[0]:
            raise ValueError(
                f"mean length {mean.shape[0]} does not match cov dimension {cov.shape[0]}"
            )
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
            raise ValueError("mean and cov must be finite")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=SYMMETRY_ATOL):
            raise ValueError("cov is not symmetric")
        chol = _cholesky_or_raise(cov)
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))
        object.__setattr__(self, "chol", _frozen(chol))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def log_det_cov(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diagonal(self.chol))))


@dataclass(frozen=True)
class RotatedFrame:
    """SVD factors of a covariance: orthogonal axes ``u`` and variances ``s``.

    ``mean_rot`` is the zero mean of the decorrelated distribution in this
    frame at construction time.
    """

    u: np.ndarray
    s: np.ndarray
    mean_rot: np.ndarray

    def __post_init__(self):
        u = _as_matrix(self.u, "u")
        s = _as_vector(self.s, "s")
        mean_rot = _as_vector(self.mean_rot, "mean_rot")
        n = u.shape[0]
        if u.shape != (n, n) or s.shape != (n,) or mean_rot.shape != (n,):
            raise ValueError("u, s, mean_rot dimensions are inconsistent")
        if not np.allclose(u.T @ u, np.eye(n), rtol=0.0, atol=ORTHOGONALITY_ATOL):
            raise ValueError("u is not orthogonal")
        if np.any(s <= 0.0):
            raise DegenerateDistributionError("singular values must be strictly positive")
        if np.any(np.diff(s) > 0.0):
            raise ValueError("singular values must be sorted in descending order")
        object.__setattr__(self, "u", _frozen(u))
        object.__setattr__(self, "s", _frozen(s))
        object.__setattr__(self, "mean_rot", _frozen(mean_rot))

    @property
    def dim(self) -> int:
        return self.s.shape[0]


@dataclass(frozen=True)
class SampleBatch:
    """A batch of sampled parameter vectors with their episodic returns."""

    thetas: np.ndarray
    returns: np.ndarray

    def __post_init__(self):
        thetas = _as_matrix(self.thetas, "thetas")
        returns = _as_vector(self.returns, "returns")
        if thetas.shape[0] != returns.shape[0]:
            raise ValueError(
                f"{thetas.shape[0]} parameter rows but {returns.shape[0]} returns"
            )
        if not np.all(np.isfinite(thetas)) or not np.all(np.isfinite(returns)):
            raise ValueError("sample batch entries must be finite")
        object.__setattr__(self, "thetas", _frozen(thetas))
        object.__setattr__(self, "returns", _frozen(returns))

    @property
    def size(self) -> int:
        return self.returns.shape[0]


@dataclass(frozen=True)
class WeightVector:
    """Per-sample weights, exp-shifted so the best sample has weight one."""

    d: np.ndarray

    def __post_init__(self):
        d = _as_vector(self.d, "d")
        if d.size == 0:
            raise ValueError("weight vector is empty")
        if np.any(d < 0.0) or np.any(d > 1.0 + 1e-12):
            raise ValueError("weights must lie in [0, 1]")
        if not math.isclose(float(d.max()), 1.0, rel_tol=0.0, abs_tol=1e-12):
            raise ValueError("maximum weight must equal 1")
        object.__setattr__(self, "d", _frozen(d))


def _weights_array(weights):
    d = np.asarray(getattr(weights, "d", weights), dtype=float)
    return _as_vector(d, "weights")


def sample(dist: GaussianDist, seed: int, count: int) -> np.ndarray:
    """Draw ``count`` i.i.d. parameter vectors from ``dist``, one per row."""
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, dist.dim))
    return dist.mean + z @ dist.chol.T


def kl_divergence(p: GaussianDist, q: GaussianDist) -> float:
    """KL(p || q) between Gaussians, in nats."""
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    lq = q.chol
    # tr(Sigma_q^{-1} Sigma_p) = ||L_q^{-1} L_p||_F^2
    half = solve_triangular(lq, p.chol, lower=True)
    trace = float(np.sum(half * half))
    diff = solve_triangular(lq, q.mean - p.mean, lower=True)
    maha = float(diff @ diff)
    kl = 0.5 * (trace + maha - p.dim + q.log_det_cov() - p.log_det_cov())
    return max(kl, 0.0)


def entropy(dist: GaussianDist) -> float:
    """Differential entropy 0.5 * ln((2*pi*e)^n det cov), in nats."""
    n = dist.dim
    return 0.5 * n * (_LOG_2PI + 1.0) + 0.5 * dist.log_det_cov()


def svd_rotate(dist: GaussianDist) -> RotatedFrame:
    """Decompose the covariance into orthogonal axes and descending variances.

    Column signs are fixed so the largest-magnitude entry of each axis is
    positive, making the frame reproducible across linear-algebra backends.
    """
    u, s, _ = np.linalg.svd(dist.cov, hermitian=True)
    flip = u[np.abs(u).argmax(axis=0), np.arange(u.shape[1])] < 0.0
    u = np.where(flip, -u, u)
    if np.any(s <= 0.0):
        raise DegenerateDistributionError("covariance has a non-positive singular value")
    return RotatedFrame(u=u, s=s, mean_rot=np.zeros(dist.dim))


def project_samples(frame: RotatedFrame, mean, thetas) -> np.ndarray:
    """Map parameter rows into the rotated frame: row i -> u^T (theta_i - mean)."""
    mean = _as_vector(mean, "mean")
    thetas = _as_matrix(thetas, "thetas")
    if mean.shape[0] != frame.dim or thetas.shape[1] != frame.dim:
        raise ValueError("dimension mismatch between frame, mean, and thetas")
    return (thetas - mean) @ frame.u


def back_project(prev_mean, frame: RotatedFrame, mean_rot, s_mat) -> GaussianDist:
    """Rotate an updated (mean, covariance) pair back to the original space.

    ``s_mat`` may be a full symmetric matrix (the effective block of an
    update is not diagonal in general).  A non-positive-definite ``s_mat``
    raises :class:`IndefiniteUpdateError`.
    """
    prev_mean = _as_vector(prev_mean, "prev_mean")
    mean_rot = _as_vector(mean_rot, "mean_rot")
    s_mat = symmetrize(_as_matrix(s_mat, "s_mat"))
    n = frame.dim
    if prev_mean.shape[0] != n or mean_rot.shape[0] != n or s_mat.shape != (n, n):
        raise ValueError("dimension mismatch in back projection")
    _cholesky_or_raise(s_mat, IndefiniteUpdateError, "update produced a covariance that")
    mean = prev_mean + frame.u @ mean_rot
    cov = symmetrize(frame.u @ s_mat @ frame.u.T)
    try:
        return GaussianDist(mean=mean, cov=cov)
    except DegenerateDistributionError as e:
        raise IndefiniteUpdateError("update produced indefinite covariance") from e


def _check_indices(indices, n):
    idx = np.asarray(indices, dtype=int)
    if idx.ndim != 1:
        raise ValueError("indices must be one-dimensional")
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"indices out of range for dimension {n}")
    if np.any(np.diff(idx) <= 0):
        raise ValueError("indices must be strictly increasing (no duplicates)")
    return idx


def subst(base, block, indices):
    """Place ``block`` at ``indices`` of ``base``, leaving the rest unchanged.

    For matrices only the ``indices x indices`` sub-block is replaced; cross
    terms between a replaced index and an untouched one are preserved.
    """
    base = np.asarray(base, dtype=float)
    block = np.asarray(block, dtype=float)
    out = base.copy()
    if base.ndim == 1:
        idx = _check_indices(indices, base.shape[0])
        if block.shape != (idx.size,):
            raise ValueError(f"block shape {block.shape} does not match {idx.size} indices")
        out[idx] = block
    elif base.ndim == 2:
        idx = _check_indices(indices, base.shape[0])
        if block.shape != (idx.size, idx.size):
            raise ValueError(f"block shape {block.shape} does not match {idx.size} indices")
        out[np.ix_(idx, idx)] = block
    else:
        raise ValueError("base must be a vector or a matrix")
    return out


def extract(base, indices):
    """Inverse companion of :func:`subst`: read the block at ``indices``."""
    base = np.asarray(base, dtype=float)
    idx = _check_indices(indices, base.shape[0])
    if base.ndim == 1:
        return base[idx].copy()
    if base.ndim == 2:
        return base[np.ix_(idx, idx)].copy()
    raise ValueError("base must be a vector or a matrix")


def wmle_fit(thetas, weights) -> GaussianDist:
    """Weighted maximum-likelihood Gaussian fit.

    The covariance normalizer is the weight sum (biased MLE form, no
    Bessel-style correction); weights are therefore ratio-invariant.
    """
    thetas = _as_matrix(thetas, "thetas")
    d = _weights_array(weights)
    if thetas.shape[0] != d.shape[0]:
        raise ValueError("one weight per sample row is required")
    if thetas.shape[0] < 2:
        raise ValueError("at least two samples are required")
    z = float(d.sum())
    if not z > 0.0:
        raise ValueError("weights must have a positive sum")
    mean = (d @ thetas) / z
    diff = thetas - mean
    cov = symmetrize((d[:, None] * diff).T @ diff / z)
    try:
        return GaussianDist(mean=mean, cov=cov)
    except DegenerateDistributionError as e:
        raise DegenerateDistributionError(
            "weighted scatter is rank deficient (degenerate distribution)"
        ) from e


class _ConstrainedSolver:
    """Closed-form Gaussian M-step interpolating toward the previous
    distribution, with multipliers chosen to honor a KL bound and an
    entropy-decrease bound.

    For a KL multiplier ``eta`` the stationary mean is
    ``(sum_i d_i theta_i + eta * mu_prev) / (sum_i d_i + eta)`` and the
    covariance is the weighted scatter blended with ``eta * cov_prev`` plus a
    mean-shift outer product, divided by ``sum_i d_i + eta - omega``.  Given
    ``eta``, the entropy multiplier ``omega`` only rescales the covariance,
    so the entropy condition pins it in closed form; the KL condition is a
    one-dimensional root-find in ``eta``.
    """

    def __init__(self, prev: GaussianDist, thetas, d, eps, kappa):
        self.prev = prev
        self.n = prev.dim
        # Weights normalized to sum one; the optimal multipliers rescale with
        # the weight sum, so the fit itself is unchanged.
        self.d = d / d.sum()
        self.thetas = thetas
        self.eps = eps
        self.kappa = kappa
        self.mu_w = self.d @ thetas
        diff = thetas - self.mu_w
        self.scatter = symmetrize((self.d[:, None] * diff).T @ diff)
        self.h_prev = entropy(prev)

    def candidate(self, eta):
        """Mean, covariance, and multipliers for a KL multiplier ``eta``.

        Returns None when the numerator matrix is not positive definite
        (possible only at eta == 0 with a rank-deficient scatter).
        """
        prev = self.prev
        mu = (self.mu_w + eta * prev.mean) / (1.0 + eta)
        shift = self.mu_w - mu
        delta = mu - prev.mean
        num = self.scatter + np.outer(shift, shift) + eta * (prev.cov + np.outer(delta, delta))
        num = symmetrize(num)
        try:
            l_num = np.linalg.cholesky(num)
        except np.linalg.LinAlgError:
            return None
        log_det_num = 2.0 * float(np.sum(np.log(np.diagonal(l_num))))
        # Entropy constraint: with cov = num / t, H(q) = const + 0.5*log_det_num
        # - 0.5*n*log(t); the bound caps log(t).
        log_t_max = (2.0 / self.n) * (
            self.kappa - self.h_prev + 0.5 * self.n * (_LOG_2PI + 1.0) + 0.5 * log_det_num
        )
        log_t_free = math.log(1.0 + eta)
        log_t = min(log_t_free, log_t_max)
        t = math.exp(log_t)
        omega = (1.0 + eta) - t
        cov = num / t
        # KL(prev || q) via the Cholesky factor of the numerator.
        half = solve_triangular(l_num, self.prev.chol, lower=True)
        trace = t * float(np.sum(half * half))
        w = solve_triangular(l_num, delta, lower=True)
        maha = t * float(w @ w)
        log_det_q = log_det_num - self.n * log_t
        kl = 0.5 * (trace + maha - self.n + log_det_q - self.prev.log_det_cov())
        h_q = 0.5 * self.n * (_LOG_2PI + 1.0) + 0.5 * log_det_q
        return mu, cov, max(kl, 0.0), self.h_prev - h_q, omega

    def solve(self):
        cand0 = self.candidate(0.0)
        if cand0 is not None and cand0[2] <= self.eps:
            return self._finish(0.0, cand0)

        def kl_residual(log_eta):
            cand = self.candidate(math.exp(log_eta))
            if cand is None:
                return math.inf
            return cand[2] - self.eps

        lo, hi = math.log(1e-12), math.log(1e14)
        f_lo = kl_residual(lo)
        if not math.isfinite(f_lo) or f_lo > 0.0:
            f_hi = kl_residual(hi)
            if f_hi > 0.0:
                raise ConstrainedUpdateError(
                    "constrained update failed: KL bound unreachable", kl=f_hi + self.eps
                )
            log_eta = brentq(kl_residual, lo, hi, xtol=1e-13, rtol=8.9e-16, maxiter=200)
        else:
            # The KL bound already holds at a negligible multiplier.
            log_eta = lo
        eta = math.exp(log_eta)
        cand = self.candidate(eta)
        # Land on the feasible side of the root.
        for _ in range(64):
            if cand is not None and cand[2] <= self.eps + 1e-9:
                break
            eta *= 1.0 + 1e-9
            cand = self.candidate(eta)
        if cand is None:
            raise ConstrainedUpdateError("constrained update failed: no valid fit", eta=eta)
        return self._finish(eta, cand)

    def _finish(self, eta, cand):
        mu, cov, kl, drop, omega = cand
        if kl > self.eps + 1e-6 or drop > self.kappa + 1e-6:
            raise ConstrainedUpdateError(
                "constrained update failed to satisfy its bounds",
                eta=eta,
                omega=omega,
                kl=kl,
                entropy_drop=drop,
            )
        try:
            return GaussianDist(mean=mu, cov=symmetrize(cov))
        except DegenerateDistributionError as e:
            raise ConstrainedUpdateError(
                "constrained update produced an indefinite covariance",
                eta=eta,
                omega=omega,
                kl=kl,
                entropy_drop=drop,
            ) from e


def constrained_wmle(prev: GaussianDist, thetas, weights, eps: float, kappa: float) -> GaussianDist:
    """Weighted MLE fit constrained by KL(prev || new) <= eps and
    entropy(prev) - entropy(new) <= kappa.

    When both constraints are slack this reduces to :func:`wmle_fit`.
    Raises :class:`ConstrainedUpdateError` with diagnostics when no
    feasible fit is found.
    """
    if eps <= 0.0 or kappa <= 0.0:
        raise ValueError("eps and kappa must be positive")
    thetas = _as_matrix(thetas, "thetas")
    d = _weights_array(weights)
    if thetas.shape[0] != d.shape[0]:
        raise ValueError("one weight per sample row is required")
    if thetas.shape[1] != prev.dim:
        raise ValueError("sample dimension does not match the previous distribution")
    if not float(d.sum()) > 0.0:
        raise ValueError("weights must have a positive sum")

    # Unconstrained shortcut: if the plain fit is feasible it is the answer.
    try:
        unconstrained = wmle_fit(thetas, d)
    except (DegenerateDistributionError, ValueError):
        unconstrained = None
    if unconstrained is not None:
        kl = kl_divergence(prev, unconstrained)
        drop = entropy(prev) - entropy(unconstrained)
        if kl <= eps and drop <= kappa:
            return unconstrained

    return _ConstrainedSolver(prev, thetas, d, eps, kappa).solve()
