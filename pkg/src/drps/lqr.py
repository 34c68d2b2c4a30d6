"""Linear-quadratic regulator with planted ineffective dimensions.

The system is diagonal with saturated states and actions; a chosen subset
of dimensions has its state cost and control authority set to 1e-20 so the
corresponding controller gains do not matter.  A fixed-point iteration of
the discounted Riccati recursion provides the optimal gain as ground truth
for convergence and parameter-identification studies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

INEFFECTIVE_VALUE = 1e-20
RICCATI_TOL = 1e-10
RICCATI_MAX_ITERS = 100_000


@dataclass(frozen=True)
class EpisodeResult:
    discounted_return: float
    steps: int
    terminated_early: bool


@dataclass(frozen=True)
class LqrEnv:
    """Diagonal LQR with state/action saturation.

    Dynamics x' = A x + B u with reward -(x^T Q x + u^T R u); every visited
    state and action entry is clipped to [-clip, clip].
    """

    a_mat: np.ndarray
    b_mat: np.ndarray
    q_mat: np.ndarray
    r_mat: np.ndarray
    horizon: int
    discount: float
    clip: float
    ineffective_dims: tuple
    init_state: np.ndarray

    def __post_init__(self):
        for name in ("a_mat", "b_mat", "q_mat", "r_mat"):
            m = np.asarray(getattr(self, name), dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError(f"{name} must be square")
            if not np.allclose(m, np.diag(np.diagonal(m))):
                raise ValueError(f"{name} must be diagonal")
            m = m.copy()
            m.flags.writeable = False
            object.__setattr__(self, name, m)
        if np.any(np.diagonal(self.q_mat) < 0.0):
            raise ValueError("state costs must be nonnegative")
        if np.any(np.diagonal(self.r_mat) <= 0.0):
            raise ValueError("action costs must be positive")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")
        if self.clip <= 0.0:
            raise ValueError("clip bound must be positive")
        init = np.asarray(self.init_state, dtype=float).copy()
        if init.shape != (self.dim,):
            raise ValueError("init_state length must match the dimension")
        init.flags.writeable = False
        object.__setattr__(self, "init_state", init)
        object.__setattr__(self, "ineffective_dims", tuple(sorted(self.ineffective_dims)))

    @property
    def dim(self) -> int:
        return self.a_mat.shape[0]

    @property
    def param_count(self) -> int:
        return self.dim * self.dim


@dataclass(frozen=True)
class LinearGainPolicy:
    """Stationary feedback u = -gain @ x."""

    gain: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gain, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError("gain must be a square matrix")
        g = g.copy()
        g.flags.writeable = False
        object.__setattr__(self, "gain", g)

    @property
    def dim(self) -> int:
        return self.gain.shape[0]


def policy_to_params(policy: LinearGainPolicy) -> np.ndarray:
    """Flatten u = -K x to a parameter vector (row-major, sign absorbed).

    Storing -K means the all-zero parameter vector is the null controller,
    matching a zero-mean initial search distribution.
    """
    return (-policy.gain).ravel().copy()


def params_to_policy(theta) -> LinearGainPolicy:
    theta = np.asarray(theta, dtype=float).ravel()
    n = int(round(theta.size ** 0.5))
    if n * n != theta.size:
        raise ValueError(f"parameter count {theta.size} is not a perfect square")
    return LinearGainPolicy(gain=-theta.reshape(n, n))


def lqr_make(dim: int, n_ineffective: int, seed: int, *, horizon: int = 50,
             discount: float = 0.9, clip: float = 1.0) -> LqrEnv:
    """Identity-matrix LQR with ``n_ineffective`` seeded planted dimensions.

    The planted dimensions get both their state cost and control authority
    set to 1e-20, at the same seeded positions on the Q and B diagonals.
    Their initial-state components are zero: a planted dimension carries no
    state, so its gain column is genuinely inert and the non-zero optimal
    gain entries remain the only parameters that influence the return.
    """
    if dim < 1:
        raise ValueError("dim must be positive")
    if not 0 <= n_ineffective < dim:
        raise ValueError("n_ineffective must be smaller than dim")
    rng = np.random.default_rng(seed)
    planted = np.sort(rng.choice(dim, size=n_ineffective, replace=False))
    q = np.eye(dim)
    b = np.eye(dim)
    init = clip * np.ones(dim)
    for j in planted:
        q[j, j] = INEFFECTIVE_VALUE
        b[j, j] = INEFFECTIVE_VALUE
        init[j] = 0.0
    return LqrEnv(
        a_mat=np.eye(dim),
        b_mat=b,
        q_mat=q,
        r_mat=np.eye(dim),
        horizon=horizon,
        discount=discount,
        clip=clip,
        ineffective_dims=tuple(int(j) for j in planted),
        init_state=init,
    )


def _rollout_gains(env: LqrEnv, gains: np.ndarray) -> np.ndarray:
    """Deterministic returns for a stack of gain matrices, shape (N, n, n)."""
    n_rows = gains.shape[0]
    a = np.diagonal(env.a_mat)
    b = np.diagonal(env.b_mat)
    q = np.diagonal(env.q_mat)
    r = np.diagonal(env.r_mat)
    bound = env.clip
    x = np.broadcast_to(env.init_state, (n_rows, env.dim)).copy()
    total = np.zeros(n_rows)
    gamma_t = 1.0
    for _ in range(env.horizon):
        u = np.clip(-np.einsum("rij,rj->ri", gains, x), -bound, bound)
        reward = -(x * x @ q + u * u @ r)
        total += gamma_t * reward
        x = np.clip(a * x + b * u, -bound, bound)
        gamma_t *= env.discount
    if not np.all(np.isfinite(total)):
        raise AssertionError("non-finite return under clipped dynamics")
    return total


def lqr_episode(env: LqrEnv, policy: LinearGainPolicy) -> EpisodeResult:
    """Roll the policy from the fixed initial state; fully deterministic."""
    if policy.dim != env.dim:
        raise ValueError("gain shape does not match the environment dimension")
    ret = _rollout_gains(env, policy.gain[None, :, :])[0]
    return EpisodeResult(discounted_return=float(ret), steps=env.horizon, terminated_early=False)


def lqr_optimal_gain(env: LqrEnv) -> LinearGainPolicy:
    """Optimal stationary gain from the discounted Riccati fixed point.

    The environment is diagonal, so the recursion decouples into per-axis
    scalar iterations; off-diagonal gain entries are exactly zero.
    """
    a = np.diagonal(env.a_mat)
    b = np.diagonal(env.b_mat)
    q = np.diagonal(env.q_mat)
    r = np.diagonal(env.r_mat)
    g = env.discount
    p = q.copy()
    for _ in range(RICCATI_MAX_ITERS):
        p_next = q + g * a * p * a - (g * a * p * b) ** 2 / (r + g * b * p * b)
        if np.max(np.abs(p_next - p)) < RICCATI_TOL:
            p = p_next
            break
        p = p_next
    else:
        raise RuntimeError("Riccati iteration did not converge")
    k = g * b * p * a / (r + g * b * p * b)
    return LinearGainPolicy(gain=np.diag(k))


def lqr_optimal_return(env: LqrEnv) -> float:
    """Simulated return of the Riccati gain from the fixed initial state."""
    return lqr_episode(env, lqr_optimal_gain(env)).discounted_return


def lqr_truth_indices(env: LqrEnv, threshold: float = 1e-6) -> np.ndarray:
    """Flattened parameter positions whose optimal gain is materially nonzero."""
    theta_star = policy_to_params(lqr_optimal_gain(env))
    return np.flatnonzero(np.abs(theta_star) > threshold)


def lqr_evaluate_params(env: LqrEnv, thetas) -> np.ndarray:
    """Vectorized returns for rows of flattened gain parameters."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if thetas.shape[1] != env.param_count:
        raise ValueError(
            f"expected {env.param_count} parameters per row, got {thetas.shape[1]}"
        )
    gains = -thetas.reshape(thetas.shape[0], env.dim, env.dim)
    return _rollout_gains(env, gains)
