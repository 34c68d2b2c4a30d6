"""End-to-end acceptance suite.

Each test prints one pass/fail line (run with ``pytest -s`` to see them all)
and asserts the same condition, so the suite doubles as a checklist.
"""

import math

import numpy as np
import pytest

from drps import (
    Algorithm,
    AlgorithmConfig,
    ExperimentConfig,
    GaussianDist,
    Metric,
    SampleBatch,
    compute_weights,
    creps_update,
    dr_creps_update,
    dr_reps_update,
    entropy,
    initial_state,
    kl_divergence,
    lqr_make,
    lqr_optimal_gain,
    lqr_optimal_return,
    mi_knn_regression,
    mi_ksg,
    project_samples,
    reps_dual_minimize,
    reps_update,
    run_experiment,
    run_precision_recall_study,
    sample,
)
from drps.lqr import LqrEnv


def report(name, passed, detail):
    print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    assert passed, f"{name}: {detail}"


def random_pd(rng, n):
    m = rng.standard_normal((n, n))
    return m @ m.T / n + 0.5 * np.eye(n)


def lqr_experiment(algorithm, metric, episodes_per_fit, n_epochs, n_seeds,
                   eps=4.7, kappa=17.0, m=50, lam=0.1):
    return ExperimentConfig(
        environment={"kind": "lqr", "dim": 10, "n_ineffective": 7, "env_seed": 0},
        algorithm=AlgorithmConfig(algorithm=algorithm, eps=eps, kappa=kappa, m=m,
                                  lam=lam, metric=metric),
        episodes_per_fit=episodes_per_fit,
        n_epochs=n_epochs,
        n_seeds=n_seeds,
    )


def mean_curve(result, n_seeds, n_epochs):
    curve = np.full((n_seeds, n_epochs + 1), np.nan)
    for rec in result.records:
        curve[rec.seed, rec.epoch] = rec.mean_return
    return curve


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_criterion_1_constraint_suite():
    """200 constrained updates on random batches keep both bounds."""
    rng = np.random.default_rng(1000)
    worst_kl_gap = -math.inf
    worst_h_gap = -math.inf
    for trial in range(200):
        n, count = 10, 50
        prev = GaussianDist(rng.standard_normal(n), random_pd(rng, n))
        state = initial_state(prev)
        shift = rng.uniform(0.0, 2.0) * rng.standard_normal(n)
        thetas = sample(prev, trial, count) + shift
        returns = rng.standard_normal(count) * rng.uniform(0.5, 30.0)
        batch = SampleBatch(thetas=thetas, returns=returns)
        eps = float(rng.uniform(0.1, 5.0))
        kappa = float(rng.uniform(0.3, 20.0))
        if trial % 2 == 0:
            new = creps_update(state, batch, eps, kappa)
        else:
            config = AlgorithmConfig(algorithm=Algorithm.DR_CREPS, eps=eps, kappa=kappa,
                                     m=int(rng.integers(1, n + 1)),
                                     lam=float(rng.uniform(0.1, 1.0)), metric=Metric.PCC)
            new = dr_creps_update(state, batch, config, seed=trial)
        worst_kl_gap = max(worst_kl_gap, kl_divergence(prev, new.dist) - eps)
        worst_h_gap = max(worst_h_gap, entropy(prev) - entropy(new.dist) - kappa)
    ok = worst_kl_gap <= 1e-4 and worst_h_gap <= 1e-4
    report("criterion 1 (constraint suite)", ok,
           f"worst KL overshoot {worst_kl_gap:.2e}, worst entropy overshoot {worst_h_gap:.2e}")


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_criterion_2_reduction_equivalence():
    """Full-selection reduced updates match the direct updates per entry."""
    env = lqr_make(10, 7, seed=0)
    n = env.param_count
    from drps import evaluate_batch

    def run_pair(constrained):
        # The unconstrained pair gets a larger batch: the plain fit has no
        # multiplier to regularize it, so the weighted scatter needs spare
        # rank to stay comfortably positive definite for twenty epochs.
        count = 150 if constrained else 400
        worst = 0.0
        for seed in range(5):
            dist = GaussianDist(np.zeros(n), 0.09 * np.eye(n))
            state = initial_state(dist)
            for epoch in range(20):
                thetas = sample(state.sampling_dist, 10_000 + 100 * seed + epoch, count)
                batch = SampleBatch(thetas=thetas,
                                    returns=evaluate_batch(env, thetas, 0))
                if constrained:
                    config = AlgorithmConfig(algorithm=Algorithm.DR_CREPS, eps=4.7,
                                             kappa=17.0, m=n, lam=1.0, metric=Metric.PCC)
                    reduced = dr_creps_update(state, batch, config, seed=epoch)
                    direct = creps_update(state, batch, 4.7, 17.0)
                else:
                    config = AlgorithmConfig(algorithm=Algorithm.DR_REPS, eps=0.4,
                                             kappa=17.0, m=n, lam=1.0, metric=Metric.PCC)
                    reduced = dr_reps_update(state, batch, config, seed=epoch)
                    direct = reps_update(state, batch, 0.4)
                np.linalg.cholesky(direct.dist.cov)
                worst = max(worst,
                            np.abs(reduced.dist.mean - direct.dist.mean).max(),
                            np.abs(reduced.dist.cov - direct.dist.cov).max())
                state = direct
        return worst

    worst_c = run_pair(constrained=True)
    worst_u = run_pair(constrained=False)
    ok = worst_c < 1e-6 and worst_u < 1e-6
    report("criterion 2 (reduction equivalence)", ok,
           f"constrained max dev {worst_c:.2e}, unconstrained max dev {worst_u:.2e}")


def test_criterion_3_dual_temperature():
    """Weight KL from uniform equals the bound at the dual optimum."""

    def weight_kl(d):
        p = d / d.sum()
        p = p[p > 0.0]
        return float(np.sum(p * np.log(p * d.size)))

    def oracle(returns, eps):
        shifted = returns - returns.max()
        lo, hi = 1e-8, 1e8
        for _ in range(200):
            mid = math.sqrt(lo * hi)
            if weight_kl(np.exp(shifted / mid)) > eps:
                lo = mid
            else:
                hi = mid
        return math.sqrt(lo * hi)

    rng = np.random.default_rng(3000)
    worst_kl = 0.0
    worst_eta = 0.0
    for _ in range(100):
        returns = rng.standard_normal(50) * rng.uniform(0.2, 25.0) + rng.uniform(-5, 5)
        eps = float(rng.uniform(0.05, 2.5))
        sol = reps_dual_minimize(returns, eps)
        kl = weight_kl(compute_weights(returns, sol.eta_star).d)
        worst_kl = max(worst_kl, abs(kl - eps))
        worst_eta = max(worst_eta, abs(sol.eta_star - oracle(returns, eps)) / sol.eta_star)
    ok = worst_kl <= 1e-3 and worst_eta <= 1e-3
    report("criterion 3 (dual temperature)", ok,
           f"worst |weight KL - eps| {worst_kl:.2e}, worst eta mismatch {worst_eta:.2e}")


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_criterion_4_pe_variance_contract():
    """Exploration scaling shows up in sampled variances, never in the target."""
    n = 20
    rng = np.random.default_rng(4000)
    dist = GaussianDist(np.zeros(n), 0.09 * np.eye(n))
    state = initial_state(dist)
    thetas = sample(dist, 41, 100)
    returns = -np.sum((thetas - 0.5) ** 2, axis=1)
    batch = SampleBatch(thetas=thetas, returns=returns)
    config = AlgorithmConfig(algorithm=Algorithm.DR_CREPS, eps=2.0, kappa=6.0,
                             m=5, lam=0.1, metric=Metric.PCC)
    low = dr_creps_update(state, batch, config, seed=7)
    ref = dr_creps_update(state, batch,
                          AlgorithmConfig(algorithm=Algorithm.DR_CREPS, eps=2.0,
                                          kappa=6.0, m=5, lam=1.0, metric=Metric.PCC),
                          seed=7)
    bit_identical = (low.dist.mean.tobytes() == ref.dist.mean.tobytes()
                     and low.dist.cov.tobytes() == ref.dist.cov.tobytes())

    draws = sample(low.sampling_dist, 42, 10_000)
    rot = project_samples(low.frame, low.sampling_dist.mean, draws)
    worst_ratio_err = 0.0
    for axis in low.split.ineffective:
        u = low.frame.u[:, axis]
        target_var = float(u @ low.dist.cov @ u)
        ratio = rot[:, axis].var() / (0.1 * target_var)
        worst_ratio_err = max(worst_ratio_err, abs(ratio - 1.0))
    ok = bit_identical and worst_ratio_err <= 0.2
    report("criterion 4 (exploration-scaling contract)", ok,
           f"target bit-identical={bit_identical}, worst variance-ratio error "
           f"{worst_ratio_err:.3f}")


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_criterion_5_lqr_optimality_gap():
    """Reduced search reaches 5% of the oracle within 5000 episodes and
    dominates the full-space baseline at matched episode budgets."""
    env = lqr_make(10, 7, seed=0)
    oracle = lqr_optimal_return(env)
    bar = 1.05 * oracle
    n_seeds = 10

    dr_result = run_experiment(lqr_experiment(
        "dr-creps", "pcc", episodes_per_fit=50, n_epochs=100, n_seeds=n_seeds))
    cr_result = run_experiment(lqr_experiment(
        "creps", "pcc", episodes_per_fit=150, n_epochs=33, n_seeds=n_seeds,
        m=1, lam=1.0))
    dr = mean_curve(dr_result, n_seeds, 100)
    cr = mean_curve(cr_result, n_seeds, 33)
    dr_mean = np.nanmean(dr, axis=0)
    cr_mean = np.nanmean(cr, axis=0)

    first_pass = next((k for k in range(1, 101) if dr_mean[k] >= bar), None)
    within_budget = first_pass is not None and first_pass * 50 <= 5000

    dominated = True
    for k in range(1, 34):
        di = 3 * k
        pooled_se = math.sqrt(np.nanvar(dr[:, di], ddof=1) / n_seeds
                              + np.nanvar(cr[:, k], ddof=1) / n_seeds)
        if dr_mean[di] < cr_mean[k] - pooled_se:
            dominated = False
            break

    no_failures = not dr_result.failures and not cr_result.failures
    ok = within_budget and dominated and no_failures
    report("criterion 5 (optimality gap and sample efficiency)", ok,
           f"oracle {oracle:.3f}, bar {bar:.3f}, first pass at "
           f"{None if first_pass is None else first_pass * 50} episodes, "
           f"matched-budget dominance={dominated}, failures={len(dr_result.failures)}"
           f"+{len(cr_result.failures)}")


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_criterion_6_parameter_identification():
    """Top-10 selections recover the planted gain entries well above chance,
    with the mutual-information selector close behind the correlation one."""
    config = ExperimentConfig(
        environment={"kind": "lqr", "dim": 10, "n_ineffective": 7, "env_seed": 0},
        algorithm=AlgorithmConfig(algorithm="dr-creps", eps=4.5, kappa=15.0, m=10,
                                  lam=0.1, metric="pcc"),
        episodes_per_fit=50,
        n_epochs=10,
        n_seeds=10,
    )
    result = run_precision_recall_study(
        config, m_values=(10,), metrics=["pcc", "mi-knn-regression"])
    recalls = {}
    for metric in ("pcc", "mi-knn-regression"):
        values = [r.recall for r in result.records if r.metric == metric]
        recalls[metric] = float(np.mean(values))
    pcc_recall = recalls["pcc"]
    mi_recall = recalls["mi-knn-regression"]
    gap = abs(pcc_recall - mi_recall)
    ok = pcc_recall >= 3 * 0.1 and gap <= 0.15 and not result.failures
    report("criterion 6 (parameter identification)", ok,
           f"study-mean recall: pcc {pcc_recall:.3f} (chance 0.1), "
           f"mi {mi_recall:.3f}, gap {gap:.3f}")


def test_criterion_7_mi_benchmark():
    """Neighbor-based estimators hit the analytic value; the histogram
    needs far more samples."""
    analytic = 0.5 * math.log(2.0)
    ksg_hits = 0
    knn_hits = 0
    for seed in range(20):
        rng = np.random.default_rng(7000 + seed)
        xs = rng.standard_normal(1000)
        ys = xs + rng.standard_normal(1000)
        if abs(mi_ksg(xs, ys, k=4) - analytic) <= 0.1:
            ksg_hits += 1
        if abs(mi_knn_regression(xs, ys, k=4) - analytic) <= 0.1:
            knn_hits += 1

    from drps import run_mi_benchmark
    records = run_mi_benchmark(seeds=range(20), sample_counts=[100])
    hist_err = float(np.mean([r.abs_error for r in records
                              if r.estimator == "histogram"]))
    ksg_err = float(np.mean([r.abs_error for r in records if r.estimator == "ksg"]))
    hist_worse = hist_err > ksg_err
    ok = ksg_hits >= 18 and knn_hits >= 18 and hist_worse
    report("criterion 7 (mutual-information benchmark)", ok,
           f"ksg {ksg_hits}/20, knn-regression {knn_hits}/20 within 0.1 nats; "
           f"benchmark at N=100: histogram mean error {hist_err:.3f} vs "
           f"ksg {ksg_err:.3f}")


def test_criterion_8_riccati_oracle():
    """Scalar fixed point and vanishing gains on planted dimensions."""
    scalar = LqrEnv(a_mat=np.eye(1), b_mat=np.eye(1), q_mat=np.eye(1), r_mat=np.eye(1),
                    horizon=50, discount=1.0, clip=1e9, ineffective_dims=(),
                    init_state=np.ones(1))
    k_scalar = lqr_optimal_gain(scalar).gain[0, 0]
    scalar_ok = abs(k_scalar - 0.61803) <= 1e-5 + 5e-6

    env = lqr_make(10, 7, seed=0)
    gain = lqr_optimal_gain(env).gain
    planted_ok = all(abs(gain[j, j]) < 1e-6 for j in env.ineffective_dims)
    ok = scalar_ok and planted_ok
    report("criterion 8 (Riccati oracle)", ok,
           f"scalar gain {k_scalar:.6f} (target 0.618034), planted gains "
           f"max {max(abs(gain[j, j]) for j in env.ineffective_dims):.2e}")


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_criterion_9_random_selector_ablation():
    """Correlation-guided selection beats the random selector baseline."""
    n_seeds = 10
    n_epochs = 15
    pcc_result = run_experiment(lqr_experiment(
        "dr-creps", "pcc", episodes_per_fit=50, n_epochs=n_epochs, n_seeds=n_seeds))
    rnd_result = run_experiment(lqr_experiment(
        "dr-creps", "random", episodes_per_fit=50, n_epochs=n_epochs, n_seeds=n_seeds))
    pcc_final = float(np.mean([r.mean_return for r in pcc_result.records
                               if r.epoch == n_epochs]))
    rnd_final = float(np.mean([r.mean_return for r in rnd_result.records
                               if r.epoch == n_epochs]))
    ok = pcc_final >= rnd_final
    report("criterion 9 (random-selector ablation)", ok,
           f"final mean return: pcc {pcc_final:.3f} vs random {rnd_final:.3f}")
