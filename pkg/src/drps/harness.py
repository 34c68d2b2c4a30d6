"""Configuration-driven experiment harness.

Runs multi-seed policy-search experiments, the effective-parameter
precision/recall study, and the mutual-information estimator benchmark;
emits deterministic plot-ready CSV with t-distribution confidence
intervals and per-seed failure accounting.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats

from .correlation import GaussianLinearModel, Metric, analytic_gaussian_mi, mi_histogram, \
    mi_knn_regression, mi_ksg, score_parameters
from .envs import DEFAULT_SIGMA_INIT, environment_kind, evaluate_batch, make_environment
from .errors import ConstrainedUpdateError, DegenerateDistributionError
from .gaussian import GaussianDist, SampleBatch, entropy, kl_divergence, project_samples, \
    sample, svd_rotate
from .lqr import LqrEnv, lqr_truth_indices
from .updates import AlgorithmConfig, apply_update, check_batch_size, initial_state

# Stream tags for per-purpose seed derivation.
_STREAM_SAMPLE = 0
_STREAM_EPISODE = 1
_STREAM_UPDATE = 2
_STREAM_EVAL_SAMPLE = 3
_STREAM_EVAL_EPISODE = 4
_STREAM_MI_BENCH = 5


def derive_seed(*parts: int) -> int:
    """Deterministic, well-mixed seed from integer coordinates."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    environment: dict
    algorithm: AlgorithmConfig
    episodes_per_fit: int
    n_epochs: int
    n_seeds: int
    eval_episodes: int = 25
    sigma_init: Optional[float] = None
    base_seed: int = 0

    def __post_init__(self):
        if self.episodes_per_fit < 2:
            raise ValueError("episodes_per_fit must be at least 2")
        if self.n_epochs < 0:
            raise ValueError("n_epochs must be nonnegative")
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be positive")
        if self.eval_episodes < 1:
            raise ValueError("eval_episodes must be positive")
        if self.sigma_init is not None and self.sigma_init <= 0.0:
            raise ValueError("sigma_init must be positive")
        # Materialize once so a bad environment table fails early.
        env = make_environment(self.environment)
        check_batch_size(self.algorithm, self.episodes_per_fit, env.param_count)


@dataclass(frozen=True)
class LearningCurveRecord:
    seed: int
    epoch: int
    cumulative_episodes: int
    mean_return: float
    kl_step: float
    entropy: float
    selection_indices: Optional[tuple] = None


@dataclass(frozen=True)
class SeedFailure:
    seed: int
    epoch: int
    message: str


@dataclass(frozen=True)
class PrecisionRecallRecord:
    seed: int
    epoch: int
    m: int
    metric: str
    precision: float
    recall: float


@dataclass(frozen=True)
class MiBenchRecord:
    estimator: str
    sample_count: int
    seed: int
    estimate: float
    analytic_value: float
    abs_error: float


@dataclass
class RunResult:
    records: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def sorted_records(self):
        return sorted(self.records, key=lambda r: (r.seed, r.epoch))


def _initial_distribution(config: ExperimentConfig, env) -> GaussianDist:
    sigma = config.sigma_init
    if sigma is None:
        sigma = DEFAULT_SIGMA_INIT[environment_kind(env)]
    n = env.param_count
    return GaussianDist(mean=np.zeros(n), cov=sigma ** 2 * np.eye(n))


def _run_seed(config: ExperimentConfig, seed_idx: int):
    """Learning-curve records for one seed; self-contained and order-free."""
    env = make_environment(config.environment)
    state = initial_state(_initial_distribution(config, env))
    base = config.base_seed
    records = []

    def record_eval(epoch: int, kl_step: float, selection) -> None:
        thetas = sample(state.dist, derive_seed(base, seed_idx, epoch, _STREAM_EVAL_SAMPLE),
                        config.eval_episodes)
        returns = evaluate_batch(env, thetas,
                                 derive_seed(base, seed_idx, epoch, _STREAM_EVAL_EPISODE))
        records.append(LearningCurveRecord(
            seed=seed_idx,
            epoch=epoch,
            cumulative_episodes=epoch * config.episodes_per_fit,
            mean_return=float(returns.mean()),
            kl_step=float(kl_step),
            entropy=float(entropy(state.dist)),
            selection_indices=selection,
        ))

    record_eval(0, 0.0, None)
    for epoch in range(1, config.n_epochs + 1):
        thetas = sample(state.sampling_dist,
                        derive_seed(base, seed_idx, epoch, _STREAM_SAMPLE),
                        config.episodes_per_fit)
        returns = evaluate_batch(env, thetas,
                                 derive_seed(base, seed_idx, epoch, _STREAM_EPISODE))
        batch = SampleBatch(thetas=thetas, returns=returns)
        previous = state.dist
        try:
            state = apply_update(state, batch, config.algorithm,
                                 seed=derive_seed(base, seed_idx, epoch, _STREAM_UPDATE))
        except (DegenerateDistributionError, ConstrainedUpdateError) as e:
            return records, SeedFailure(seed=seed_idx, epoch=epoch, message=str(e))
        selection = None
        if state.split is not None:
            selection = tuple(int(i) for i in state.split.effective)
        record_eval(epoch, kl_divergence(previous, state.dist), selection)
    return records, None


def run_experiment(config: ExperimentConfig, workers: int = 1) -> RunResult:
    """Run every seed; failed seeds keep their records up to the failure."""
    result = RunResult()
    seeds = list(range(config.n_seeds))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_seed, [config] * len(seeds), seeds))
    else:
        outcomes = [_run_seed(config, s) for s in seeds]
    for records, failure in outcomes:
        result.records.extend(records)
        if failure is not None:
            result.failures.append(failure)
    result.records.sort(key=lambda r: (r.seed, r.epoch))
    result.failures.sort(key=lambda f: f.seed)
    return result


def precision_recall(selected, truth):
    """(precision, recall) of an index selection against ground truth."""
    selected = set(int(i) for i in selected)
    truth = set(int(i) for i in truth)
    if not selected or not truth:
        raise ValueError("selected and truth sets must be nonempty")
    hits = len(selected & truth)
    return hits / len(selected), hits / len(truth)


def pull_back_scores(frame, scores) -> np.ndarray:
    """Distribute rotated-axis scores over original coordinates by loading.

    Coordinate j receives sum_r u[j, r]^2 * score_r.  When the rotation is a
    signed permutation (near-diagonal covariance) this is exactly the
    permuted score vector; once axes mix it degrades gracefully instead of
    assigning whole axes to single coordinates.
    """
    scores = np.asarray(getattr(scores, "scores", scores), dtype=float)
    return (frame.u ** 2) @ scores


def select_original(frame, scores, m: int) -> np.ndarray:
    """Top-m original coordinates by pulled-back score (stable ties)."""
    pulled = pull_back_scores(frame, scores)
    order = np.argsort(-pulled, kind="stable")
    return np.sort(order[:m])


def run_precision_recall_study(config: ExperimentConfig, m_values=(10, 30, 50),
                               metrics=None) -> RunResult:
    """Per-epoch precision/recall of the selected parameters on the LQR.

    Ground truth is the near-zero-threshold support of the optimal gain in
    the original parameter space; per-epoch scores are computed in the
    rotated frame and pulled back through its squared loadings before the
    top-m cut.  When ``metrics`` lists several estimators they are scored on
    the same trajectory (driven by the configured algorithm), which isolates
    estimator quality from run-to-run variation.
    """
    env = make_environment(config.environment)
    if not isinstance(env, LqrEnv):
        raise ValueError("the precision/recall study requires an LQR environment")
    truth = lqr_truth_indices(env)
    metrics = [Metric(m) for m in (metrics or [config.algorithm.metric])]
    base = config.base_seed
    result = RunResult()

    for seed_idx in range(config.n_seeds):
        state = initial_state(_initial_distribution(config, env))
        for epoch in range(1, config.n_epochs + 1):
            thetas = sample(state.sampling_dist,
                            derive_seed(base, seed_idx, epoch, _STREAM_SAMPLE),
                            config.episodes_per_fit)
            returns = evaluate_batch(env, thetas,
                                     derive_seed(base, seed_idx, epoch, _STREAM_EPISODE))
            batch = SampleBatch(thetas=thetas, returns=returns)
            frame = svd_rotate(state.dist)
            rotated = project_samples(frame, state.dist.mean, batch.thetas)
            update_seed = derive_seed(base, seed_idx, epoch, _STREAM_UPDATE)
            for metric in metrics:
                scores = score_parameters(rotated, batch.returns, metric, update_seed,
                                          bins=config.algorithm.mi_bins,
                                          k=config.algorithm.mi_k)
                for m in m_values:
                    selected = select_original(frame, scores, min(m, scores.dim))
                    p, r = precision_recall(selected, truth)
                    result.records.append(PrecisionRecallRecord(
                        seed=seed_idx, epoch=epoch, m=m, metric=metric.value,
                        precision=p, recall=r,
                    ))
            try:
                state = apply_update(state, batch, config.algorithm, seed=update_seed)
            except (DegenerateDistributionError, ConstrainedUpdateError) as e:
                result.failures.append(SeedFailure(seed=seed_idx, epoch=epoch, message=str(e)))
                break
    result.records.sort(key=lambda r: (r.seed, r.epoch, r.metric, r.m))
    return result


def run_mi_benchmark(seeds, sample_counts, bins: int = 4, k: int = 4,
                     base_seed: int = 0) -> list:
    """Compare the MI estimators against the analytic linear-Gaussian value.

    Per seed, the transformation and noise scale are randomized while the
    sample-count grid reuses the same draws from p(X).
    """
    sample_counts = sorted(int(n) for n in sample_counts)
    if not sample_counts or sample_counts[0] < max(bins, k + 1):
        raise ValueError("sample counts must exceed the estimator orders")
    records = []
    for seed in seeds:
        rng = np.random.default_rng(derive_seed(base_seed, int(seed), _STREAM_MI_BENCH))
        a = rng.uniform(0.5, 2.0)
        sigma_e = rng.uniform(0.3, 1.5)
        model = GaussianLinearModel(
            a=[[a]], sigma_xx=[[1.0]], mu_xx=[0.0],
            sigma_e=[[sigma_e ** 2]], mu_e=[0.0],
        )
        analytic = analytic_gaussian_mi(model)
        x_pool = rng.standard_normal(sample_counts[-1])
        e_pool = sigma_e * rng.standard_normal(sample_counts[-1])
        for count in sample_counts:
            xs = x_pool[:count]
            ys = a * xs + e_pool[:count]
            estimates = {
                "histogram": mi_histogram(xs, ys, bins),
                "ksg": mi_ksg(xs, ys, k),
                "knn-regression": mi_knn_regression(xs, ys, k),
            }
            for name, value in estimates.items():
                records.append(MiBenchRecord(
                    estimator=name, sample_count=count, seed=int(seed),
                    estimate=float(value), analytic_value=float(analytic),
                    abs_error=float(abs(value - analytic)),
                ))
    return records


@dataclass(frozen=True)
class AggregateRow:
    epoch: int
    episodes: int
    mean: float
    ci95_low: Optional[float]
    ci95_high: Optional[float]
    n_seeds: int
    failures: int


def aggregate_learning_curves(result: RunResult) -> list:
    """Mean and 95% t-interval across seeds per epoch; failed seeds are
    excluded from the epoch onward and counted in the failures column."""
    by_epoch = {}
    for rec in result.records:
        by_epoch.setdefault(rec.epoch, []).append(rec)
    failure_epochs = sorted(f.epoch for f in result.failures)
    rows = []
    for epoch in sorted(by_epoch):
        recs = by_epoch[epoch]
        values = np.array([r.mean_return for r in recs])
        episodes = recs[0].cumulative_episodes
        n = values.size
        mean = float(values.mean())
        if n >= 2:
            half = float(stats.t.ppf(0.975, n - 1) * values.std(ddof=1) / math.sqrt(n))
            lo, hi = mean - half, mean + half
        else:
            lo = hi = None
        failed = sum(1 for e in failure_epochs if e <= epoch)
        rows.append(AggregateRow(epoch=epoch, episodes=episodes, mean=mean,
                                 ci95_low=lo, ci95_high=hi, n_seeds=n, failures=failed))
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e


def emit_outputs(result: RunResult, out_dir) -> dict:
    """Write the per-run curve, the aggregate, plot data, and any failures.

    Returns the mapping of logical name to written path.  Identical inputs
    produce byte-identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    curve_path = out / "learning_curve.csv"
    _write_csv(curve_path, ["seed", "epoch", "episodes", "mean_return", "kl", "entropy"],
               [(r.seed, r.epoch, r.cumulative_episodes, r.mean_return, r.kl_step, r.entropy)
                for r in result.sorted_records()])
    paths["learning_curve"] = curve_path

    agg_rows = aggregate_learning_curves(result)
    agg_path = out / "aggregate.csv"
    _write_csv(agg_path,
               ["epoch", "episodes", "mean", "ci95_low", "ci95_high", "n_seeds", "failures"],
               [(r.epoch, r.episodes, r.mean, r.ci95_low, r.ci95_high, r.n_seeds, r.failures)
                for r in agg_rows])
    paths["aggregate"] = agg_path

    plot_path = out / "plot_data.csv"
    _write_csv(plot_path, ["episodes", "mean", "ci95_low", "ci95_high"],
               [(r.episodes, r.mean, r.ci95_low, r.ci95_high) for r in agg_rows])
    paths["plot_data"] = plot_path

    if result.failures:
        fail_path = out / "failures.csv"
        _write_csv(fail_path, ["seed", "epoch", "message"],
                   [(f.seed, f.epoch, f.message) for f in result.failures])
        paths["failures"] = fail_path
    return paths


def emit_precision_recall(result: RunResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "precision_recall.csv"
    _write_csv(path, ["seed", "epoch", "m", "metric", "precision", "recall"],
               [(r.seed, r.epoch, r.m, r.metric, r.precision, r.recall)
                for r in result.records])
    return path


def emit_mi_benchmark(records, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "mi_benchmark.csv"
    _write_csv(path,
               ["estimator", "sample_count", "seed", "estimate", "analytic_value", "abs_error"],
               [(r.estimator, r.sample_count, r.seed, r.estimate, r.analytic_value, r.abs_error)
                for r in records])
    return path
