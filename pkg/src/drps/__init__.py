"""Episodic black-box policy search with full-covariance Gaussian search
distributions, correlation-guided dimensionality reduction, and prioritized
exploration, plus desk-scale environments and an experiment harness."""

from .correlation import (
    CorrelationScores,
    EffectiveSplit,
    GaussianLinearModel,
    Metric,
    analytic_gaussian_mi,
    mi_histogram,
    mi_knn_regression,
    mi_ksg,
    pcc,
    score_parameters,
    select_effective,
)
from .errors import ConstrainedUpdateError, DegenerateDistributionError, IndefiniteUpdateError
from .gaussian import (
    GaussianDist,
    RotatedFrame,
    SampleBatch,
    WeightVector,
    back_project,
    constrained_wmle,
    entropy,
    extract,
    kl_divergence,
    project_samples,
    sample,
    subst,
    svd_rotate,
    wmle_fit,
)
from .lqr import (
    EpisodeResult,
    LinearGainPolicy,
    LqrEnv,
    lqr_episode,
    lqr_make,
    lqr_optimal_gain,
    lqr_optimal_return,
    lqr_truth_indices,
    params_to_policy,
    policy_to_params,
)
from .ship import ShipSteeringEnv, TileCoding, ship_episode, ship_make, tile_features
from .envs import evaluate_batch, make_environment
from .updates import (
    Algorithm,
    AlgorithmConfig,
    DualSolution,
    SearchState,
    apply_update,
    cem_update,
    compute_weights,
    creps_update,
    dr_creps_update,
    dr_reps_update,
    initial_state,
    reps_dual_minimize,
    reps_update,
    rwr_update,
)
from .harness import (
    ExperimentConfig,
    LearningCurveRecord,
    MiBenchRecord,
    PrecisionRecallRecord,
    RunResult,
    aggregate_learning_curves,
    emit_outputs,
    precision_recall,
    pull_back_scores,
    run_experiment,
    run_mi_benchmark,
    run_precision_recall_study,
    select_original,
)
from .config import PRESETS, load_config, preset_config

__version__ = "0.1.0"
