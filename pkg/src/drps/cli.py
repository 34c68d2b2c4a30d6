"""Command-line interface.

Subcommands: ``run`` (learning curves), ``pr-study`` (effective-parameter
precision/recall), ``mi-bench`` (MI estimator benchmark), ``lqr-oracle``
(optimal gain and return), and ``presets``.  Exit codes: 0 on success, 1 on
configuration errors, 2 when every seed of a run fails.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from .config import PRESETS, ConfigError, load_config, preset_config
from .envs import make_environment
from .harness import emit_mi_benchmark, emit_outputs, emit_precision_recall, \
    run_experiment, run_mi_benchmark, run_precision_recall_study
from .lqr import LqrEnv, lqr_optimal_gain, lqr_optimal_return


def _default_workers() -> int:
    raw = os.environ.get("DRPS_WORKERS", "1")
    try:
        return max(int(raw), 1)
    except ValueError:
        return 1


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="TOML experiment document")
    parser.add_argument("--preset", metavar="NAME", choices=sorted(PRESETS),
                        help="named reference configuration")
    parser.add_argument("--seeds", type=int, metavar="N", help="override the seed count")
    parser.add_argument("--out", default="out", metavar="DIR", help="output directory")
    parser.add_argument("--workers", type=int, default=_default_workers(), metavar="N",
                        help="parallel seed workers (default: DRPS_WORKERS or 1)")


def _resolve_config(args):
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        config = load_config(args.config)
    elif args.preset:
        config = preset_config(args.preset)
    else:
        raise ConfigError("one of --config or --preset is required")
    if args.seeds is not None:
        if args.seeds < 1:
            raise ConfigError("--seeds must be positive")
        config = dataclasses.replace(config, n_seeds=args.seeds)
    return config


def _cmd_run(args) -> int:
    config = _resolve_config(args)
    result = run_experiment(config, workers=args.workers)
    paths = emit_outputs(result, args.out)
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    failed = len(result.failures)
    if failed:
        print(f"{failed}/{config.n_seeds} seeds failed", file=sys.stderr)
    if failed >= config.n_seeds:
        return 2
    return 0


def _cmd_pr_study(args) -> int:
    config = _resolve_config(args)
    m_values = tuple(int(v) for v in args.m_values.split(","))
    result = run_precision_recall_study(config, m_values=m_values)
    path = emit_precision_recall(result, args.out)
    print(f"precision_recall: {path}")
    if result.failures and len(result.failures) >= config.n_seeds:
        return 2
    return 0


def _cmd_mi_bench(args) -> int:
    counts = [int(v) for v in args.counts.split(",")]
    records = run_mi_benchmark(range(args.seeds), counts, bins=args.bins, k=args.k)
    path = emit_mi_benchmark(records, args.out)
    print(f"mi_benchmark: {path}")
    return 0


def _cmd_lqr_oracle(args) -> int:
    if args.config or args.preset:
        config = _resolve_config(args)
        env = make_environment(config.environment)
    else:
        env = make_environment({
            "kind": "lqr", "dim": args.dim, "n_ineffective": args.ineffective,
            "env_seed": args.env_seed,
        })
    if not isinstance(env, LqrEnv):
        raise ConfigError("lqr-oracle requires an LQR environment")
    gain = lqr_optimal_gain(env).gain
    with np.printoptions(precision=6, suppress=True):
        print("optimal gain (u = -K x):")
        print(gain)
    print(f"ineffective dimensions: {list(env.ineffective_dims)}")
    print(f"optimal return from the fixed initial state: {lqr_optimal_return(env):.6f}")
    return 0


def _cmd_presets(_args) -> int:
    for name in sorted(PRESETS):
        doc = PRESETS[name]
        algo = doc["algorithm"]
        run = doc["run"]
        print(f"{name}: {doc['environment']['kind']} / {algo['name']}"
              f" (eps={algo.get('eps')}, kappa={algo.get('kappa')}, m={algo.get('m')},"
              f" lambda={algo.get('lambda')}, metric={algo.get('metric')},"
              f" {run['episodes_per_fit']} episodes x {run['n_epochs']} epochs)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drps",
                                     description="episodic policy-search experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a learning-curve experiment")
    _add_common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_pr = sub.add_parser("pr-study", help="precision/recall of parameter identification")
    _add_common(p_pr)
    p_pr.add_argument("--m-values", default="10,30,50", metavar="LIST",
                      help="comma-separated selection sizes")
    p_pr.set_defaults(func=_cmd_pr_study)

    p_mi = sub.add_parser("mi-bench", help="benchmark the MI estimators")
    p_mi.add_argument("--seeds", type=int, default=20, metavar="N")
    p_mi.add_argument("--counts", default="50,100,200,500,1000,2000", metavar="LIST")
    p_mi.add_argument("--bins", type=int, default=4)
    p_mi.add_argument("--k", type=int, default=4)
    p_mi.add_argument("--out", default="out", metavar="DIR")
    p_mi.set_defaults(func=_cmd_mi_bench)

    p_or = sub.add_parser("lqr-oracle", help="print the optimal gain and return")
    p_or.add_argument("--config", metavar="PATH")
    p_or.add_argument("--preset", metavar="NAME", choices=sorted(PRESETS))
    p_or.add_argument("--seeds", type=int, help=argparse.SUPPRESS)
    p_or.add_argument("--dim", type=int, default=10)
    p_or.add_argument("--ineffective", type=int, default=7)
    p_or.add_argument("--env-seed", type=int, default=0)
    p_or.set_defaults(func=_cmd_lqr_oracle)

    p_ls = sub.add_parser("presets", help="list the named configurations")
    p_ls.set_defaults(func=_cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 1
    except (OSError, RuntimeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
