"""Command-line front-end.

Subcommands: generate, train, adapt, eval, compare.  Exit codes: 0 on
success, 1 for validation problems, 2 for numerical failures, 3 for a
mid-run stability violation.  Diagnostics go to stderr; stdout carries
only requested data and output paths.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import files
from .config import (
    STREAM_HOLDOUTS,
    STREAM_TRAIN_REALIZATIONS,
    STREAM_TRAJECTORY,
    STREAM_ZEROTH_ORDER,
    ExperimentConfig,
    default_config,
    load_config,
)
from .exceptions import (
    InstabilityError,
    NumericalError,
    StabilityViolationError,
    ValidationError,
)
from .linsys import LinearSystem, Policy, closed_loop, rollout, sample_realizations, spectral_radius
from .lqr import lqr_cost, solve_dare
from .meta import adapt, average_train, fomaml_train, local_train, memlqr_train
from .seeds import derive_seed, make_rng

logger = logging.getLogger(__name__)


def _effective_seed(config: ExperimentConfig, args) -> int:
    return args.seed if args.seed is not None else config.seed


def _load_or_default_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return default_config()


def _out_dir(config: ExperimentConfig, args) -> Path:
    out = Path(args.out) if getattr(args, "out", None) else Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _gradient_mode(config: ExperimentConfig, seed: int):
    if config.train.gradient_mode == "zeroth-order":
        return replace(
            config.zeroth_order, rng_seed=derive_seed(seed, STREAM_ZEROTH_ORDER)
        )
    return "exact"


def _nominal_system(config: ExperimentConfig) -> LinearSystem:
    family = config.family
    return LinearSystem(
        family.n,
        family.m,
        family.A0,
        family.B0,
        id=0,
        provenance={"nominal": True},
    )


def _resolve_k0(config: ExperimentConfig, cost) -> Policy:
    spec = config.train.k0
    if spec is None:
        return solve_dare(_nominal_system(config), cost)
    if isinstance(spec, str):
        path = Path(spec)
        if not path.exists():
            raise ValidationError(f"initial policy file {path} does not exist")
        return files.load_policy(path)
    return Policy(np.asarray(spec, dtype=float))


def _sample_training_set(config: ExperimentConfig, seed: int):
    return sample_realizations(
        config.family, config.num_realizations, (seed, STREAM_TRAIN_REALIZATIONS)
    )


def _sample_holdouts(config: ExperimentConfig, seed: int):
    return sample_realizations(
        config.family, config.num_holdouts, (seed, STREAM_HOLDOUTS)
    )


def cmd_generate(args) -> int:
    config = _load_or_default_config(args)
    seed = _effective_seed(config, args)
    out = _out_dir(config, args)
    systems = _sample_training_set(config, seed)
    holdouts = _sample_holdouts(config, seed)
    files.save_family(out / "family.json", config.family)
    manifest = {"seed": seed, "family": "family.json", "realizations": [], "holdouts": []}
    for system in systems:
        name = f"realization_{system.id}.json"
        files.save_realization(out / name, system)
        manifest["realizations"].append(
            {
                "file": name,
                "delta": system.provenance["delta"],
                "gamma": system.provenance["gamma"],
            }
        )
    for holdout in holdouts:
        name = f"holdout_{holdout.id}.json"
        files.save_realization(out / name, holdout)
        manifest["holdouts"].append(
            {
                "file": name,
                "delta": holdout.provenance["delta"],
                "gamma": holdout.provenance["gamma"],
            }
        )
    path = files.write_json(out / "manifest.json", manifest)
    print(path)
    return 0


def _load_realizations(directory: Path) -> list[LinearSystem]:
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise ValidationError(f"no manifest.json in {directory}; run generate first")
    manifest = files.read_json(manifest_path)
    return [
        files.load_realization(directory / entry["file"])
        for entry in manifest["realizations"]
    ]


def cmd_train(args) -> int:
    config = _load_or_default_config(args)
    seed = _effective_seed(config, args)
    out = _out_dir(config, args)
    realizations_dir = (
        Path(args.realizations) if args.realizations else out
    )
    if (realizations_dir / "manifest.json").exists():
        systems = _load_realizations(realizations_dir)
    else:
        logger.info("no generated realizations found; sampling in-process")
        systems = _sample_training_set(config, seed)
    cost = config.cost()
    k0 = _resolve_k0(config, cost)
    mode = _gradient_mode(config, seed)
    algorithm = config.train.algorithm
    logger.info("training %s on %d realizations", algorithm, len(systems))
    if algorithm == "memlqr":
        train_config = replace(
            config.train.memlqr, gradient_mode=mode, seed=seed
        )
        policy, log = memlqr_train(systems, cost, k0, train_config)
    elif algorithm == "average":
        policy, log = average_train(
            systems,
            cost,
            k0,
            config.train.step,
            config.train.iters,
            mode,
            config.init_state,
            seed,
        )
    elif algorithm == "fomaml":
        policy, log = fomaml_train(
            systems,
            cost,
            k0,
            config.train.maml_inner_step,
            config.train.step,
            config.train.iters,
            mode,
            config.init_state,
            seed,
        )
    else:  # local
        if len(systems) != 1:
            raise ValidationError(
                f"local training takes exactly one realization, got {len(systems)}"
            )
        policy, log = local_train(
            systems[0],
            cost,
            k0,
            config.train.step,
            config.train.iters,
            mode,
            config.init_state,
            seed,
        )
    policy_path = files.save_policy(out / f"policy_{algorithm}.json", policy)
    log_path = files.write_runlog_csv(out / f"runlog_{algorithm}.csv", log)
    print(policy_path)
    print(log_path)
    return 0


def cmd_adapt(args) -> int:
    config = _load_or_default_config(args)
    seed = _effective_seed(config, args)
    out = _out_dir(config, args)
    policy = files.load_policy(args.policy)
    holdout = files.load_realization(args.holdout)
    cost = config.cost()
    step = args.adapt_step if args.adapt_step is not None else config.adapt.step
    label = args.label or (policy.meta or {}).get("algorithm", "init")
    mode = _gradient_mode(config, seed)
    report = adapt(
        policy,
        holdout,
        cost,
        step=step,
        iters=config.adapt.iters,
        gradient_mode=mode,
        init_state=config.init_state,
        num_eval_states=config.adapt.num_eval_states,
        eval_horizon=config.adapt.eval_horizon,
        init_label=label,
        seed=seed,
    )
    if report.failed:
        logger.warning("initial policy does not stabilize the holdout; "
                       "recording adaptation failure")
    path = files.write_adaptation_csv(out / f"adaptation_{label}.csv", report)
    print(path)
    return 0


def cmd_eval(args) -> int:
    config = _load_or_default_config(args)
    seed = _effective_seed(config, args)
    policy = files.load_policy(args.policy)
    system = files.load_realization(args.realization)
    cost = config.cost()
    report = lqr_cost(system, cost, policy)
    payload = {
        "cost": report.value,
        "stable": report.stable,
        "spectral_radius": report.spectral_radius,
    }
    print(json.dumps(files._encode(payload), sort_keys=True))
    if args.trajectory is not None:
        out = _out_dir(config, args)
        rng = make_rng(seed, STREAM_TRAJECTORY)
        x0 = config.init_state.sample(rng, 1)[0]
        trajectory = rollout(system, policy, x0, args.trajectory, cost=cost)
        path = files.write_trajectory_csv(
            out / f"trajectory_{system.id}.csv", trajectory
        )
        print(path)
    return 0


def _train_method(
    method: str,
    config: ExperimentConfig,
    systems,
    cost,
    k0: Policy,
    seed: int,
):
    mode = _gradient_mode(config, seed)
    if method == "memlqr":
        train_config = replace(config.train.memlqr, gradient_mode=mode, seed=seed)
        policy, _ = memlqr_train(systems, cost, k0, train_config)
    elif method == "average":
        policy, _ = average_train(
            systems, cost, k0, config.train.step, config.train.iters,
            mode, config.init_state, seed,
        )
    elif method == "fomaml":
        policy, _ = fomaml_train(
            systems, cost, k0, config.train.maml_inner_step, config.train.step,
            config.train.iters, mode, config.init_state, seed,
        )
    else:
        raise ValidationError(f"unknown comparison method {method!r}")
    return policy


def cmd_compare(args) -> int:
    config = _load_or_default_config(args)
    seed = _effective_seed(config, args)
    out = _out_dir(config, args)
    step = args.adapt_step if args.adapt_step is not None else config.adapt.step
    systems = _sample_training_set(config, seed)
    holdouts = _sample_holdouts(config, seed)
    cost = config.cost()
    k0 = _resolve_k0(config, cost)
    methods = ["memlqr"] + [m for m in config.compare.baselines if m != "memlqr"]
    policies = {}
    for method in methods:
        logger.info("comparison: training %s", method)
        policies[method] = _train_method(method, config, systems, cost, k0, seed)
    mode = _gradient_mode(config, seed)
    summary = {"threshold": config.compare.threshold, "holdouts": []}
    for holdout in holdouts:
        traces = []
        to_threshold = {}
        for method in methods:
            report = adapt(
                policies[method],
                holdout,
                cost,
                step=step,
                iters=config.adapt.iters,
                gradient_mode=mode,
                init_state=config.init_state,
                num_eval_states=config.adapt.num_eval_states,
                eval_horizon=config.adapt.eval_horizon,
                init_label=method,
                seed=seed,
            )
            traces.append(report.costs)
            to_threshold[method] = report.iterations_to_accuracy(
                config.compare.threshold
            )
        files.write_comparison_csv(
            out / f"comparison_holdout_{holdout.id}.csv", methods, traces
        )
        summary["holdouts"].append(
            {"id": holdout.id, "iterations_to_threshold": to_threshold}
        )
    path = files.write_json(out / "comparison_summary.json", summary)
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memlqr",
        description="Meta-policy training for uncertain discrete-time "
        "linear quadratic regulation.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, realizations=False, policy=False, holdout=False,
               realization=False, adapt_step=False):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", help="output directory")
        if realizations:
            p.add_argument("--realizations", help="directory with generated files")
        if policy:
            p.add_argument("--policy", required=True, help="policy JSON file")
        if holdout:
            p.add_argument("--holdout", required=True, help="held-out realization file")
        if realization:
            p.add_argument("--realization", required=True, help="realization file")
        if adapt_step:
            p.add_argument(
                "--adapt-step", type=float, default=None,
                help="fine-tuning step size (default from config)",
            )

    p = sub.add_parser("generate", help="sample and persist realizations")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a meta-policy or baseline")
    common(p, realizations=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("adapt", help="fine-tune a policy on a held-out realization")
    common(p, policy=True, holdout=True, adapt_step=True)
    p.add_argument("--label", help="label for the adaptation trace")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("eval", help="evaluate a policy on a realization")
    common(p, policy=True, realization=True)
    p.add_argument(
        "--trajectory", type=int, default=None,
        help="also write a rollout CSV with this horizon",
    )
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="train methods and compare adaptation")
    common(p, adapt_step=True)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ValidationError as exc:
        logger.error("validation error: %s", exc)
        return 1
    except StabilityViolationError as exc:
        logger.error("stability violation: %s", exc)
        return 3
    except (NumericalError, InstabilityError) as exc:
        logger.error("numerical failure: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
