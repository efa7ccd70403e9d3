#!/usr/bin/env python3
"""End-to-end benchmark study driven through the CLI.

Generates realizations, trains the federated meta-policy and the
averaging baseline, fine-tunes both on a held-out realization, evaluates
a trajectory of the adapted policy, runs the method comparison, and (if
plotkit is installed) renders the four figure kinds into <out>/figures.
"""

import argparse
import json
import shutil
import subprocess
import sys
from pathlib import Path

from memlqr.cli import main as memlqr_main
from memlqr.config import config_to_dict, default_config
from memlqr.files import write_json


def run(argv) -> None:
    code = memlqr_main([str(a) for a in argv])
    if code != 0:
        sys.exit(code)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--quick", action="store_true", help="reduced iteration counts"
    )
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    config = config_to_dict(default_config())
    config["seed"] = args.seed
    config["output_dir"] = str(out)
    if args.quick:
        config["train"]["outer_iters"] = 40
        config["train"]["iters"] = 60
        config["adapt"]["iters"] = 40
    config_path = out / "config.json"
    write_json(config_path, config)

    run(["generate", "--config", config_path])
    run(["train", "--config", config_path])

    baseline = dict(config)
    baseline["train"] = dict(config["train"], algorithm="average")
    baseline_path = out / "config_average.json"
    write_json(baseline_path, baseline)
    run(["train", "--config", baseline_path])

    holdout = out / "holdout_0.json"
    for algo in ("memlqr", "average"):
        run(
            [
                "adapt",
                "--config", config_path,
                "--policy", out / f"policy_{algo}.json",
                "--holdout", holdout,
                "--label", algo,
            ]
        )
    run(
        [
            "eval",
            "--config", config_path,
            "--policy", out / "policy_memlqr.json",
            "--realization", holdout,
            "--trajectory", "250",
        ]
    )
    run(["compare", "--config", config_path])

    plotkit = shutil.which("plotkit")
    if plotkit is None:
        print("plotkit not installed; skipping figures", file=sys.stderr)
        return
    figures = out / "figures"
    figures.mkdir(exist_ok=True)
    jobs = [
        ("convergence", [out / "runlog_memlqr.csv"], ["memlqr"]),
        (
            "accuracy",
            [out / "adaptation_memlqr.csv", out / "adaptation_average.csv"],
            ["memlqr", "average"],
        ),
        ("trajectory", [out / "trajectory_0.csv"], ["memlqr"]),
        (
            "comparison",
            sorted(out.glob("comparison_holdout_*.csv")),
            None,
        ),
    ]
    for kind, inputs, labels in jobs:
        argv = [
            plotkit,
            kind,
            "--in", ",".join(str(p) for p in inputs),
            "--out", str(figures / f"{kind}.png"),
        ]
        if labels:
            argv += ["--labels", ",".join(labels)]
        subprocess.run(argv, check=True)
    print(figures)


if __name__ == "__main__":
    main()
