"""Figure construction from run CSV files.

Four figure kinds: training-objective convergence (log-scale y),
adaptation accuracy per initialization, state/input trajectories, and
multi-holdout method comparison panels.  Inputs are the CSV schemas the
memlqr CLI emits; unknown columns are ignored, a missing required column
raises SchemaError naming it, and a header-only CSV renders empty axes
with a warning.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

logger = logging.getLogger(__name__)

KINDS = ("convergence", "accuracy", "trajectory", "comparison")


class SchemaError(ValueError):
    """An input CSV lacks a column the figure kind needs."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple[Path, ...]
    output: Path
    labels: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}")
        if not self.inputs:
            raise SchemaError("at least one input CSV is required")
        object.__setattr__(self, "inputs", tuple(Path(p) for p in self.inputs))
        object.__setattr__(self, "output", Path(self.output))


def read_table(path: Path) -> tuple[list[str], list[dict]]:
    """Header and rows of a CSV; cell values stay strings."""
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise SchemaError(f"{path} has no header row")
        return list(reader.fieldnames), list(reader)


def column(rows: list[dict], name: str, path: Path) -> list[float]:
    if rows and name not in rows[0]:
        raise SchemaError(f"{path} is missing column {name!r}")
    return [float(row[name]) for row in rows if row[name] != ""]


def _require(header: list[str], names: list[str], path: Path) -> None:
    for name in names:
        if name not in header:
            raise SchemaError(f"{path} is missing column {name!r}")


def _label(spec: FigureSpec, index: int, fallback: str) -> str:
    if index < len(spec.labels):
        return spec.labels[index]
    return fallback


def _convergence(spec: FigureSpec, ax) -> None:
    for index, path in enumerate(spec.inputs):
        header, rows = read_table(path)
        _require(header, ["s", "C_lambda"], path)
        if not rows:
            logger.warning("%s has a header but no rows", path)
            continue
        # plotted values must equal the CSV column exactly
        ax.plot(
            column(rows, "s", path),
            column(rows, "C_lambda", path),
            label=_label(spec, index, path.stem),
        )
    ax.set_yscale("log")
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("training objective")
    if ax.lines:
        ax.legend()


def _accuracy(spec: FigureSpec, ax) -> None:
    for index, path in enumerate(spec.inputs):
        header, rows = read_table(path)
        _require(header, ["n", "accuracy"], path)
        if not rows:
            logger.warning("%s has a header but no rows", path)
            continue
        fallback = rows[0].get("init_label") or path.stem
        values = column(rows, "accuracy", path)
        clamped = [min(max(v, 0.0), 1.0) for v in values]
        ax.plot(
            column(rows, "n", path)[: len(clamped)],
            clamped,
            label=_label(spec, index, fallback),
        )
    ax.set_ylim(0.0, 1.05)
    ax.set_xlabel("fine-tuning iteration")
    ax.set_ylabel("accuracy")
    if ax.lines:
        ax.legend()


def _trajectory(spec: FigureSpec, axes) -> None:
    path = spec.inputs[0]
    header, rows = read_table(path)
    _require(header, ["t"], path)
    state_cols = [name for name in header if name.startswith("x_")]
    input_cols = [name for name in header if name.startswith("u_")]
    if not state_cols:
        raise SchemaError(f"{path} is missing column 'x_0'")
    if not rows:
        logger.warning("%s has a header but no rows", path)
        return
    steps = column(rows, "t", path)
    for name in state_cols:
        axes[0].plot(steps, column(rows, name, path), label=name)
    for name in input_cols:
        values = column(rows, name, path)
        axes[1].plot(steps[: len(values)], values, label=name)
    axes[0].set_ylabel("state")
    axes[1].set_ylabel("input")
    axes[1].set_xlabel("time step")
    for ax in axes:
        if ax.lines:
            ax.legend(loc="upper right", fontsize="small")


def _comparison(spec: FigureSpec, axes) -> None:
    for ax, path in zip(axes, spec.inputs):
        header, rows = read_table(path)
        _require(header, ["n"], path)
        cost_cols = [name for name in header if name.startswith("cost_")]
        if not cost_cols:
            raise SchemaError(f"{path} is missing column 'cost_*_init'")
        if not rows:
            logger.warning("%s has a header but no rows", path)
            continue
        steps = column(rows, "n", path)
        for name in cost_cols:
            values = column(rows, name, path)
            label = name.removeprefix("cost_").removesuffix("_init")
            ax.plot(steps[: len(values)], values, label=label)
        ax.set_title(path.stem, fontsize="small")
        ax.set_xlabel("fine-tuning iteration")
        if ax.lines:
            ax.legend(fontsize="small")
    axes[0].set_ylabel("holdout cost")


def build_figure(spec: FigureSpec):
    """Assemble the matplotlib figure for a spec (no file output)."""
    if spec.kind == "trajectory":
        fig, axes = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
        _trajectory(spec, axes)
    elif spec.kind == "comparison":
        count = len(spec.inputs)
        fig, axes = plt.subplots(
            1, count, figsize=(4.5 * count, 4), squeeze=False
        )
        _comparison(spec, axes[0])
    else:
        fig, ax = plt.subplots(figsize=(6.5, 4.5))
        if spec.kind == "convergence":
            _convergence(spec, ax)
        else:
            _accuracy(spec, ax)
    fig.tight_layout()
    return fig


def render(spec: FigureSpec) -> Path:
    """Render the figure to spec.output and return the path."""
    fig = build_figure(spec)
    spec.output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)
    return spec.output
