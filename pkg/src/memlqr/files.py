"""File formats: JSON objects and RFC-4180 CSV traces.

Matrices are row-major nested arrays.  Infinite costs serialize as the
literal string "inf" so no reader has to guess at float encodings.  All
writers are deterministic: identical inputs produce identical bytes.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .exceptions import ValidationError
from .linsys import LinearSystem, Policy, Trajectory, UncertainFamily
from .meta import AdaptationReport, RunLog


def _encode(value):
    """Make a value JSON-safe; floats stay floats except infinities."""
    if isinstance(value, dict):
        return {k: _encode(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_encode(v) for v in value]
    if isinstance(value, np.ndarray):
        return _encode(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return value
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def _decode_float(value) -> float:
    if isinstance(value, str):
        return float(value)
    return float(value)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_encode(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ValidationError(f"file {path} does not exist") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot parse {path}: {exc}") from exc


def family_to_dict(family: UncertainFamily) -> dict:
    return {
        "n": family.n,
        "m": family.m,
        "A0": family.A0,
        "A_terms": list(family.A_terms),
        "B0": family.B0,
        "B_terms": list(family.B_terms),
        "delta_bounds": [list(b) for b in family.delta_bounds],
        "gamma_bounds": [list(b) for b in family.gamma_bounds],
    }


def family_from_dict(data: dict) -> UncertainFamily:
    try:
        return UncertainFamily(
            n=int(data["n"]),
            m=int(data["m"]),
            A0=np.asarray(data["A0"], dtype=float),
            A_terms=tuple(np.asarray(t, dtype=float) for t in data["A_terms"]),
            B0=np.asarray(data["B0"], dtype=float),
            B_terms=tuple(np.asarray(t, dtype=float) for t in data["B_terms"]),
            delta_bounds=tuple((lo, hi) for lo, hi in data["delta_bounds"]),
            gamma_bounds=tuple((lo, hi) for lo, hi in data["gamma_bounds"]),
        )
    except KeyError as exc:
        raise ValidationError(f"family file missing key {exc}") from exc


def save_family(path, family: UncertainFamily) -> Path:
    return write_json(path, family_to_dict(family))


def load_family(path) -> UncertainFamily:
    return family_from_dict(read_json(path))


def realization_to_dict(system: LinearSystem) -> dict:
    return {
        "n": system.n,
        "m": system.m,
        "A": system.A,
        "B": system.B,
        "id": system.id,
        "provenance": system.provenance or {},
    }


def realization_from_dict(data: dict) -> LinearSystem:
    try:
        return LinearSystem(
            n=int(data["n"]),
            m=int(data["m"]),
            A=np.asarray(data["A"], dtype=float),
            B=np.asarray(data["B"], dtype=float),
            id=int(data.get("id", 0)),
            provenance=data.get("provenance"),
        )
    except KeyError as exc:
        raise ValidationError(f"realization file missing key {exc}") from exc


def save_realization(path, system: LinearSystem) -> Path:
    return write_json(path, realization_to_dict(system))


def load_realization(path) -> LinearSystem:
    return realization_from_dict(read_json(path))


def policy_to_dict(policy: Policy) -> dict:
    return {
        "n": policy.n,
        "m": policy.m,
        "K": policy.K,
        "meta": policy.meta or {},
    }


def policy_from_dict(data: dict) -> Policy:
    try:
        return Policy(
            K=np.asarray(data["K"], dtype=float), meta=data.get("meta") or None
        )
    except KeyError as exc:
        raise ValidationError(f"policy file missing key {exc}") from exc


def save_policy(path, policy: Policy) -> Path:
    return write_json(path, policy_to_dict(policy))


def load_policy(path) -> Policy:
    return policy_from_dict(read_json(path))


def _open_csv(path):
    # newline="" defers line endings to the writer (CRLF per RFC 4180)
    return open(path, "w", newline="")


def write_runlog_csv(path, log: RunLog) -> Path:
    """One row per outer iteration; per-client blocks follow the header.

    Columns: s, C_lambda, grad_norm_sq, eta_bar, then cost_i, rho_i,
    inner_residual_i per client.  The logged objective column holds the
    trainer's own objective (the envelope meta-cost for the federated
    trainer, the summed cost for the baselines).  Baselines have no
    inner solves; their residual cells are empty.
    """
    path = Path(path)
    header = ["s", "C_lambda", "grad_norm_sq", "eta_bar"]
    for i in range(log.num_clients):
        header += [f"cost_{i}", f"rho_{i}", f"inner_residual_{i}"]
    with _open_csv(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for record in log.records:
            row = [
                record.s,
                record.objective,
                record.grad_norm_sq,
                log.eta_bar,
            ]
            for client in record.clients:
                residual = (
                    client.inner_residuals[0] if client.inner_residuals else ""
                )
                row += [client.cost, client.rho, residual]
            writer.writerow(row)
    return path


def write_adaptation_csv(path, report: AdaptationReport) -> Path:
    """Columns: n, cost, accuracy, init_label, seed."""
    path = Path(path)
    with _open_csv(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(["n", "cost", "accuracy", "init_label", "seed"])
        for n, (cost, acc) in enumerate(zip(report.costs, report.accuracies)):
            acc_cell = acc if math.isfinite(acc) else ""
            writer.writerow([n, cost, acc_cell, report.init_label, report.seed])
    return path


def write_trajectory_csv(path, trajectory: Trajectory) -> Path:
    """Columns: t, states, inputs, stage cost; input cells empty at t=T."""
    path = Path(path)
    horizon, m = trajectory.inputs.shape
    n = trajectory.states.shape[1]
    header = (
        ["t"]
        + [f"x_{k}" for k in range(n)]
        + [f"u_{k}" for k in range(m)]
        + ["stage_cost"]
    )
    with _open_csv(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for t in range(horizon + 1):
            row = [t] + [float(v) for v in trajectory.states[t]]
            if t < horizon:
                row += [float(v) for v in trajectory.inputs[t]]
                row += [
                    float(trajectory.stage_costs[t])
                    if trajectory.stage_costs is not None
                    else ""
                ]
            else:
                row += [""] * (m + 1)
            writer.writerow(row)
    return path


def write_comparison_csv(path, labels: list[str], traces: list[list[float]]) -> Path:
    """Cost-versus-iteration columns for one holdout, one per method."""
    path = Path(path)
    if len(labels) != len(traces):
        raise ValidationError("labels and traces must align")
    length = max(len(t) for t in traces)
    with _open_csv(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(["n"] + [f"cost_{label}_init" for label in labels])
        for n in range(length):
            row = [n]
            for trace in traces:
                row.append(trace[n] if n < len(trace) else "")
            writer.writerow(row)
    return path
