"""Uncertain linear system families, realizations, and trajectory rollout.

A family is an affine matrix set

    A(delta) = A0 + sum_i delta_i * A_terms[i]
    B(gamma) = B0 + sum_j gamma_j * B_terms[j]

with each uncertainty component confined to a closed bounded interval.
Realizations are concrete (A, B) pairs drawn from the family; a policy is
a static feedback gain K applied as u = -K x, so the closed loop is
A - B K and stability means its spectral radius is below one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import BoundsViolationError, ShapeError, ValidationError
from .seeds import make_rng

# Margin subtracted from the unit circle when declaring a closed loop
# stable, so the boolean is robust to eigenvalue round-off.
SCHUR_MARGIN = 1e-9


def _as_matrix(value, rows: int, cols: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (rows, cols):
        raise ShapeError(f"{name} must be {rows}x{cols}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def spectral_radius(matrix: np.ndarray) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    return float(np.max(np.abs(np.linalg.eigvals(matrix))))


@dataclass(frozen=True)
class UncertainFamily:
    """Affine family of discrete-time linear systems.

    ``delta_bounds`` and ``gamma_bounds`` are ``(lo, hi)`` pairs, one per
    uncertainty term; every interval must be nonempty and bounded.
    """

    n: int
    m: int
    A0: np.ndarray
    A_terms: tuple[np.ndarray, ...]
    B0: np.ndarray
    B_terms: tuple[np.ndarray, ...]
    delta_bounds: tuple[tuple[float, float], ...]
    gamma_bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValidationError("state and input dimensions must be positive")
        object.__setattr__(self, "A0", _as_matrix(self.A0, self.n, self.n, "A0"))
        object.__setattr__(self, "B0", _as_matrix(self.B0, self.n, self.m, "B0"))
        object.__setattr__(
            self,
            "A_terms",
            tuple(
                _as_matrix(t, self.n, self.n, f"A_terms[{k}]")
                for k, t in enumerate(self.A_terms)
            ),
        )
        object.__setattr__(
            self,
            "B_terms",
            tuple(
                _as_matrix(t, self.n, self.m, f"B_terms[{k}]")
                for k, t in enumerate(self.B_terms)
            ),
        )
        for label, bounds, count in (
            ("delta_bounds", self.delta_bounds, len(self.A_terms)),
            ("gamma_bounds", self.gamma_bounds, len(self.B_terms)),
        ):
            bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
            if len(bounds) != count:
                raise ValidationError(
                    f"{label} has {len(bounds)} intervals for {count} terms"
                )
            for lo, hi in bounds:
                if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
                    raise ValidationError(
                        f"{label} interval [{lo}, {hi}] is empty or unbounded"
                    )
            object.__setattr__(self, label, bounds)

    @property
    def num_delta(self) -> int:
        return len(self.A_terms)

    @property
    def num_gamma(self) -> int:
        return len(self.B_terms)


@dataclass(frozen=True)
class LinearSystem:
    """One realization x_{t+1} = A x_t + B u_t of a family.

    ``provenance`` records how the realization was produced (uncertainty
    values and seed) so files can be regenerated bit-for-bit.
    """

    n: int
    m: int
    A: np.ndarray
    B: np.ndarray
    id: int = 0
    provenance: dict | None = None

    def __post_init__(self):
        object.__setattr__(self, "A", _as_matrix(self.A, self.n, self.n, "A"))
        object.__setattr__(self, "B", _as_matrix(self.B, self.n, self.m, "B"))


@dataclass(frozen=True)
class Policy:
    """Static feedback gain applied as u = -K x."""

    K: np.ndarray
    meta: dict | None = None

    def __post_init__(self):
        arr = np.asarray(self.K, dtype=float)
        if arr.ndim != 2:
            raise ShapeError(f"K must be a matrix, got ndim {arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("K contains non-finite entries")
        object.__setattr__(self, "K", arr)

    @property
    def m(self) -> int:
        return self.K.shape[0]

    @property
    def n(self) -> int:
        return self.K.shape[1]


@dataclass(frozen=True)
class InitialStateSpec:
    """Distribution of the initial state x0.

    ``uniform-box`` draws each coordinate independently from
    ``unif(low_i, high_i)``; ``fixed-covariance`` draws a zero-mean
    Gaussian with the given covariance.  ``second_moment`` returns
    E[x0 x0^T], which must be positive definite.
    """

    kind: str
    low: np.ndarray | None = None
    high: np.ndarray | None = None
    covariance: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "uniform-box":
            if self.low is None or self.high is None:
                raise ValidationError("uniform-box spec needs low and high")
            low = np.asarray(self.low, dtype=float).reshape(-1)
            high = np.asarray(self.high, dtype=float).reshape(-1)
            if low.shape != high.shape:
                raise ShapeError("low and high must have the same length")
            if not np.all(high > low):
                raise ValidationError("uniform-box needs high > low per coordinate")
            object.__setattr__(self, "low", low)
            object.__setattr__(self, "high", high)
        elif self.kind == "fixed-covariance":
            if self.covariance is None:
                raise ValidationError("fixed-covariance spec needs a covariance")
            cov = np.asarray(self.covariance, dtype=float)
            n = cov.shape[0]
            cov = _as_matrix(cov, n, n, "covariance")
            if np.linalg.norm(cov - cov.T) > 1e-12 * (1 + np.linalg.norm(cov)):
                raise ValidationError("covariance must be symmetric")
            if np.min(np.linalg.eigvalsh(cov)) <= 0:
                raise ValidationError("covariance must be positive definite")
            object.__setattr__(self, "covariance", cov)
        else:
            raise ValidationError(f"unknown initial-state kind {self.kind!r}")

    @property
    def n(self) -> int:
        return len(self.low) if self.kind == "uniform-box" else self.covariance.shape[0]

    def second_moment(self) -> np.ndarray:
        """E[x0 x0^T]; for a box this is diag((hi-lo)^2/12) + mu mu^T."""
        if self.kind == "fixed-covariance":
            return self.covariance.copy()
        mean = 0.5 * (self.low + self.high)
        var = (self.high - self.low) ** 2 / 12.0
        return np.diag(var) + np.outer(mean, mean)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Draw ``count`` initial states, one per row."""
        if self.kind == "uniform-box":
            return rng.uniform(self.low, self.high, size=(count, self.n))
        chol = np.linalg.cholesky(self.covariance)
        return rng.standard_normal((count, self.n)) @ chol.T


def sample_realization(
    family: UncertainFamily,
    delta: Sequence[float],
    gamma: Sequence[float],
    id: int = 0,
    provenance: dict | None = None,
) -> LinearSystem:
    """Instantiate the family at given uncertainty values.

    Raises :class:`BoundsViolationError` when any component leaves its
    interval and :class:`ShapeError` on length mismatch.
    """
    delta = np.asarray(delta, dtype=float).reshape(-1)
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    if delta.shape[0] != family.num_delta:
        raise ShapeError(
            f"delta has {delta.shape[0]} components, family expects {family.num_delta}"
        )
    if gamma.shape[0] != family.num_gamma:
        raise ShapeError(
            f"gamma has {gamma.shape[0]} components, family expects {family.num_gamma}"
        )
    for k, (value, (lo, hi)) in enumerate(zip(delta, family.delta_bounds)):
        if not (lo <= value <= hi):
            raise BoundsViolationError(f"delta[{k}]={value} outside [{lo}, {hi}]")
    for k, (value, (lo, hi)) in enumerate(zip(gamma, family.gamma_bounds)):
        if not (lo <= value <= hi):
            raise BoundsViolationError(f"gamma[{k}]={value} outside [{lo}, {hi}]")
    A = family.A0.copy()
    for value, term in zip(delta, family.A_terms):
        A += value * term
    B = family.B0.copy()
    for value, term in zip(gamma, family.B_terms):
        B += value * term
    if provenance is None:
        provenance = {"delta": delta.tolist(), "gamma": gamma.tolist(), "seed": None}
    return LinearSystem(family.n, family.m, A, B, id=id, provenance=provenance)


def sample_realizations(
    family: UncertainFamily, count: int, rng_seed: int | Sequence[int]
) -> list[LinearSystem]:
    """Draw ``count`` realizations with i.i.d. uniform uncertainties.

    The generator is keyed by ``rng_seed`` (an int, or a tuple for a
    derived stream); repeated calls with the same seed are
    bit-identical.  Labels run 0..count-1.
    """
    if count < 1:
        raise ValidationError("count must be at least 1")
    parts = (rng_seed,) if isinstance(rng_seed, (int, np.integer)) else tuple(rng_seed)
    rng = make_rng(*parts)
    systems = []
    for i in range(count):
        delta = np.array(
            [rng.uniform(lo, hi) for lo, hi in family.delta_bounds]
        )
        gamma = np.array(
            [rng.uniform(lo, hi) for lo, hi in family.gamma_bounds]
        )
        provenance = {
            "delta": delta.tolist(),
            "gamma": gamma.tolist(),
            "seed": list(parts) if len(parts) > 1 else parts[0],
        }
        systems.append(
            sample_realization(family, delta, gamma, id=i, provenance=provenance)
        )
    return systems


def closed_loop(system: LinearSystem, policy: Policy) -> np.ndarray:
    """Closed-loop matrix A - B K."""
    if policy.K.shape != (system.m, system.n):
        raise ShapeError(
            f"policy is {policy.K.shape}, system expects {(system.m, system.n)}"
        )
    return system.A - system.B @ policy.K


def is_stabilizing(system: LinearSystem, policy: Policy) -> bool:
    """True when the closed-loop spectral radius is below 1 - margin."""
    return spectral_radius(closed_loop(system, policy)) < 1.0 - SCHUR_MARGIN


@dataclass(frozen=True)
class Trajectory:
    """Finite-horizon rollout: (T+1) states, T inputs, T stage costs."""

    states: np.ndarray
    inputs: np.ndarray
    stage_costs: np.ndarray | None = None


def rollout(
    system: LinearSystem,
    policy: Policy,
    x0: np.ndarray,
    horizon: int,
    cost=None,
) -> Trajectory:
    """Simulate x_{t+1} = (A - B K) x_t for ``horizon`` steps.

    Unstable policies are allowed; trajectories may grow.  Stage costs
    x^T Q x + u^T R u are filled in when a quadratic cost is supplied.
    """
    if horizon < 1:
        raise ValidationError("horizon must be at least 1")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != system.n:
        raise ShapeError(f"x0 has length {x0.shape[0]}, expected {system.n}")
    Acl = closed_loop(system, policy)
    states = np.empty((horizon + 1, system.n))
    inputs = np.empty((horizon, system.m))
    stage = np.empty(horizon) if cost is not None else None
    states[0] = x0
    for t in range(horizon):
        u = -policy.K @ states[t]
        inputs[t] = u
        if cost is not None:
            stage[t] = states[t] @ cost.Q @ states[t] + u @ cost.R @ u
        states[t + 1] = Acl @ states[t]
    return Trajectory(states=states, inputs=inputs, stage_costs=stage)
