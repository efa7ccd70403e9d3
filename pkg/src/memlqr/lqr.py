"""Infinite-horizon LQR cost, gradients, and policy-gradient descent.

For a stabilizing gain K with closed loop L = A - B K the cost of
u = -K x from random x0 with second moment Sigma0 is

    C(K) = trace((Q + K^T R K) Sigma_K) = trace(P_K Sigma0)

where P_K and Sigma_K solve the discrete Lyapunov fixed points

    P     = Q + K^T R K + L^T P L
    Sigma = Sigma0 + L Sigma L^T

and the exact policy gradient is

    grad C(K) = 2 [(R + B^T P B) K - B^T P A] Sigma.

Both Lyapunov equations are solved directly through the Kronecker
vectorization (n^2 unknowns), with fixed-point iteration as a fallback;
a zeroth-order estimator provides the model-free gradient oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal, Sequence

import numpy as np

from .exceptions import (
    InstabilityError,
    NumericalError,
    ShapeError,
    StabilizabilityError,
    StallError,
    ValidationError,
)
from .linsys import (
    SCHUR_MARGIN,
    InitialStateSpec,
    LinearSystem,
    Policy,
    spectral_radius,
)
from .seeds import make_rng

_LYAPUNOV_RTOL = 1e-10
_TRACE_IDENTITY_RTOL = 1e-8
_DARE_TOL = 1e-13
_DARE_MAX_ITERS = 100_000
_STEP_FLOOR = 1e-12


def _gain(policy) -> np.ndarray:
    """Accept a Policy or a raw gain matrix."""
    K = policy.K if isinstance(policy, Policy) else np.asarray(policy, dtype=float)
    if K.ndim != 2:
        raise ShapeError(f"gain must be a matrix, got ndim {K.ndim}")
    return K


def _check_symmetric(M: np.ndarray, name: str) -> np.ndarray:
    if np.linalg.norm(M - M.T, "fro") > 1e-12 * (1 + np.linalg.norm(M, "fro")):
        raise ValidationError(f"{name} must be symmetric")
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class QuadraticCost:
    """Stage cost x^T Q x + u^T R u plus initial-state second moment."""

    Q: np.ndarray
    R: np.ndarray
    sigma0: np.ndarray

    def __post_init__(self):
        Q = _check_symmetric(np.asarray(self.Q, dtype=float), "Q")
        R = _check_symmetric(np.asarray(self.R, dtype=float), "R")
        sigma0 = _check_symmetric(np.asarray(self.sigma0, dtype=float), "sigma0")
        if sigma0.shape != Q.shape:
            raise ShapeError("sigma0 must match Q in shape")
        if np.min(np.linalg.eigvalsh(Q)) < -1e-12 * (1 + np.abs(Q).max()):
            raise ValidationError("Q must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(R)) <= 0:
            raise ValidationError("R must be positive definite")
        if np.min(np.linalg.eigvalsh(sigma0)) <= 0:
            raise ValidationError("sigma0 must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "sigma0", sigma0)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.R.shape[0]


@dataclass(frozen=True)
class CostReport:
    """Outcome of one cost evaluation.

    ``value`` is +inf exactly when ``stable`` is false, in which case the
    value matrix and state correlation are absent.
    """

    value: float
    P: np.ndarray | None
    Sigma: np.ndarray | None
    stable: bool
    spectral_radius: float


@dataclass(frozen=True)
class ZerothOrderConfig:
    """Knobs of the model-free gradient estimator.

    ``baseline`` subtracts the unperturbed-policy cost measured from the
    same start state (a control variate; leaves the mean untouched and
    collapses the variance enough for desk-scale sample counts).
    """

    num_samples: int = 200
    smoothing_radius: float = 0.05
    rollout_horizon: int = 100
    rng_seed: int = 0
    baseline: bool = True

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValidationError("num_samples must be at least 1")
        if self.smoothing_radius <= 0:
            raise ValidationError("smoothing_radius must be positive")
        if self.rollout_horizon < 1:
            raise ValidationError("rollout_horizon must be at least 1")


GradientMode = ZerothOrderConfig | Literal["exact"]


def _lyapunov_direct(M: np.ndarray, rhs: np.ndarray, n: int) -> np.ndarray:
    X = np.linalg.solve(M, rhs.reshape(-1)).reshape(n, n)
    return 0.5 * (X + X.T)


def _lyapunov_fixed_point(
    update: Callable[[np.ndarray], np.ndarray], start: np.ndarray, tol: float = 1e-14
) -> np.ndarray:
    X = start.copy()
    for _ in range(200_000):
        Xn = update(X)
        if not np.all(np.isfinite(Xn)):
            break
        if np.linalg.norm(Xn - X, "fro") <= tol * (1 + np.linalg.norm(Xn, "fro")):
            return 0.5 * (Xn + Xn.T)
        X = Xn
    return 0.5 * (X + X.T)


def _lyapunov_residual(X: np.ndarray, update_of_X: np.ndarray) -> float:
    return float(np.linalg.norm(X - update_of_X, "fro"))


def _solve_lyapunov(
    Acl: np.ndarray, rhs: np.ndarray, transpose: bool, n: int
) -> np.ndarray:
    """Solve X = rhs + Acl^T X Acl (transpose=True) or X = rhs + Acl X Acl^T.

    Direct Kronecker solve first; fixed-point iteration as fallback.
    Raises NumericalError with the residual when neither meets tolerance.
    """
    M = np.eye(n * n) - np.kron(Acl, Acl)
    if transpose:
        update = lambda X: rhs + Acl.T @ X @ Acl
        X = _lyapunov_direct(M.T, rhs, n)
    else:
        update = lambda X: rhs + Acl @ X @ Acl.T
        X = _lyapunov_direct(M, rhs, n)
    tol = _LYAPUNOV_RTOL * (1 + np.linalg.norm(X, "fro"))
    residual = _lyapunov_residual(X, update(X))
    if residual <= tol:
        return X
    X = _lyapunov_fixed_point(update, rhs)
    residual = _lyapunov_residual(X, update(X))
    if residual <= _LYAPUNOV_RTOL * (1 + np.linalg.norm(X, "fro")):
        return X
    raise NumericalError(
        f"Lyapunov solve failed: residual {residual:.3e}", residual=residual
    )


def _require_stabilizing(system: LinearSystem, K: np.ndarray) -> np.ndarray:
    Acl = system.A - system.B @ K
    if spectral_radius(Acl) >= 1.0 - SCHUR_MARGIN:
        raise InstabilityError(
            f"policy does not stabilize system {system.id}: "
            f"spectral radius {spectral_radius(Acl):.6f}"
        )
    return Acl


def solve_value_matrix(system: LinearSystem, cost: QuadraticCost, policy) -> np.ndarray:
    """Value matrix P of the recursion P = Q + K^T R K + L^T P L."""
    K = _gain(policy)
    Acl = _require_stabilizing(system, K)
    return _solve_lyapunov(Acl, cost.Q + K.T @ cost.R @ K, transpose=True, n=system.n)


def solve_state_correlation(
    system: LinearSystem, cost: QuadraticCost, policy
) -> np.ndarray:
    """State correlation Sigma of Sigma = Sigma0 + L Sigma L^T."""
    K = _gain(policy)
    Acl = _require_stabilizing(system, K)
    return _solve_lyapunov(Acl, cost.sigma0, transpose=False, n=system.n)


def lqr_cost(system: LinearSystem, cost: QuadraticCost, policy) -> CostReport:
    """Evaluate the infinite-horizon cost; instability yields +inf.

    The two closed-form expressions trace((Q + K^T R K) Sigma) and
    trace(P Sigma0) are both computed and must agree to 1e-8 relative.
    """
    K = _gain(policy)
    Acl = system.A - system.B @ K
    rho = spectral_radius(Acl)
    if rho >= 1.0 - SCHUR_MARGIN:
        return CostReport(np.inf, None, None, False, rho)
    Qeff = cost.Q + K.T @ cost.R @ K
    Sigma = _solve_lyapunov(Acl, cost.sigma0, transpose=False, n=system.n)
    P = _solve_lyapunov(Acl, Qeff, transpose=True, n=system.n)
    value = float(np.sum(Qeff * Sigma))
    alt = float(np.sum(P * cost.sigma0))
    if abs(value - alt) > _TRACE_IDENTITY_RTOL * (1 + abs(value)):
        raise NumericalError(
            f"cost trace identity violated: {value} vs {alt}",
            residual=abs(value - alt),
        )
    return CostReport(value, P, Sigma, True, rho)


def cost_value(system: LinearSystem, cost: QuadraticCost, K: np.ndarray) -> float:
    """Scalar cost only (single Lyapunov solve); +inf when unstable."""
    Acl = system.A - system.B @ K
    if spectral_radius(Acl) >= 1.0 - SCHUR_MARGIN:
        return np.inf
    Sigma = _solve_lyapunov(Acl, cost.sigma0, transpose=False, n=system.n)
    return float(np.sum((cost.Q + K.T @ cost.R @ K) * Sigma))


def cost_and_gradient(
    system: LinearSystem, cost: QuadraticCost, K: np.ndarray
) -> tuple[float, np.ndarray | None]:
    """Cost and exact gradient in one pass; (+inf, None) when unstable."""
    Acl = system.A - system.B @ K
    if spectral_radius(Acl) >= 1.0 - SCHUR_MARGIN:
        return np.inf, None
    Qeff = cost.Q + K.T @ cost.R @ K
    Sigma = _solve_lyapunov(Acl, cost.sigma0, transpose=False, n=system.n)
    P = _solve_lyapunov(Acl, Qeff, transpose=True, n=system.n)
    value = float(np.sum(Qeff * Sigma))
    grad = 2.0 * ((cost.R + system.B.T @ P @ system.B) @ K - system.B.T @ P @ system.A) @ Sigma
    return value, grad


def exact_gradient(system: LinearSystem, cost: QuadraticCost, policy) -> np.ndarray:
    """Exact policy gradient 2[(R + B^T P B)K - B^T P A] Sigma."""
    K = _gain(policy)
    _require_stabilizing(system, K)
    _, grad = cost_and_gradient(system, cost, K)
    return grad


def _batched_finite_costs(
    system: LinearSystem,
    cost: QuadraticCost,
    gains: np.ndarray,
    x0: np.ndarray,
    horizon: int,
) -> np.ndarray:
    """Finite-horizon costs of a stack of gains from matching start states.

    ``gains`` has shape (J, m, n), ``x0`` shape (J, n); returns (J,)."""
    Acl = system.A[None, :, :] - np.einsum("ab,jbc->jac", system.B, gains)
    x = x0.copy()
    total = np.zeros(x0.shape[0])
    for _ in range(horizon):
        u = -np.einsum("jmn,jn->jm", gains, x)
        total += np.einsum("jn,nk,jk->j", x, cost.Q, x)
        total += np.einsum("jm,mk,jk->j", u, cost.R, u)
        x = np.einsum("jab,jb->ja", Acl, x)
    return total


def zeroth_order_gradient(
    system: LinearSystem,
    cost: QuadraticCost,
    policy,
    config: ZerothOrderConfig,
    init_state: InitialStateSpec | None = None,
) -> np.ndarray:
    """Model-free gradient estimate from randomly perturbed rollouts.

    Each sample perturbs the gain by U_j, uniform on the Frobenius sphere
    of radius r, and measures the finite-horizon cost from a fresh start
    state; the estimate is (d / (J r^2)) * sum_j w_j U_j with d = m*n and
    w_j the (baseline-subtracted) sampled cost.  Start states default to
    a Gaussian with the cost's second moment; only that moment enters the
    estimator's mean because the cost is quadratic in x0.

    Sample j at retry a draws from the stream (rng_seed, j, a), so serial
    and parallel evaluation orders coincide.  A perturbation whose
    sampled cost overflows is rejected and redrawn; more than
    10*num_samples rejections raise NumericalError.
    """
    K = _gain(policy)
    _require_stabilizing(system, K)
    m, n = K.shape
    d = m * n
    r = config.smoothing_radius
    J = config.num_samples
    chol = None if init_state is not None else np.linalg.cholesky(cost.sigma0)

    def draw(j: int, attempt: int) -> tuple[np.ndarray, np.ndarray]:
        rng = make_rng(config.rng_seed, j, attempt)
        U = rng.standard_normal((m, n))
        U *= r / np.linalg.norm(U)
        if init_state is not None:
            x0 = init_state.sample(rng, 1)[0]
        else:
            x0 = chol @ rng.standard_normal(n)
        return U, x0

    attempts = np.zeros(J, dtype=int)
    perturbations = np.empty((J, m, n))
    starts = np.empty((J, n))
    for j in range(J):
        perturbations[j], starts[j] = draw(j, 0)
    pending = np.arange(J)
    rejections = 0
    weights = np.empty(J)
    while pending.size:
        gains = K[None, :, :] + perturbations[pending]
        sampled = _batched_finite_costs(system, cost, gains, starts[pending], config.rollout_horizon)
        if config.baseline:
            base = _batched_finite_costs(
                system,
                cost,
                np.broadcast_to(K, (pending.size, m, n)),
                starts[pending],
                config.rollout_horizon,
            )
            sampled = sampled - base
        finite = np.isfinite(sampled)
        weights[pending[finite]] = sampled[finite]
        rejected = pending[~finite]
        rejections += rejected.size
        if rejections > 10 * J:
            raise NumericalError(
                f"zeroth-order estimator rejected {rejections} perturbations"
            )
        for j in rejected:
            attempts[j] += 1
            perturbations[j], starts[j] = draw(j, attempts[j])
        pending = rejected
    return (d / (J * r * r)) * np.einsum("j,jmn->mn", weights, perturbations)


def solve_dare(system: LinearSystem, cost: QuadraticCost) -> Policy:
    """Optimal gain via Riccati value iteration run to 1e-13.

    Non-convergence within 1e5 sweeps raises StabilizabilityError.
    """
    A, B, Q, R = system.A, system.B, cost.Q, cost.R
    P = Q.copy()
    for _ in range(_DARE_MAX_ITERS):
        BtPB = B.T @ P @ B
        BtPA = B.T @ P @ A
        Pn = Q + A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(cost.R + BtPB, BtPA)
        Pn = 0.5 * (Pn + Pn.T)
        # abs-max guard: the Frobenius norm itself overflows near 1e154
        if not np.all(np.isfinite(Pn)) or np.abs(Pn).max() > 1e150:
            raise StabilizabilityError("Riccati iteration diverged")
        if np.linalg.norm(Pn - P, "fro") <= _DARE_TOL * (1 + np.linalg.norm(Pn, "fro")):
            P = Pn
            break
        P = Pn
    else:
        raise StabilizabilityError(
            f"Riccati iteration did not converge in {_DARE_MAX_ITERS} sweeps"
        )
    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    return Policy(K, meta={"algorithm": "dare", "system": system.id})


def _make_gradient_fn(
    system: LinearSystem,
    cost: QuadraticCost,
    gradient_mode: GradientMode,
    init_state: InitialStateSpec | None = None,
):
    """Per-iterate gradient oracle; returns callable (K, t) -> gradient."""
    if isinstance(gradient_mode, ZerothOrderConfig):
        from dataclasses import replace

        from .seeds import derive_seed

        def grad(K: np.ndarray, t: int) -> np.ndarray:
            cfg = replace(gradient_mode, rng_seed=derive_seed(gradient_mode.rng_seed, t))
            return zeroth_order_gradient(system, cost, K, cfg, init_state=init_state)

        return grad
    if gradient_mode != "exact":
        raise ValidationError(f"unknown gradient mode {gradient_mode!r}")

    def grad(K: np.ndarray, t: int) -> np.ndarray:
        _, g = cost_and_gradient(system, cost, K)
        if g is None:
            raise InstabilityError(f"iterate destabilized system {system.id}")
        return g

    return grad


def descend(
    grad_fn,
    cost_fn,
    K0: np.ndarray,
    step: float,
    iters: int,
    enforce_decrease: bool,
    on_iterate=None,
) -> tuple[np.ndarray, list[float]]:
    """Safeguarded gradient iteration shared by every trainer.

    A trial step is rejected (and the step halved, permanently) when the
    trial cost is infinite, or, with ``enforce_decrease``, when it
    exceeds the current cost beyond round-off slack.  A step below 1e-12
    raises StallError carrying the last iterate.  ``on_iterate(t, K,
    value, grad)`` fires once per iteration before the step is taken.
    """
    K = np.asarray(K0, dtype=float).copy()
    value = cost_fn(K)
    if not np.isfinite(value):
        raise InstabilityError("initial policy has infinite cost")
    eta = float(step)
    trace = [value]
    for t in range(iters):
        g = grad_fn(K, t)
        if on_iterate is not None:
            on_iterate(t, K, value, g)
        while True:
            trial = K - eta * g
            trial_value = cost_fn(trial)
            acceptable = np.isfinite(trial_value) and (
                not enforce_decrease
                or trial_value <= value + 1e-12 * (1 + abs(value))
            )
            if acceptable:
                break
            eta *= 0.5
            if eta < _STEP_FLOOR:
                raise StallError(
                    "step size underflowed", last_iterate=K
                )
        K, value = trial, trial_value
        trace.append(value)
    return K, trace


def policy_gradient_descent(
    system: LinearSystem,
    cost: QuadraticCost,
    K_init,
    step: float,
    iters: int,
    gradient_mode: GradientMode = "exact",
    init_state: InitialStateSpec | None = None,
) -> tuple[Policy, list[float]]:
    """Gradient descent K <- K - eta * grad C(K) on one system.

    With exact gradients the returned cost trace is non-increasing; in
    zeroth-order mode only destabilizing steps are rejected.
    """
    K0 = _gain(K_init)
    exact = not isinstance(gradient_mode, ZerothOrderConfig)
    grad_fn = _make_gradient_fn(system, cost, gradient_mode, init_state)
    cost_fn = lambda K: cost_value(system, cost, K)
    K, trace = descend(grad_fn, cost_fn, K0, step, iters, enforce_decrease=exact)
    meta = {
        "algorithm": "policy-gradient",
        "iterations": iters,
        "mode": "exact" if exact else "zeroth-order",
    }
    return Policy(K, meta=meta), trace


@dataclass(frozen=True)
class AnalysisConstants:
    """Empirical estimates of the quantities the convergence theory uses.

    ``mu`` is the smallest gradient-domination constant valid on the
    probe set, ``ell_bar`` the local smoothness over probe pairs within
    radius ``zeta``, ``sigma_het`` the heterogeneity of per-system
    gradients around their mean (``sigma_het_sum``: around their sum),
    and ``L_lambda = ell_bar / (kappa - 1)`` the envelope smoothness for
    regularity ratio ``kappa``.  When the regularization weight does not
    exceed ``ell_bar`` the ratio is clamped to 2 (``smoothness_ok``
    records whether clamping was needed).  Estimates only; never treated
    as ground truth.
    """

    mu: float
    ell_bar: float
    L_lambda: float
    kappa: float
    sigma_het: float
    zeta: float
    sigma_het_sum: float = 0.0
    smoothness_ok: bool = True

    def __post_init__(self):
        for name in ("mu", "ell_bar", "L_lambda", "kappa", "zeta"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.kappa <= 1:
            raise ValidationError("kappa must exceed 1")


def estimate_analysis_constants(
    systems: Sequence[LinearSystem],
    cost: QuadraticCost,
    probe_policies: Sequence,
    lam: float = 0.2,
) -> AnalysisConstants:
    """Estimate smoothness, gradient-domination, and heterogeneity bounds.

    Every probe must stabilize every system.  The heterogeneity bound is
    reported both against the mean gradient and against the summed
    gradient of the aggregate cost.
    """
    if not probe_policies:
        raise ValidationError("probe_policies must be nonempty")
    if not systems:
        raise ValidationError("systems must be nonempty")
    gains = [_gain(p) for p in probe_policies]
    V, M = len(systems), len(gains)
    values = np.empty((V, M))
    grads = np.empty((V, M) + gains[0].shape)
    for i, system in enumerate(systems):
        for p, K in enumerate(gains):
            _require_stabilizing(system, K)
            values[i, p], grads[i, p] = cost_and_gradient(system, cost, K)

    optima = [solve_dare(system, cost) for system in systems]
    opt_values = np.array(
        [cost_value(system, cost, opt.K) for system, opt in zip(systems, optima)]
    )

    ratios = []
    for i in range(V):
        for p in range(M):
            gsq = float(np.sum(grads[i, p] ** 2))
            if gsq > 1e-18:
                ratios.append(2.0 * max(values[i, p] - opt_values[i], 0.0) / gsq)
    if not ratios:
        raise ValidationError("probe set uninformative: all gradients vanish")
    mu = max(max(ratios), 1e-12)

    sigma_min_q = float(np.min(np.linalg.eigvalsh(cost.Q)))
    zeta = np.inf
    for i, system in enumerate(systems):
        norm_b = np.linalg.norm(system.B, 2)
        for p, K in enumerate(gains):
            closed = np.linalg.norm(system.A - system.B @ K, 2)
            radius = sigma_min_q / (4 * values[i, p] * norm_b * (closed + 1))
            zeta = min(zeta, radius, max(np.linalg.norm(K, 2), 1e-12))
    zeta = float(zeta)

    quotients_within = []
    quotients_all = []
    for i in range(V):
        for p in range(M):
            for q in range(p + 1, M):
                dist = float(np.linalg.norm(gains[p] - gains[q], "fro"))
                if dist < 1e-14:
                    continue
                quotient = (
                    float(np.linalg.norm(grads[i, p] - grads[i, q], "fro")) / dist
                )
                quotients_all.append(quotient)
                if dist <= zeta:
                    quotients_within.append(quotient)
    pool = quotients_within or quotients_all
    if not pool:
        raise ValidationError("need at least two distinct probe policies")
    ell_bar = max(max(pool), 1e-12)

    dev_mean = 0.0
    dev_sum = 0.0
    for p in range(M):
        mean_grad = grads[:, p].mean(axis=0)
        sum_grad = grads[:, p].sum(axis=0)
        dev_mean = max(
            dev_mean, float(np.mean(np.sum((grads[:, p] - mean_grad) ** 2, axis=(1, 2))))
        )
        dev_sum = max(
            dev_sum, float(np.mean(np.sum((grads[:, p] - sum_grad) ** 2, axis=(1, 2))))
        )

    smoothness_ok = lam > ell_bar * (1 + 1e-9)
    kappa = lam / ell_bar if smoothness_ok else 2.0
    L_lambda = ell_bar / (kappa - 1.0)
    return AnalysisConstants(
        mu=mu,
        ell_bar=ell_bar,
        L_lambda=L_lambda,
        kappa=kappa,
        sigma_het=float(np.sqrt(dev_mean)),
        zeta=zeta,
        sigma_het_sum=float(np.sqrt(dev_sum)),
        smoothness_ok=smoothness_ok,
    )
