"""Moreau-envelope machinery: inner proximal solves and envelope calculus.

For one system with cost C and regularization weight lam > 0 the
envelope of C anchored at K is

    env(K) = min_Ktilde  C(Ktilde) + (lam/2) ||Ktilde - K||_F^2

whose minimizer is the proximal point prox(K) and whose gradient is
lam * (K - prox(K)).  The inner problem is solved by gradient descent
with Armijo backtracking; a gradient-norm stopping rule at lam*delta/2
certifies the proximal point to accuracy delta whenever lam dominates
the local smoothness of C.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import InstabilityError, NumericalError, ValidationError
from .linsys import LinearSystem
from .lqr import QuadraticCost, ZerothOrderConfig, cost_and_gradient, cost_value, zeroth_order_gradient
from .seeds import derive_seed

logger = logging.getLogger(__name__)

_ARMIJO_FACTOR = 0.5
_ARMIJO_SLOPE = 1e-4
_ARMIJO_FLOOR = 1e-14


@dataclass(frozen=True)
class MoreauConfig:
    """Inner-problem accuracy and step-size settings.

    ``inner_tolerance`` is the proximal accuracy delta: iterations stop
    once the inner gradient residual falls below lam * delta / 2.
    """

    lam: float = 0.2
    inner_tolerance: float = 1e-4
    inner_max_iters: int = 500
    inner_step: float = 0.1

    def __post_init__(self):
        if self.lam <= 0:
            raise ValidationError("lam must be positive")
        if self.inner_tolerance <= 0:
            raise ValidationError("inner_tolerance must be positive")
        if self.inner_max_iters < 1:
            raise ValidationError("inner_max_iters must be at least 1")
        if self.inner_step <= 0:
            raise ValidationError("inner_step must be positive")

    @property
    def residual_threshold(self) -> float:
        return 0.5 * self.lam * self.inner_tolerance


def regularization_condition_met(lam: float, ell_hat: float) -> bool:
    """Whether lam clears the 2*sqrt(2) multiple of the smoothness estimate.

    The heterogeneity-transfer analysis wants lam > 2*sqrt(2)*ell; small
    lam values remain usable in practice, so callers log a warning rather
    than fail when this returns False.
    """
    return lam > 2.0 * np.sqrt(2.0) * ell_hat


def warn_if_weak_regularization(lam: float, ell_hat: float) -> bool:
    """Log and return True when the regularization condition fails."""
    if not regularization_condition_met(lam, ell_hat):
        logger.warning(
            "regularization weight %.4g is below 2*sqrt(2)*ell_hat = %.4g; "
            "heterogeneity-transfer guarantees do not apply",
            lam,
            2.0 * np.sqrt(2.0) * ell_hat,
        )
        return True
    return False


@dataclass(frozen=True)
class ProxResult:
    """Approximate proximal point with its accuracy certificate.

    ``inner_residual`` is the norm of the inner gradient
    grad C(K_bar) + lam (K_bar - K) at the returned point; ``converged``
    means it met the stopping threshold.  ``envelope_value`` is the inner
    objective at K_bar, an upper bound on the true envelope that never
    exceeds the anchor's own cost.
    """

    K_bar: np.ndarray
    inner_residual: float
    iterations_used: int
    envelope_value: float
    converged: bool


def inner_objective(
    system: LinearSystem,
    cost: QuadraticCost,
    K_tilde: np.ndarray,
    anchor: np.ndarray,
    lam: float,
) -> float:
    """C(K_tilde) + (lam/2) ||K_tilde - anchor||^2; +inf when unstable."""
    K_tilde = np.asarray(K_tilde, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    value = cost_value(system, cost, K_tilde)
    if not np.isfinite(value):
        return np.inf
    gap = K_tilde - anchor
    return value + 0.5 * lam * float(np.sum(gap * gap))


def prox(
    system: LinearSystem,
    cost: QuadraticCost,
    anchor,
    config: MoreauConfig,
    gradient_mode: ZerothOrderConfig | str = "exact",
) -> ProxResult:
    """Approximate the proximal point by inner gradient descent.

    Starts at the anchor and descends the inner objective with the
    gradient grad C(Ktilde) + lam (Ktilde - anchor).  In exact mode an
    Armijo line search keeps the objective non-increasing; a trial point
    with infinite objective is rejected outright.  In zeroth-order mode
    the cost gradient is estimated and a fixed step is used (halved only
    on destabilization), since noisy objectives make a line search
    meaningless.
    """
    anchor = np.asarray(
        anchor.K if hasattr(anchor, "K") else anchor, dtype=float
    ).copy()
    lam = config.lam
    exact = not isinstance(gradient_mode, ZerothOrderConfig)
    K = anchor.copy()
    value = cost_value(system, cost, K)
    if not np.isfinite(value):
        raise InstabilityError(
            f"anchor does not stabilize system {system.id}; prox undefined"
        )
    objective = value  # regularizer vanishes at the anchor
    threshold = config.residual_threshold
    step = config.inner_step
    residual = np.inf
    iterations = 0
    for iterations in range(config.inner_max_iters):
        if exact:
            _, cost_grad = cost_and_gradient(system, cost, K)
            if cost_grad is None:
                raise InstabilityError(
                    f"inner iterate destabilized system {system.id}"
                )
        else:
            seeded = ZerothOrderConfig(
                num_samples=gradient_mode.num_samples,
                smoothing_radius=gradient_mode.smoothing_radius,
                rollout_horizon=gradient_mode.rollout_horizon,
                rng_seed=derive_seed(gradient_mode.rng_seed, iterations),
                baseline=gradient_mode.baseline,
            )
            cost_grad = zeroth_order_gradient(system, cost, K, seeded)
        grad = cost_grad + lam * (K - anchor)
        residual = float(np.linalg.norm(grad, "fro"))
        if residual <= threshold:
            return ProxResult(K, residual, iterations, objective, True)
        if exact:
            trial_step = min(config.inner_step, 2.0 * step)
            slope = _ARMIJO_SLOPE * residual * residual
            while True:
                trial = K - trial_step * grad
                trial_objective = inner_objective(system, cost, trial, anchor, lam)
                if np.isfinite(trial_objective) and (
                    trial_objective <= objective - trial_step * slope
                ):
                    break
                trial_step *= _ARMIJO_FACTOR
                if trial_step < _ARMIJO_FLOOR:
                    raise NumericalError(
                        "inner line search stalled",
                        residual=residual,
                        last_iterate=K,
                    )
            K, objective, step = trial, trial_objective, trial_step
        else:
            trial_step = step
            while True:
                trial = K - trial_step * grad
                trial_objective = inner_objective(system, cost, trial, anchor, lam)
                if np.isfinite(trial_objective):
                    break
                trial_step *= _ARMIJO_FACTOR
                if trial_step < _ARMIJO_FLOOR:
                    # Stuck against the stability boundary; keep the
                    # current iterate rather than abort a noisy run.
                    return ProxResult(K, residual, iterations, objective, False)
            K, objective = trial, trial_objective
    return ProxResult(K, residual, config.inner_max_iters, objective, False)


def envelope_value(
    system: LinearSystem,
    cost: QuadraticCost,
    K,
    config: MoreauConfig,
    gradient_mode: ZerothOrderConfig | str = "exact",
) -> float:
    """Envelope cost at K: inner objective evaluated at the prox point."""
    return prox(system, cost, K, config, gradient_mode).envelope_value


def envelope_gradient(
    system: LinearSystem,
    cost: QuadraticCost,
    K,
    config: MoreauConfig,
    gradient_mode: ZerothOrderConfig | str = "exact",
) -> tuple[np.ndarray, ProxResult]:
    """Envelope gradient lam * (K - prox(K)) with its accuracy certificate."""
    K = np.asarray(K.K if hasattr(K, "K") else K, dtype=float)
    result = prox(system, cost, K, config, gradient_mode)
    return config.lam * (K - result.K_bar), result


def local_update(
    system: LinearSystem,
    cost: QuadraticCost,
    K_current,
    config: MoreauConfig,
    alpha: float,
    gradient_mode: ZerothOrderConfig | str = "exact",
) -> np.ndarray:
    """One personalization step K - alpha*lam*(K - K_bar).

    Equivalently the convex combination (1 - alpha*lam) K +
    alpha*lam*K_bar, which keeps iterates between the current gain and
    its proximal point when alpha*lam <= 1.
    """
    K = np.asarray(
        K_current.K if hasattr(K_current, "K") else K_current, dtype=float
    )
    result = prox(system, cost, K, config, gradient_mode)
    return K - alpha * config.lam * (K - result.K_bar)
