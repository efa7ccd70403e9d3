"""Federated meta-policy training and the adaptation protocol.

The main trainer alternates, for S outer rounds, a broadcast of the
server gain to every client, P personalization steps per client through
the Moreau proximal map, and server averaging

    K^{s+1} = (1 - beta) K^s + (beta / V) * sum_i K_i^{s,P}.

Unrolling the client updates shows the server performs descent with
aggregate step eta_bar = alpha * beta * P on the average of the logged
per-step envelope gradients; the run log keeps every quantity needed to
verify that identity exactly.

Baselines: plain descent on the summed cost (naive averaging), a
first-order MAML-style trainer, and single-system training.  Adaptation
fine-tunes a policy on one held-out system and scores each iterate by
its cost distance to the run's own terminal cost.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import (
    InitializationError,
    InstabilityError,
    StabilityViolationError,
    ValidationError,
)
from .linsys import InitialStateSpec, LinearSystem, Policy, spectral_radius
from .lqr import (
    AnalysisConstants,
    GradientMode,
    QuadraticCost,
    ZerothOrderConfig,
    cost_and_gradient,
    cost_value,
    descend,
    zeroth_order_gradient,
)
from .moreau import MoreauConfig, prox
from .seeds import derive_seed, make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MemlqrConfig:
    """Hyperparameters of the federated trainer."""

    outer_iters: int = 300
    inner_iters: int = 2
    inner_step: float = 0.1
    outer_step: float = 1.0
    moreau: MoreauConfig = field(default_factory=MoreauConfig)
    gradient_mode: GradientMode = "exact"
    seed: int = 0

    def __post_init__(self):
        if self.outer_iters < 1 or self.inner_iters < 1:
            raise ValidationError("outer_iters and inner_iters must be at least 1")
        if self.inner_step <= 0:
            raise ValidationError("inner_step must be positive")
        if not (0 < self.outer_step <= 1):
            raise ValidationError("outer_step must lie in (0, 1]")
        if self.inner_step * self.moreau.lam > 1 + 1e-12:
            raise ValidationError(
                "inner_step * lam must not exceed 1 (local update must be a "
                "convex combination)"
            )

    @property
    def eta_bar(self) -> float:
        """Aggregate server step alpha * beta * P."""
        return self.inner_step * self.outer_step * self.inner_iters


def schedule_flags(config: MemlqrConfig, L_lambda: float) -> dict[str, bool]:
    """Check the step-size schedule the convergence theorem prescribes."""
    S = config.outer_iters
    target = 1.0 / np.sqrt(S)
    return {
        "alpha_ok": bool(
            config.inner_step <= 1.0 / (2.0 * L_lambda * config.inner_iters)
        ),
        "beta_ok": bool(config.outer_step >= max(0.5, 2.0 * L_lambda / np.sqrt(S))),
        "eta_bar_ok": bool(abs(config.eta_bar - target) <= 1e-9 * target),
    }


@dataclass
class ClientRecord:
    """Per-client diagnostics for one outer iteration."""

    cost: float
    rho: float
    envelope_values: list[float] = field(default_factory=list)
    inner_residuals: list[float] = field(default_factory=list)
    inner_iterations: list[int] = field(default_factory=list)
    inner_converged: list[bool] = field(default_factory=list)
    local_gradients: list[np.ndarray] = field(default_factory=list)
    terminal_rho: list[float] = field(default_factory=list)


@dataclass
class OuterRecord:
    """State of the run at the start of outer iteration ``s``."""

    s: int
    policy: np.ndarray
    objective: float
    grad_norm_sq: float
    clients: list[ClientRecord]
    wall_time: float = 0.0


@dataclass
class RunLog:
    """Full training trace: one record per outer iteration."""

    algorithm: str
    eta_bar: float
    num_clients: int
    records: list[OuterRecord] = field(default_factory=list)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def grad_norm_sq(self) -> np.ndarray:
        return np.array([r.grad_norm_sq for r in self.records])


def _require_initial_policy(systems, K0: np.ndarray) -> None:
    for i, system in enumerate(systems):
        rho = spectral_radius(system.A - system.B @ K0)
        if rho >= 1.0 - 1e-9:
            raise InitializationError(
                f"initial policy fails to stabilize realization {i} "
                f"(spectral radius {rho:.6f})"
            )


def _client_gradient_mode(base: GradientMode, *parts: int) -> GradientMode:
    if isinstance(base, ZerothOrderConfig):
        return replace(base, rng_seed=derive_seed(base.rng_seed, *parts))
    return base


def memlqr_train(
    systems: list[LinearSystem],
    cost: QuadraticCost,
    K0,
    config: MemlqrConfig,
    constants: AnalysisConstants | None = None,
) -> tuple[Policy, RunLog]:
    """Run the federated Moreau-envelope trainer.

    The initial policy must stabilize every client.  Every server
    iterate is re-checked against every client; a violation aborts the
    run with the offending (s, i) pair, since the descent theory predicts
    it cannot happen under valid hyperparameters.
    """
    K0 = np.asarray(K0.K if hasattr(K0, "K") else K0, dtype=float)
    if not systems:
        raise ValidationError("systems must be nonempty")
    _require_initial_policy(systems, K0)
    if constants is not None:
        flags = schedule_flags(config, constants.L_lambda)
        for name, ok in flags.items():
            if not ok:
                logger.warning("schedule condition %s violated", name)
    V = len(systems)
    lam = config.moreau.lam
    alpha = config.inner_step
    beta = config.outer_step
    log = RunLog("memlqr", config.eta_bar, V)
    K = K0.copy()
    for s in range(config.outer_iters):
        tic = time.perf_counter()
        clients: list[ClientRecord] = []
        locals_sum = np.zeros_like(K)
        grad_sum = np.zeros_like(K)
        objective = 0.0
        for i, system in enumerate(systems):
            rho = spectral_radius(system.A - system.B @ K)
            if rho >= 1.0 - 1e-9:
                raise StabilityViolationError(
                    f"server iterate at s={s} destabilizes client {i} "
                    f"(spectral radius {rho:.6f})",
                    s=s,
                    i=i,
                )
            record = ClientRecord(cost=cost_value(system, cost, K), rho=rho)
            K_local = K.copy()
            for p in range(config.inner_iters):
                mode = _client_gradient_mode(config.gradient_mode, config.seed, s, i, p)
                result = prox(system, cost, K_local, config.moreau, mode)
                gap_gradient = lam * (K_local - result.K_bar)
                record.envelope_values.append(result.envelope_value)
                record.inner_residuals.append(result.inner_residual)
                record.inner_iterations.append(result.iterations_used)
                record.inner_converged.append(result.converged)
                record.local_gradients.append(gap_gradient)
                K_local = K_local - alpha * gap_gradient
                rho_local = spectral_radius(system.A - system.B @ K_local)
                if rho_local >= 1.0 - 1e-9:
                    raise StabilityViolationError(
                        f"local iterate of client {i} at s={s}, p={p} "
                        f"destabilizes its own system "
                        f"(spectral radius {rho_local:.6f})",
                        s=s,
                        i=i,
                    )
            record.terminal_rho = [
                spectral_radius(other.A - other.B @ K_local) for other in systems
            ]
            objective += record.envelope_values[0]
            grad_sum += record.local_gradients[0]
            locals_sum += K_local
            clients.append(record)
        log.records.append(
            OuterRecord(
                s=s,
                policy=K.copy(),
                objective=objective,
                grad_norm_sq=float(np.sum(grad_sum * grad_sum)),
                clients=clients,
                wall_time=time.perf_counter() - tic,
            )
        )
        K = (1.0 - beta) * K + (beta / V) * locals_sum
    for i, system in enumerate(systems):
        rho = spectral_radius(system.A - system.B @ K)
        if rho >= 1.0 - 1e-9:
            raise StabilityViolationError(
                f"returned policy destabilizes client {i}",
                s=config.outer_iters,
                i=i,
            )
    policy = Policy(
        K,
        meta={
            "algorithm": "memlqr",
            "lambda": lam,
            "iterations": config.outer_iters,
            "seed": config.seed,
        },
    )
    return policy, log


def _diagnostic_runlog(
    algorithm: str,
    systems: list[LinearSystem],
    cost: QuadraticCost,
    eta_bar: float,
):
    """RunLog plus an on_iterate callback recording per-client diagnostics."""
    log = RunLog(algorithm, eta_bar, len(systems))

    def on_iterate(t: int, K: np.ndarray, value: float, grad: np.ndarray):
        clients = []
        for system in systems:
            clients.append(
                ClientRecord(
                    cost=cost_value(system, cost, K),
                    rho=spectral_radius(system.A - system.B @ K),
                )
            )
        log.records.append(
            OuterRecord(
                s=t,
                policy=K.copy(),
                objective=value,
                grad_norm_sq=float(np.sum(grad * grad)),
                clients=clients,
            )
        )

    return log, on_iterate


def _per_system_gradient(
    system: LinearSystem,
    cost: QuadraticCost,
    K: np.ndarray,
    mode: GradientMode,
    init_state: InitialStateSpec | None,
):
    if isinstance(mode, ZerothOrderConfig):
        return zeroth_order_gradient(system, cost, K, mode, init_state=init_state)
    value, grad = cost_and_gradient(system, cost, K)
    if grad is None:
        return None
    return grad


def average_train(
    systems: list[LinearSystem],
    cost: QuadraticCost,
    K0,
    step: float,
    iters: int,
    gradient_mode: GradientMode = "exact",
    init_state: InitialStateSpec | None = None,
    seed: int = 0,
) -> tuple[Policy, RunLog]:
    """Gradient descent on the summed cost C(K) = sum_i C_i(K).

    The descent direction is the mean of the per-system gradients (a
    positive rescaling of the sum), which makes the single-client case
    coincide with plain policy gradient and the zero-inner-step MAML
    baseline coincide with this trainer exactly.
    """
    K0 = np.asarray(K0.K if hasattr(K0, "K") else K0, dtype=float)
    _require_initial_policy(systems, K0)
    exact = not isinstance(gradient_mode, ZerothOrderConfig)

    def grad_fn(K, t):
        total = np.zeros_like(K)
        for i, system in enumerate(systems):
            mode = _client_gradient_mode(gradient_mode, seed, t, i)
            g = _per_system_gradient(system, cost, K, mode, init_state)
            if g is None:
                raise StabilityViolationError(
                    f"iterate destabilizes realization {i}", s=t, i=i
                )
            total += g
        return total / len(systems)

    def cost_fn(K):
        return sum(cost_value(system, cost, K) for system in systems)

    log, on_iterate = _diagnostic_runlog("average", systems, cost, step)
    K, _ = descend(
        grad_fn, cost_fn, K0, step, iters, enforce_decrease=exact, on_iterate=on_iterate
    )
    policy = Policy(
        K, meta={"algorithm": "average", "iterations": iters, "seed": seed}
    )
    return policy, log


def fomaml_train(
    systems: list[LinearSystem],
    cost: QuadraticCost,
    K0,
    inner_step: float,
    outer_step: float,
    iters: int,
    gradient_mode: GradientMode = "exact",
    init_state: InitialStateSpec | None = None,
    seed: int = 0,
) -> tuple[Policy, RunLog]:
    """First-order MAML baseline.

    The outer direction is the mean of per-system gradients evaluated
    after one inner gradient step per system (Hessian term dropped).
    When an inner step destabilizes its system the unadapted gradient is
    used for that client.  Steps are rejected only on destabilization;
    the MAML direction is not a descent direction of the logged total
    cost, so no monotonicity is enforced.
    """
    K0 = np.asarray(K0.K if hasattr(K0, "K") else K0, dtype=float)
    _require_initial_policy(systems, K0)

    def grad_fn(K, t):
        total = np.zeros_like(K)
        for i, system in enumerate(systems):
            mode = _client_gradient_mode(gradient_mode, seed, t, i, 0)
            g = _per_system_gradient(system, cost, K, mode, init_state)
            if g is None:
                raise StabilityViolationError(
                    f"iterate destabilizes realization {i}", s=t, i=i
                )
            if inner_step == 0.0:
                total += g
                continue
            adapted = K - inner_step * g
            mode2 = _client_gradient_mode(gradient_mode, seed, t, i, 1)
            g_adapted = _per_system_gradient(system, cost, adapted, mode2, init_state)
            total += g if g_adapted is None else g_adapted
        return total / len(systems)

    def cost_fn(K):
        return sum(cost_value(system, cost, K) for system in systems)

    log, on_iterate = _diagnostic_runlog("fomaml", systems, cost, outer_step)
    K, _ = descend(
        grad_fn,
        cost_fn,
        K0,
        outer_step,
        iters,
        enforce_decrease=False,
        on_iterate=on_iterate,
    )
    policy = Policy(
        K, meta={"algorithm": "fomaml", "iterations": iters, "seed": seed}
    )
    return policy, log


def local_train(
    system: LinearSystem,
    cost: QuadraticCost,
    K0,
    step: float,
    iters: int,
    gradient_mode: GradientMode = "exact",
    init_state: InitialStateSpec | None = None,
    seed: int = 0,
) -> tuple[Policy, RunLog]:
    """Single-system policy gradient with run logging."""
    policy, log = average_train(
        [system], cost, K0, step, iters, gradient_mode, init_state, seed
    )
    policy = Policy(
        policy.K, meta={"algorithm": "local", "iterations": iters, "seed": seed}
    )
    return policy, log


@dataclass
class AdaptationReport:
    """Fine-tuning trace on a held-out realization.

    ``accuracies[n] = 1 - |c_N - c_n| / c_N`` against the run's own
    terminal cost ``c_N``, so the final entry is 1 by construction.  A
    non-stabilizing initial policy yields ``failed=True`` with a single
    infinite-cost row; that is a reportable experimental outcome, not an
    error.
    """

    costs: list[float]
    accuracies: list[float]
    terminal_policy: Policy | None
    init_label: str
    seed: int
    failed: bool = False

    def iterations_to_accuracy(self, threshold: float) -> int | None:
        for n, acc in enumerate(self.accuracies):
            if np.isfinite(acc) and acc >= threshold:
                return n
        return None


def _empirical_cost(
    system: LinearSystem,
    cost: QuadraticCost,
    K: np.ndarray,
    init_state: InitialStateSpec | None,
    num_states: int,
    horizon: int,
    rng,
) -> float:
    if init_state is not None:
        starts = init_state.sample(rng, num_states)
    else:
        chol = np.linalg.cholesky(cost.sigma0)
        starts = rng.standard_normal((num_states, system.n)) @ chol.T
    Acl = system.A - system.B @ K
    x = starts
    total = np.zeros(num_states)
    for _ in range(horizon):
        u = -(x @ K.T)
        total += np.einsum("jn,nk,jk->j", x, cost.Q, x)
        total += np.einsum("jm,mk,jk->j", u, cost.R, u)
        x = x @ Acl.T
    return float(total.mean())


def adapt(
    policy_init,
    system_z: LinearSystem,
    cost: QuadraticCost,
    step: float,
    iters: int,
    gradient_mode: GradientMode = "exact",
    init_state: InitialStateSpec | None = None,
    num_eval_states: int = 50,
    eval_horizon: int = 200,
    init_label: str = "init",
    seed: int = 0,
) -> AdaptationReport:
    """Fine-tune a policy on one held-out system and score the trace.

    Exact mode evaluates iterate costs in closed form; zeroth-order mode
    averages finite-horizon rollouts over ``num_eval_states`` sampled
    initial states, drawing a fresh batch per iterate.
    """
    K0 = np.asarray(
        policy_init.K if hasattr(policy_init, "K") else policy_init, dtype=float
    )
    rho = spectral_radius(system_z.A - system_z.B @ K0)
    if rho >= 1.0 - 1e-9:
        return AdaptationReport(
            costs=[float("inf")],
            accuracies=[float("nan")],
            terminal_policy=None,
            init_label=init_label,
            seed=seed,
            failed=True,
        )
    exact = not isinstance(gradient_mode, ZerothOrderConfig)
    iterates: list[np.ndarray] = []

    def grad_fn(K, t):
        mode = _client_gradient_mode(gradient_mode, seed, t)
        g = _per_system_gradient(system_z, cost, K, mode, init_state)
        if g is None:
            raise StabilityViolationError("iterate destabilized holdout", s=t, i=0)
        return g

    def on_iterate(t, K, value, grad):
        iterates.append(K.copy())

    cost_fn = lambda K: cost_value(system_z, cost, K)
    K_final, trace = descend(
        grad_fn,
        cost_fn,
        K0,
        step,
        iters,
        enforce_decrease=exact,
        on_iterate=on_iterate,
    )
    iterates.append(K_final.copy())
    if exact:
        costs = [float(c) for c in trace]
    else:
        costs = [
            _empirical_cost(
                system_z,
                cost,
                K,
                init_state,
                num_eval_states,
                eval_horizon,
                make_rng(seed, 3, n),
            )
            for n, K in enumerate(iterates)
        ]
    terminal = costs[-1]
    accuracies = [1.0 - abs(terminal - c) / terminal for c in costs]
    policy = Policy(
        K_final,
        meta={"algorithm": "adapt", "iterations": iters, "seed": seed},
    )
    return AdaptationReport(
        costs=costs,
        accuracies=accuracies,
        terminal_policy=policy,
        init_label=init_label,
        seed=seed,
    )


def meta_cost(
    systems: list[LinearSystem],
    cost: QuadraticCost,
    K,
    moreau_config: MoreauConfig,
) -> float:
    """Summed envelope cost over clients at a common gain."""
    K = np.asarray(K.K if hasattr(K, "K") else K, dtype=float)
    total = 0.0
    for i, system in enumerate(systems):
        rho = spectral_radius(system.A - system.B @ K)
        if rho >= 1.0 - 1e-9:
            raise InstabilityError(f"policy destabilizes client {i}")
        total += prox(system, cost, K, moreau_config).envelope_value
    return total
