"""Meta-policy estimation for uncertain discrete-time linear systems.

The package trains a single feedback gain over a sampled family of
linear systems by descending a Moreau-envelope surrogate of the summed
LQR cost in a simulated client-server loop, then measures how quickly
that gain fine-tunes to unseen realizations.  Exact Lyapunov-based
gradients and a zeroth-order rollout estimator are interchangeable
oracles throughout.
"""

from .config import ExperimentConfig, default_config, default_family, load_config
from .exceptions import (
    BoundsViolationError,
    InitializationError,
    InstabilityError,
    MemlqrError,
    NumericalError,
    ShapeError,
    StabilityViolationError,
    StabilizabilityError,
    StallError,
    ValidationError,
)
from .linsys import (
    InitialStateSpec,
    LinearSystem,
    Policy,
    Trajectory,
    UncertainFamily,
    closed_loop,
    is_stabilizing,
    rollout,
    sample_realization,
    sample_realizations,
    spectral_radius,
)
from .lqr import (
    AnalysisConstants,
    CostReport,
    QuadraticCost,
    ZerothOrderConfig,
    estimate_analysis_constants,
    exact_gradient,
    lqr_cost,
    policy_gradient_descent,
    solve_dare,
    solve_state_correlation,
    solve_value_matrix,
    zeroth_order_gradient,
)
from .meta import (
    AdaptationReport,
    MemlqrConfig,
    RunLog,
    adapt,
    average_train,
    fomaml_train,
    local_train,
    memlqr_train,
    meta_cost,
    schedule_flags,
)
from .moreau import (
    MoreauConfig,
    ProxResult,
    envelope_gradient,
    envelope_value,
    inner_objective,
    local_update,
    prox,
    regularization_condition_met,
)

__version__ = "0.1.0"
