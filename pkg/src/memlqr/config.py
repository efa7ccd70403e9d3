"""Experiment configuration: dataclasses, JSON loading, shipped defaults.

The default configuration reproduces the package's benchmark study: a
four-state, two-input uncertain family with triangular uncertainty
directions, quadratic cost Q = diag(1,2,3,4), R = diag(1,2), initial
states uniform on [-10, 10]^4, and the federated trainer at 300 outer
rounds with two local steps, inner step 0.1, unit server step, and
regularization weight 0.2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ValidationError
from .linsys import InitialStateSpec, UncertainFamily
from .lqr import QuadraticCost, ZerothOrderConfig
from .meta import MemlqrConfig
from .moreau import MoreauConfig

TRAIN_ALGORITHMS = ("memlqr", "average", "fomaml", "local")

# Sub-stream tags for deriving independent seeds from the experiment seed.
STREAM_TRAIN_REALIZATIONS = 0
STREAM_HOLDOUTS = 1
STREAM_ZEROTH_ORDER = 2
STREAM_EVAL_STATES = 3
STREAM_TRAJECTORY = 4


@dataclass(frozen=True)
class TrainSettings:
    """Which trainer to run and with what hyperparameters."""

    algorithm: str = "memlqr"
    memlqr: MemlqrConfig = field(default_factory=MemlqrConfig)
    step: float = 0.1
    iters: int = 300
    maml_inner_step: float = 0.05
    gradient_mode: str = "exact"
    k0: object = None

    def __post_init__(self):
        if self.algorithm not in TRAIN_ALGORITHMS:
            raise ValidationError(
                f"unknown algorithm {self.algorithm!r}; expected one of "
                f"{TRAIN_ALGORITHMS}"
            )
        if self.gradient_mode not in ("exact", "zeroth-order"):
            raise ValidationError(
                f"gradient_mode must be 'exact' or 'zeroth-order', "
                f"got {self.gradient_mode!r}"
            )


@dataclass(frozen=True)
class AdaptSettings:
    iters: int = 250
    step: float = 0.1
    num_eval_states: int = 50
    eval_horizon: int = 200


@dataclass(frozen=True)
class CompareSettings:
    baselines: tuple[str, ...] = ("fomaml",)
    threshold: float = 0.95


@dataclass(frozen=True)
class ExperimentConfig:
    family: UncertainFamily
    Q: np.ndarray
    R: np.ndarray
    init_state: InitialStateSpec
    num_realizations: int = 4
    num_holdouts: int = 3
    train: TrainSettings = field(default_factory=TrainSettings)
    adapt: AdaptSettings = field(default_factory=AdaptSettings)
    zeroth_order: ZerothOrderConfig = field(default_factory=ZerothOrderConfig)
    compare: CompareSettings = field(default_factory=CompareSettings)
    output_dir: str = "results"
    seed: int = 0

    def __post_init__(self):
        if self.num_realizations < 1:
            raise ValidationError("num_realizations must be at least 1")
        if self.num_holdouts < 1:
            raise ValidationError("num_holdouts must be at least 1")
        if self.init_state.n != self.family.n:
            raise ValidationError(
                "init_state dimension does not match the family state dimension"
            )

    def cost(self) -> QuadraticCost:
        """Quadratic cost with second moment implied by the initial state."""
        return QuadraticCost(self.Q, self.R, self.init_state.second_moment())


def default_family() -> UncertainFamily:
    """Benchmark family: nominal 4x4 dynamics with triangular uncertainty."""
    A0 = np.array(
        [
            [0.7, -0.3, 0.0, 0.1],
            [0.5, -0.4, 0.3, 0.0],
            [0.0, 0.4, 0.2, -0.1],
            [0.2, 0.0, 0.4, 0.6],
        ]
    )
    A1 = np.tril(np.full((4, 4), 0.1))
    A2 = np.triu(np.full((4, 4), 0.1))
    B0 = np.array([[0.3, 0.2], [0.1, 0.5], [0.4, 0.1], [0.0, 0.1]])
    B1 = np.array([[0.1, 0.0], [0.0, 0.1], [0.1, 0.0], [0.0, 0.1]])
    B2 = np.array([[0.0, 0.1], [0.1, 0.0], [0.0, 0.1], [0.1, 0.0]])
    return UncertainFamily(
        n=4,
        m=2,
        A0=A0,
        A_terms=(A1, A2),
        B0=B0,
        B_terms=(B1, B2),
        delta_bounds=((-1.0, 1.0), (-1.0, 1.0)),
        gamma_bounds=((-1.0, 1.0), (-1.0, 1.0)),
    )


def default_config() -> ExperimentConfig:
    """The benchmark experiment shipped with the package."""
    return ExperimentConfig(
        family=default_family(),
        Q=np.diag([1.0, 2.0, 3.0, 4.0]),
        R=np.diag([1.0, 2.0]),
        init_state=InitialStateSpec(
            kind="uniform-box", low=[-10.0] * 4, high=[10.0] * 4
        ),
        compare=CompareSettings(baselines=("fomaml", "average")),
    )


def _init_state_from_dict(data: dict) -> InitialStateSpec:
    kind = data.get("kind")
    if kind == "uniform-box":
        return InitialStateSpec(kind=kind, low=data["low"], high=data["high"])
    if kind == "fixed-covariance":
        return InitialStateSpec(kind=kind, covariance=np.asarray(data["covariance"]))
    raise ValidationError(f"unknown init_state kind {kind!r}")


def _train_from_dict(data: dict) -> TrainSettings:
    moreau = MoreauConfig(
        lam=float(data.get("lambda", 0.2)),
        inner_tolerance=float(data.get("inner_tolerance", 1e-4)),
        inner_max_iters=int(data.get("inner_max_iters", 500)),
        inner_step=float(data.get("prox_step", 0.1)),
    )
    memlqr = MemlqrConfig(
        outer_iters=int(data.get("outer_iters", 300)),
        inner_iters=int(data.get("inner_iters", 2)),
        inner_step=float(data.get("inner_step", 0.1)),
        outer_step=float(data.get("outer_step", 1.0)),
        moreau=moreau,
        seed=int(data.get("seed", 0)),
    )
    return TrainSettings(
        algorithm=data.get("algorithm", "memlqr"),
        memlqr=memlqr,
        step=float(data.get("step", 0.1)),
        iters=int(data.get("iters", 300)),
        maml_inner_step=float(data.get("maml_inner_step", 0.05)),
        gradient_mode=data.get("gradient_mode", "exact"),
        k0=data.get("k0"),
    )


def config_from_dict(data: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Build a config from parsed JSON; family may be inline or a path."""
    from .files import family_from_dict, load_family

    base_dir = Path(base_dir) if base_dir is not None else Path(".")
    family_spec = data.get("family")
    if family_spec is None:
        family = default_family()
    elif isinstance(family_spec, str):
        path = Path(family_spec)
        if not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ValidationError(f"family file {path} does not exist")
        family = load_family(path)
    else:
        family = family_from_dict(family_spec)

    cost_spec = data.get("cost", {})
    Q = np.asarray(cost_spec.get("Q", np.diag([1.0, 2.0, 3.0, 4.0])), dtype=float)
    R = np.asarray(cost_spec.get("R", np.diag([1.0, 2.0])), dtype=float)

    init_spec = data.get("init_state")
    if init_spec is None:
        init_state = InitialStateSpec(
            kind="uniform-box", low=[-10.0] * family.n, high=[10.0] * family.n
        )
    else:
        init_state = _init_state_from_dict(init_spec)

    zo_spec = data.get("zeroth_order", {})
    zeroth = ZerothOrderConfig(
        num_samples=int(zo_spec.get("num_samples", 200)),
        smoothing_radius=float(zo_spec.get("smoothing_radius", 0.05)),
        rollout_horizon=int(zo_spec.get("rollout_horizon", 100)),
        rng_seed=int(zo_spec.get("rng_seed", 0)),
        baseline=bool(zo_spec.get("baseline", True)),
    )

    adapt_spec = data.get("adapt", {})
    adapt = AdaptSettings(
        iters=int(adapt_spec.get("iters", 250)),
        step=float(adapt_spec.get("step", 0.1)),
        num_eval_states=int(adapt_spec.get("num_eval_states", 50)),
        eval_horizon=int(adapt_spec.get("eval_horizon", 200)),
    )

    compare_spec = data.get("compare", {})
    compare = CompareSettings(
        baselines=tuple(compare_spec.get("baselines", ["fomaml", "average"])),
        threshold=float(compare_spec.get("threshold", 0.95)),
    )

    return ExperimentConfig(
        family=family,
        Q=Q,
        R=R,
        init_state=init_state,
        num_realizations=int(data.get("num_realizations", 4)),
        num_holdouts=int(data.get("num_holdouts", 3)),
        train=_train_from_dict(data.get("train", {})),
        adapt=adapt,
        zeroth_order=zeroth,
        compare=compare,
        output_dir=data.get("output_dir", "results"),
        seed=int(data.get("seed", 0)),
    )


def load_config(path) -> ExperimentConfig:
    """Load and validate a JSON experiment config."""
    from .files import read_json

    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file {path} does not exist")
    return config_from_dict(read_json(path), base_dir=path.parent)


def config_to_dict(config: ExperimentConfig) -> dict:
    """Round-trippable plain-dict form of a config."""
    from .files import family_to_dict

    moreau = config.train.memlqr.moreau
    return {
        "family": family_to_dict(config.family),
        "cost": {"Q": config.Q, "R": config.R},
        "init_state": (
            {
                "kind": "uniform-box",
                "low": config.init_state.low,
                "high": config.init_state.high,
            }
            if config.init_state.kind == "uniform-box"
            else {
                "kind": "fixed-covariance",
                "covariance": config.init_state.covariance,
            }
        ),
        "num_realizations": config.num_realizations,
        "num_holdouts": config.num_holdouts,
        "train": {
            "algorithm": config.train.algorithm,
            "outer_iters": config.train.memlqr.outer_iters,
            "inner_iters": config.train.memlqr.inner_iters,
            "inner_step": config.train.memlqr.inner_step,
            "outer_step": config.train.memlqr.outer_step,
            "lambda": moreau.lam,
            "inner_tolerance": moreau.inner_tolerance,
            "inner_max_iters": moreau.inner_max_iters,
            "prox_step": moreau.inner_step,
            "step": config.train.step,
            "iters": config.train.iters,
            "maml_inner_step": config.train.maml_inner_step,
            "gradient_mode": config.train.gradient_mode,
            "k0": config.train.k0,
        },
        "adapt": {
            "iters": config.adapt.iters,
            "step": config.adapt.step,
            "num_eval_states": config.adapt.num_eval_states,
            "eval_horizon": config.adapt.eval_horizon,
        },
        "zeroth_order": {
            "num_samples": config.zeroth_order.num_samples,
            "smoothing_radius": config.zeroth_order.smoothing_radius,
            "rollout_horizon": config.zeroth_order.rollout_horizon,
            "rng_seed": config.zeroth_order.rng_seed,
            "baseline": config.zeroth_order.baseline,
        },
        "compare": {
            "baselines": list(config.compare.baselines),
            "threshold": config.compare.threshold,
        },
        "output_dir": config.output_dir,
        "seed": config.seed,
    }
