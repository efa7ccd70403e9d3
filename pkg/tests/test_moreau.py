import numpy as np
import pytest

from memlqr import (
    InstabilityError,
    MoreauConfig,
    Policy,
    envelope_gradient,
    envelope_value,
    estimate_analysis_constants,
    exact_gradient,
    inner_objective,
    local_update,
    prox,
    regularization_condition_met,
    solve_dare,
)
from memlqr.lqr import cost_value

from conftest import scalar_cost, scalar_system
from oracles import central_difference_gradient, scalar_grid_prox


@pytest.fixture(scope="module")
def grid_case():
    """Anchor 0, lam 1 on the a=0.9 scalar system, with its grid oracle."""
    system = scalar_system(0.9)
    cost = scalar_cost()
    config = MoreauConfig(lam=1.0, inner_tolerance=1e-6, inner_max_iters=2000)
    oracle = scalar_grid_prox(
        0.9, 1.0, 1.0, 1.0, 1.0, anchor=0.0, lam=1.0, lo=-0.5, hi=1.5, step=1e-5
    )
    return system, cost, config, oracle


class TestInnerObjective:
    def test_regularizer_vanishes_at_anchor(self, unit_cost):
        system = scalar_system(0.0)
        K = np.array([[0.0]])
        assert inner_objective(system, unit_cost, K, K, lam=2.0) == pytest.approx(1.0)

    def test_optimal_point_with_optimal_anchor(self, scalar_a09, unit_cost):
        gain = solve_dare(scalar_a09, unit_cost)
        value = inner_objective(scalar_a09, unit_cost, gain.K, gain.K, lam=0.7)
        assert value == pytest.approx(cost_value(scalar_a09, unit_cost, gain.K))

    def test_hand_value(self, unit_cost):
        system = scalar_system(0.0)
        value = inner_objective(
            system, unit_cost, np.array([[0.5]]), np.array([[0.0]]), lam=2.0
        )
        assert value == pytest.approx(23.0 / 12.0, rel=1e-12)

    def test_unstable_candidate_is_infinite(self, unit_cost):
        system = scalar_system(0.0)
        value = inner_objective(
            system, unit_cost, np.array([[1.5]]), np.array([[0.0]]), lam=1.0
        )
        assert value == np.inf


class TestProx:
    def test_fixed_point_at_optimum(self, scalar_a09, unit_cost):
        gain = solve_dare(scalar_a09, unit_cost)
        config = MoreauConfig(lam=0.5, inner_tolerance=1e-6)
        result = prox(scalar_a09, unit_cost, gain, config)
        assert result.converged
        assert result.iterations_used == 0
        assert abs(result.K_bar[0, 0] - gain.K[0, 0]) <= 1e-8

    def test_huge_weight_pins_prox_to_anchor(self, scalar_a09, unit_cost):
        K = np.array([[0.0]])
        config = MoreauConfig(lam=1e6, inner_tolerance=1e-8, inner_step=1e-6)
        result = prox(scalar_a09, unit_cost, K, config)
        grad_norm = np.linalg.norm(exact_gradient(scalar_a09, unit_cost, K))
        # stationarity: lam (K_bar - K) = -grad C(K_bar), with smoothness
        # far below lam, so the move is at most grad/(lam - ell_hat)
        assert np.linalg.norm(result.K_bar - K) <= grad_norm / (1e6 - 1e4)

    def test_matches_grid_search(self, grid_case):
        system, cost, config, oracle = grid_case
        result = prox(system, cost, np.array([[0.0]]), config)
        assert result.converged
        assert abs(result.K_bar[0, 0] - oracle) <= 1e-4

    def test_converged_residual_meets_threshold(self, grid_case):
        system, cost, config, _ = grid_case
        result = prox(system, cost, np.array([[0.0]]), config)
        assert result.converged
        assert result.inner_residual <= config.residual_threshold

    def test_envelope_value_never_worse_than_anchor(self, scalar_a09, unit_cost):
        config = MoreauConfig(lam=0.3)
        for k in (0.0, 0.4, 0.8):
            K = np.array([[k]])
            result = prox(scalar_a09, unit_cost, K, config)
            assert result.envelope_value <= cost_value(scalar_a09, unit_cost, K) + 1e-12

    def test_unstable_anchor_raises(self, unit_cost):
        system = scalar_system(1.5)
        with pytest.raises(InstabilityError):
            prox(system, unit_cost, np.array([[0.0]]), MoreauConfig())


class TestEnvelope:
    def test_value_at_optimum_equals_cost(self, scalar_a09, unit_cost):
        gain = solve_dare(scalar_a09, unit_cost)
        config = MoreauConfig(lam=0.5, inner_tolerance=1e-7)
        value = envelope_value(scalar_a09, unit_cost, gain, config)
        assert value == pytest.approx(
            cost_value(scalar_a09, unit_cost, gain.K), rel=1e-9
        )

    def test_large_weight_approaches_raw_cost(self, scalar_a09, unit_cost):
        K = np.array([[0.2]])
        config = MoreauConfig(lam=1e6, inner_tolerance=1e-8, inner_step=1e-6)
        value = envelope_value(scalar_a09, unit_cost, K, config)
        raw = cost_value(scalar_a09, unit_cost, K)
        grad_norm = np.linalg.norm(exact_gradient(scalar_a09, unit_cost, K))
        gap_bound = grad_norm**2 / (2 * (1e6 - 1e4))
        assert raw - value >= -1e-12
        assert raw - value <= gap_bound + 1e-10

    def test_gradient_zero_at_optimum(self, scalar_a09, unit_cost):
        gain = solve_dare(scalar_a09, unit_cost)
        config = MoreauConfig(lam=0.5, inner_tolerance=1e-5)
        grad, result = envelope_gradient(scalar_a09, unit_cost, gain, config)
        assert np.linalg.norm(grad) <= config.lam * config.inner_tolerance

    def test_gradient_matches_finite_differences(self, scalar_a09, unit_cost):
        config = MoreauConfig(lam=2.0, inner_tolerance=1e-8, inner_max_iters=5000)
        K = np.array([[0.3]])
        grad, _ = envelope_gradient(scalar_a09, unit_cost, K, config)
        oracle = central_difference_gradient(
            lambda M: envelope_value(scalar_a09, unit_cost, M, config), K, step=1e-5
        )
        rel = np.linalg.norm(grad - oracle) / np.linalg.norm(oracle)
        assert rel <= 1e-3

    def test_gradient_matches_grid_prox(self, grid_case):
        system, cost, config, oracle = grid_case
        K = np.array([[0.0]])
        grad, _ = envelope_gradient(system, cost, K, config)
        expected = config.lam * (K - np.array([[oracle]]))
        assert abs(grad[0, 0] - expected[0, 0]) <= config.lam * 1e-4


class TestLocalUpdate:
    def test_zero_step_is_identity(self, scalar_a09, unit_cost):
        K = np.array([[0.1]])
        updated = local_update(scalar_a09, unit_cost, K, MoreauConfig(lam=0.2), 0.0)
        np.testing.assert_array_equal(updated, K)

    def test_full_step_reaches_prox_point(self, scalar_a09, unit_cost):
        K = np.array([[0.1]])
        config = MoreauConfig(lam=0.5, inner_tolerance=1e-7)
        updated = local_update(scalar_a09, unit_cost, K, config, alpha=2.0)
        result = prox(scalar_a09, unit_cost, K, config)
        np.testing.assert_allclose(updated, result.K_bar, atol=1e-12)

    def test_benchmark_envelope_non_increasing(
        self, benchmark_systems, benchmark_cost, nominal_gain
    ):
        config = MoreauConfig(lam=0.2, inner_tolerance=1e-4)
        system = benchmark_systems[0]
        K = nominal_gain.K
        before = envelope_value(system, benchmark_cost, K, config)
        for _ in range(3):
            K = local_update(system, benchmark_cost, K, config, alpha=0.1)
            after = envelope_value(system, benchmark_cost, K, config)
            assert after <= before + 1e-8
            before = after


class TestTheoryChecks:
    """Empirical versions of the envelope's descent and smoothness bounds."""

    @pytest.fixture
    def scalar_probes(self):
        return [np.array([[k]]) for k in (0.0, 0.25, 0.5, 0.75, 1.0)]

    @pytest.fixture
    def scalar_constants(self, scalar_a09, unit_cost, scalar_probes):
        return estimate_analysis_constants(
            [scalar_a09], unit_cost, scalar_probes, lam=1.0
        )

    def test_envelope_descent_under_smoothness_step(
        self, scalar_a09, unit_cost, scalar_constants
    ):
        # pick lam above the measured smoothness so kappa > 1 genuinely
        lam = 3.0 * scalar_constants.ell_bar
        constants = estimate_analysis_constants(
            [scalar_a09],
            unit_cost,
            [np.array([[k]]) for k in (0.0, 0.25, 0.5, 0.75, 1.0)],
            lam=lam,
        )
        assert constants.smoothness_ok
        config = MoreauConfig(lam=lam, inner_tolerance=1e-7)
        alpha = 1.0 / constants.L_lambda
        K = np.array([[0.0]])
        previous = envelope_value(scalar_a09, unit_cost, K, config)
        for _ in range(5):
            K = local_update(scalar_a09, unit_cost, K, config, alpha)
            current = envelope_value(scalar_a09, unit_cost, K, config)
            assert current <= previous + 1e-8
            previous = current

    def test_envelope_gradient_dominance(
        self, scalar_a09, unit_cost, scalar_constants, scalar_probes
    ):
        lam = 1.0
        config = MoreauConfig(lam=lam, inner_tolerance=1e-7)
        gain = solve_dare(scalar_a09, unit_cost)
        minimum = cost_value(scalar_a09, unit_cost, gain.K)
        factor = 0.5 * scalar_constants.mu + 0.5 / lam
        for K in scalar_probes:
            value = envelope_value(scalar_a09, unit_cost, K, config)
            grad, _ = envelope_gradient(scalar_a09, unit_cost, K, config)
            bound = factor * float(np.sum(grad * grad))
            assert value - minimum <= 2.0 * bound + 1e-9

    def test_envelope_gradient_smoothness_on_close_pairs(
        self, scalar_a09, unit_cost, scalar_constants
    ):
        lam = 3.0 * scalar_constants.ell_bar
        constants = estimate_analysis_constants(
            [scalar_a09],
            unit_cost,
            [np.array([[k]]) for k in (0.0, 0.25, 0.5, 0.75, 1.0)],
            lam=lam,
        )
        config = MoreauConfig(lam=lam, inner_tolerance=1e-8, inner_max_iters=5000)
        radius = constants.zeta
        anchors = [np.array([[k]]) for k in (0.1, 0.4, 0.7)]
        for K1 in anchors:
            K2 = K1 + min(radius, 1e-2)
            g1, _ = envelope_gradient(scalar_a09, unit_cost, K1, config)
            g2, _ = envelope_gradient(scalar_a09, unit_cost, K2, config)
            lhs = np.linalg.norm(g1 - g2)
            rhs = constants.L_lambda * np.linalg.norm(K1 - K2)
            assert lhs <= rhs + 1e-6


def test_regularization_condition_helper():
    assert regularization_condition_met(10.0, 1.0)
    assert not regularization_condition_met(0.2, 1.0)


def test_moreau_config_validation():
    with pytest.raises(Exception):
        MoreauConfig(lam=-1.0)
    with pytest.raises(Exception):
        MoreauConfig(inner_tolerance=0.0)
