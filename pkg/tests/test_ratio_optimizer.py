import math

import numpy as np
import pytest

from core import (
    DirectionSpec, DplParams, MetricWeights, BudgetExceededError, DimensionMismatchError, DomainError,
    InfeasibleFloorError, InsufficientDataError, critical_point, eval_dpl,
    objective, optimize_ratios, grid_oracle, temperature_baseline
)
from core.ratio_optimizer import METHOD_KKT, METHOD_PGD


def _random_instance(rng, n):
    directions = [DirectionSpec(f'd{i}', float(math.exp(rng.uniform(math.log(0.1), math.log(10.0)))))
                  for i in range(n)]
    weights = rng.dirichlet(np.ones(n))
    weights[-1] = 1.0 - math.fsum(weights[:-1])
    return directions, MetricWeights(tuple(float(w) for w in weights))


def _instances():
    rng = np.random.default_rng(7)
    return [_random_instance(rng, n) for n in (2, 3, 4) for _ in range(7)][:20]


def test_weights_must_sum_to_one():
    with pytest.raises(DomainError, match='weights must sum to 1'):
        MetricWeights((0.5, 0.4))
    with pytest.raises(DomainError):
        MetricWeights((1.5, -0.5))
    assert MetricWeights.uniform(4).r == (0.25,) * 4
    assert MetricWeights.one_hot(3, 1).r == (0.0, 1.0, 0.0)


def test_weights_parse():
    assert MetricWeights.parse('0.25, 0.75', 2).r == (0.25, 0.75)
    with pytest.raises(DimensionMismatchError):
        MetricWeights.parse('0.5,0.5', 3)


def test_de_hi_uniform_weights(base_params, de_hi):
    solution = optimize_ratios(base_params, de_hi, MetricWeights.uniform(2))
    assert solution.ratios == pytest.approx((0.72, 0.28), abs=0.02)
    assert solution.method == METHOD_KKT
    assert solution.converged
    assert math.fsum(solution.ratios) == pytest.approx(1.0, abs=1e-12)
    assert solution.kkt_residual < 1e-8


def test_solution_beats_every_temperature_candidate(base_params, de_hi):
    weights = MetricWeights.uniform(2)
    solution = optimize_ratios(base_params, de_hi, weights)
    rows = temperature_baseline(base_params, de_hi, weights)
    assert [row.temperature for row in rows] == [1.0, 2.0, 5.0, 10.0, 100.0]
    assert all(solution.objective <= row.objective + 1e-12 for row in rows)
    assert rows[0].ratios == pytest.approx((4.6 / 4.86, 0.26 / 4.86))


def _raise_weight(weights, index, fraction):
    """把第 index 个权重提高剩余部分的 fraction，其余按比例缩小"""
    r = list(weights.r)
    rest = 1.0 - r[index]
    raised = r[index] + fraction * rest
    scaled = [v * (1.0 - raised) / rest for v in r]
    scaled[index] = raised
    return MetricWeights(tuple(scaled))


def test_raising_a_weight_never_lowers_its_ratio(base_params):
    rng = np.random.default_rng(21)
    checked = 0
    for _ in range(40):
        directions, weights = _random_instance(rng, int(rng.integers(2, 4)))
        before = optimize_ratios(base_params, directions, weights)
        # λ <= 0 时所有方向都越过了临界点，单调性不成立
        if before.method != METHOD_KKT or before.multiplier <= 0.0:
            continue
        index = int(rng.integers(len(directions)))
        after = optimize_ratios(base_params, directions, _raise_weight(weights, index, 0.3))
        assert after.ratios[index] >= before.ratios[index] - 1e-9
        checked += 1
    assert checked >= 10


def test_negative_multiplier_when_every_direction_passes_its_critical_point(base_params):
    directions = [DirectionSpec('hi', 0.26), DirectionSpec('mr', 0.26)]
    solution = optimize_ratios(base_params, directions, MetricWeights((0.3, 0.7)))
    assert solution.method == METHOD_KKT
    assert solution.multiplier < 0.0
    p_star = critical_point(base_params, directions[0])
    assert all(p > p_star for p in solution.ratios)
    oracle = grid_oracle(base_params, directions, MetricWeights((0.3, 0.7)), resolution=1e-3)
    assert solution.objective <= oracle.objective + 1e-12


def test_one_hot_weight_lands_on_critical_point(base_params, de_hi):
    solution = optimize_ratios(base_params, de_hi, MetricWeights((0.0, 1.0)))
    assert solution.ratios[1] == pytest.approx(critical_point(base_params, de_hi[1]), abs=1e-6)
    assert solution.ratios[0] == pytest.approx(1.0 - solution.ratios[1], abs=1e-12)


def test_zero_weight_policy_data_share(base_params):
    directions = [DirectionSpec('hi', 0.26), DirectionSpec('de', 4.6), DirectionSpec('fr', 9.2)]
    uniform = optimize_ratios(base_params, directions, MetricWeights((1.0, 0.0, 0.0)))
    share = optimize_ratios(base_params, directions, MetricWeights((1.0, 0.0, 0.0)),
                            zero_weight_policy='data_share')
    assert uniform.ratios[1] == pytest.approx(uniform.ratios[2])
    assert share.ratios[2] > share.ratios[1]
    assert share.ratios[0] == pytest.approx(uniform.ratios[0], abs=1e-9)
    assert min(share.ratios) >= 0.01


def test_floor_is_respected(base_params, de_hi):
    solution = optimize_ratios(base_params, de_hi, MetricWeights((1.0, 0.0)), floor=0.05)
    assert min(solution.ratios) >= 0.05 - 1e-15
    assert solution.floor == 0.05


def test_infeasible_floor(base_params, de_hi):
    with pytest.raises(InfeasibleFloorError):
        optimize_ratios(base_params, de_hi, MetricWeights.uniform(2), floor=0.5)


def test_needs_two_directions(base_params):
    with pytest.raises(InsufficientDataError):
        optimize_ratios(base_params, [DirectionSpec('hi', 0.26)], MetricWeights((1.0,)))


def test_weight_count_must_match(base_params, de_hi):
    with pytest.raises(DimensionMismatchError):
        optimize_ratios(base_params, de_hi, MetricWeights.uniform(3))


def test_non_convex_problem_uses_projected_gradient(de_hi):
    # β < 1 且过拟合系数为正时 f'' 在大 p 处为负
    params = DplParams(0.07, 0.2, 1.18, 0.5, -0.33, 1.0)
    solution = optimize_ratios(params, de_hi, MetricWeights.uniform(2))
    assert solution.method == METHOD_PGD
    oracle = grid_oracle(params, de_hi, MetricWeights.uniform(2), resolution=1e-3)
    assert solution.objective <= oracle.objective + 1e-4


def test_multi_start_is_deterministic(de_hi):
    params = DplParams(0.07, 0.2, 1.18, 0.5, -0.33, 1.0)
    a = optimize_ratios(params, de_hi, MetricWeights.uniform(2), seed=3)
    b = optimize_ratios(params, de_hi, MetricWeights.uniform(2), seed=3)
    assert a.ratios == b.ratios


@pytest.mark.parametrize('index', range(20))
def test_matches_grid_oracle(base_params, index):
    directions, weights = _instances()[index]
    solution = optimize_ratios(base_params, directions, weights)
    resolution = 1e-3 if len(directions) < 4 else 5e-3
    oracle = grid_oracle(base_params, directions, weights, resolution=resolution)
    assert solution.objective <= oracle.objective + 1e-4
    assert math.fsum(solution.ratios) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize('index', range(20))
def test_biases_do_not_move_the_optimum(base_params, index):
    directions, weights = _instances()[index]
    rng = np.random.default_rng(index)
    shifted = base_params.with_biases({d.name: float(rng.uniform(-3.0, 3.0)) for d in directions})
    a = optimize_ratios(base_params, directions, weights)
    b = optimize_ratios(shifted, directions, weights)
    assert b.ratios == pytest.approx(a.ratios, abs=1e-4)


def test_grid_oracle_small_example(base_params, de_hi):
    oracle = grid_oracle(base_params, de_hi, MetricWeights.uniform(2), resolution=0.5)
    assert oracle.ratios == (0.5, 0.5)
    assert oracle.grid_points == 1


def test_grid_oracle_budget(base_params):
    directions = [DirectionSpec(f'd{i}', 1.0 + i) for i in range(5)]
    with pytest.raises(BudgetExceededError):
        grid_oracle(base_params, directions, MetricWeights.uniform(5))
    with pytest.raises(BudgetExceededError):
        grid_oracle(base_params, directions[:2], MetricWeights.uniform(2), resolution=1e-5)


def test_objective_validates_simplex(base_params, de_hi):
    weights = MetricWeights.uniform(2)
    with pytest.raises(DomainError):
        objective(base_params, (0.5, 0.6), weights, de_hi)
    value = objective(base_params, (0.7, 0.3), weights, de_hi)
    expected = 0.5 * eval_dpl(base_params, 0.7, de_hi[0]) + 0.5 * eval_dpl(base_params, 0.3, de_hi[1])
    assert value == pytest.approx(expected, rel=1e-15)


def test_solution_serializes(base_params, de_hi):
    data = optimize_ratios(base_params, de_hi, MetricWeights.uniform(2)).to_dict()
    assert data['directions'] == ['de', 'hi']
    assert data['method'] == METHOD_KKT
    assert 'grid_points' not in data
    assert data['multiplier'] > 0.0
    assert data['bias_missing'] == ['de', 'hi']


def test_directions_without_bias_are_named(base_params, de_hi):
    weights = MetricWeights.uniform(2)
    solution = optimize_ratios(base_params.with_biases({'de': 1.0}), de_hi, weights)
    assert solution.bias_missing == ['hi']
    assert grid_oracle(base_params, de_hi, weights).bias_missing == ['de', 'hi']
