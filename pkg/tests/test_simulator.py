import math
from dataclasses import replace

import numpy as np
import pytest

from core import (
    SimConfig, TaskSpec, DivergenceError, DomainError, DimensionMismatchError, ParameterError,
    train_once, run_sweep, sharpness, imbalanced_config, balanced_config, detect_collapse
)
from core.pareto import U_SHAPED
from core.simulator import (
    MultiTaskNet, initial_losses, learning_rate_at, make_task_data, model_sharpness, simplex_grid,
    sweep_families
)


def _small_config(**overrides):
    values = dict(steps=60, seeds=[0, 1], grid=[(0.8, 0.2), (0.5, 0.5), (0.2, 0.8)],
                  scaling_sizes=[], validation_size=200)
    values.update(overrides)
    return imbalanced_config(**values)


def test_default_config_describes_imbalanced_pair():
    config = SimConfig()
    assert [(t.name, t.size) for t in config.tasks] == [('high', 10000), ('low', 200)]
    assert [p[1] for p in config.grid] == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    assert config.seeds == list(range(10))
    assert [t.size for t in balanced_config().tasks] == [10000, 10000]


def test_config_round_trip():
    config = _small_config(schedule='cosine', warmup_steps=5)
    assert SimConfig.from_dict(config.to_dict()) == config


def test_config_from_dict_with_three_tasks_uses_simplex_grid():
    tasks = [{'name': f't{i}', 'size': 500, 'target_seed': i} for i in range(3)]
    config = SimConfig.from_dict({'tasks': tasks, 'unused': 1})
    assert len(config.grid) == 36
    assert all(len(p) == 3 for p in config.grid)


@pytest.mark.parametrize('overrides,error', [
    ({'tasks': [TaskSpec('a', 10, 1), TaskSpec('b', 100, 2)]}, DomainError),
    ({'tasks': [TaskSpec('a', 100, 1)]}, ParameterError),
    ({'grid': [(0.3, 0.3, 0.4)]}, DimensionMismatchError),
    ({'grid': [(0.0, 1.0)]}, DomainError),
    ({'schedule': 'linear'}, ParameterError),
    ({'steps': -1}, DomainError),
])
def test_config_validation(overrides, error):
    with pytest.raises(error):
        replace(SimConfig(), **overrides)


def test_simplex_grid():
    grid = simplex_grid(3, 0.1, 0.1)
    assert len(grid) == 36
    assert all(abs(sum(p) - 1.0) < 1e-9 and min(p) >= 0.1 - 1e-12 for p in grid)
    assert simplex_grid(2, 0.25, 0.25) == [(0.25, 0.75), (0.5, 0.5), (0.75, 0.25)]


def test_learning_rate_schedules():
    config = _small_config(learning_rate=0.1, warmup_steps=10)
    assert learning_rate_at(config, 0) == pytest.approx(0.01)
    assert learning_rate_at(config, 9) == pytest.approx(0.1)
    assert learning_rate_at(config, 50) == pytest.approx(0.1)
    cosine = _small_config(schedule='cosine', steps=100)
    assert learning_rate_at(cosine, 0) == pytest.approx(0.1)
    assert learning_rate_at(cosine, 50) == pytest.approx(0.05)


def test_manual_gradient_matches_finite_differences():
    config = _small_config(width=6, depth=2)
    data = make_task_data(config, config.tasks[1], 1, seed=0)
    net = MultiTaskNet.initialize(config, seed=0)
    x, y = data.x_val[:16], data.y_val[:16]
    task = np.array([0, 1] * 8)
    _, grads = net.loss_and_grad(x, y, task)
    analytic = net.flat_gradient(grads)
    point = net.flatten()
    h = 1e-6
    for i in range(0, point.size, 7):
        step = np.zeros_like(point)
        step[i] = h
        plus, _ = net.with_flat(point + step).loss_and_grad(x, y, task)
        minus, _ = net.with_flat(point - step).loss_and_grad(x, y, task)
        assert analytic[i] == pytest.approx((plus - minus) / (2 * h), rel=1e-4, abs=1e-8)


def test_training_is_deterministic():
    config = _small_config()
    a = train_once(config, (0.5, 0.5), seed=3)
    b = train_once(config, (0.5, 0.5), seed=3)
    assert a.losses == b.losses
    assert not a.diverged
    assert a.steps_run == config.steps


def test_zero_steps_returns_initial_losses():
    config = _small_config(steps=0)
    record = train_once(config, (0.3, 0.7), seed=1)
    assert record.losses == initial_losses(config, 1)


def test_task_without_samples_does_not_affect_the_other():
    # 只采样第一个任务时，第二个任务的目标网络不影响第一个任务的结果
    a = _small_config(tasks=[TaskSpec('high', 10000, 1), TaskSpec('low', 200, 2)])
    b = _small_config(tasks=[TaskSpec('high', 10000, 1), TaskSpec('low', 200, 9)])
    ra = train_once(a, (1.0, 0.0), seed=0)
    rb = train_once(b, (1.0, 0.0), seed=0)
    assert ra.losses[0] == rb.losses[0]
    assert ra.losses[1] != rb.losses[1]


def test_training_improves_on_initialization():
    config = _small_config(steps=400)
    record = train_once(config, (0.5, 0.5), seed=0)
    start = initial_losses(config, 0)
    assert all(after < before for after, before in zip(record.losses, start))


def test_divergence_is_flagged_not_raised():
    config = _small_config(learning_rate=1e6, steps=50)
    record = train_once(config, (0.5, 0.5), seed=0)
    assert record.diverged
    assert all(math.isnan(v) for v in record.losses)


def test_ratios_must_lie_on_simplex():
    config = _small_config()
    with pytest.raises(DomainError):
        train_once(config, (0.6, 0.6), seed=0)
    with pytest.raises(DimensionMismatchError):
        train_once(config, (0.2, 0.3, 0.5), seed=0)


def test_sweep_summaries_and_rows():
    config = _small_config()
    calls = []
    result = run_sweep(config, progress_callback=lambda done, total, msg: calls.append((done, total)))
    assert len(result.records) == 6
    assert calls[-1] == (6, 6)
    assert len(result.summaries_for('main')) == 3
    rows = result.to_rows()
    assert len(rows) == 6
    assert {r['direction'] for r in rows} == {'high', 'low'}
    assert rows[1]['data_size_millions'] == pytest.approx(200 / 1e6)
    summary = result.summaries[0]
    expected = np.median([r.losses for r in result.records if r.point == 0], axis=0)
    assert summary.median_losses == pytest.approx(tuple(expected))
    assert len(result.to_sweep_points()) == 3


def test_progress_messages_name_ratio_and_seed():
    config = _small_config(steps=10)
    messages = []
    run_sweep(config, progress_callback=lambda done, total, msg: messages.append((done, total, msg)))
    assert [m[:2] for m in messages] == [(i, 6) for i in range(1, 7)]
    assert messages[0][2] == 'main 点 0 (0.8, 0.2) 种子 0'
    assert messages[-1][2] == 'main 点 2 (0.2, 0.8) 种子 1'


def test_progress_counts_divergent_runs():
    config = _small_config(learning_rate=1e6, steps=50, seeds=[0])
    messages = []
    result = run_sweep(config, progress_callback=lambda done, total, msg: messages.append(msg))
    assert result.flagged
    assert all('发散' in m for m in messages)
    assert messages[-1].endswith('已发散 3 次')


def test_identical_tasks_give_mirrored_sweep():
    tasks = [TaskSpec('a', 2000, 1), TaskSpec('b', 2000, 1)]
    config = SimConfig(tasks=tasks, steps=600, seeds=list(range(10)),
                       grid=[(0.3, 0.7), (0.5, 0.5), (0.7, 0.3)],
                       scaling_sizes=[], validation_size=500)
    summaries = run_sweep(config).summaries_for('main')
    assert all(s.valid_seeds == 10 for s in summaries)
    low_a, even, high_a = (s.median_losses for s in summaries)
    assert low_a[0] == pytest.approx(high_a[1], rel=0.15)
    assert low_a[1] == pytest.approx(high_a[0], rel=0.15)
    assert even[0] == pytest.approx(even[1], rel=0.1)


def test_sweep_families_swap_smallest_task_size():
    config = _small_config(scaling_sizes=[1000, 3000])
    families = sweep_families(config)
    assert list(families) == ['main', 'scale-1000', 'scale-3000']
    assert [t.size for t in families['scale-1000']] == [10000, 1000]
    result = run_sweep(replace(config, steps=5, seeds=[0]))
    assert {r['sweep'] for r in result.to_rows()} == {'main', 'scale-1000', 'scale-3000'}


def test_parallel_sweep_matches_serial():
    config = _small_config(steps=30)
    serial = run_sweep(config)
    parallel = run_sweep(replace(config, workers=2))
    assert [r.losses for r in serial.records] == [r.losses for r in parallel.records]


# ---- 锐度 ----

def _random_psd(rng, d):
    b = rng.standard_normal((d, d))
    return b @ b.T / d + 0.1 * np.eye(d)


def test_sharpness_on_quadratics():
    rng = np.random.default_rng(11)
    for _ in range(10):
        d = int(rng.integers(5, 51))
        a = _random_psd(rng, d)
        estimate = sharpness(lambda x: 2.0 * a @ x, rng.standard_normal(d), probes=1600, seed=1)
        assert estimate.estimate == pytest.approx(2.0 * np.trace(a), rel=0.05)
        assert estimate.probes == 1600


def test_sharpness_error_shrinks_with_more_probes():
    rng = np.random.default_rng(12)
    problems = []
    for _ in range(10):
        d = int(rng.integers(5, 51))
        problems.append(_random_psd(rng, d))
    medians = []
    for probes in (100, 400, 1600):
        errors = []
        for a in problems:
            truth = 2.0 * np.trace(a)
            runs = [abs(sharpness(lambda x: 2.0 * a @ x, np.zeros(a.shape[0]), probes=probes, seed=s).estimate
                        - truth) / truth for s in range(5)]
            errors.append(float(np.mean(runs)))
        medians.append(float(np.median(errors)))
    assert medians[0] > medians[1] > medians[2]


def test_sharpness_of_flat_functions_is_zero():
    point = np.linspace(-1.0, 1.0, 12)
    constant = sharpness(lambda x: np.zeros_like(x), point, probes=20)
    assert constant.estimate == 0.0
    assert constant.stderr == 0.0
    linear = sharpness(lambda x: np.full_like(x, 3.0), point, probes=20)
    assert linear.estimate == 0.0


def test_sharpness_input_checks():
    with pytest.raises(DomainError):
        sharpness(lambda x: x, [], probes=10)
    with pytest.raises(DomainError):
        sharpness(lambda x: x, [1.0], probes=0)
    with pytest.raises(DivergenceError):
        sharpness(lambda x: x * np.nan, [1.0, 2.0], probes=2)


def test_model_sharpness_subsets_are_finite():
    config = _small_config(width=8)
    data = make_task_data(config, config.tasks[0], 0, seed=0)
    net = MultiTaskNet.initialize(config, seed=0)
    for subset in ('all', 'trunk', 'heads'):
        estimate = model_sharpness(net, data, 0, subset=subset, probes=4)
        assert math.isfinite(estimate.estimate)


def test_sweep_records_sharpness_when_requested():
    config = _small_config(steps=20, seeds=[0], sharpness_probes=3, width=8)
    result = run_sweep(config)
    assert all(len(r.sharpness) == 2 for r in result.records)
    assert all(s.median_sharpness is not None for s in result.summaries)


# ---- 完整规模 ----

@pytest.mark.slow
def test_imbalanced_sweep_collapses():
    config = imbalanced_config(scaling_sizes=[])
    result = run_sweep(config)
    assert not result.flagged
    low = [s.median_losses[1] for s in result.summaries_for('main')]
    m = int(np.argmin(low))
    assert 0 < m < len(low) - 1
    assert low[m] < low[0] - 1e-3 and low[m] < low[-1] - 1e-3
    report = detect_collapse(result.to_sweep_points(), names=result.task_names())
    assert report.collapsed
    assert report.per_direction_monotonicity['low'] == U_SHAPED


@pytest.mark.slow
def test_balanced_sweep_does_not_collapse():
    result = run_sweep(balanced_config())
    report = detect_collapse(result.to_sweep_points(), names=result.task_names())
    assert not report.collapsed


@pytest.mark.slow
def test_low_resource_sharpness_falls_as_high_resource_ratio_grows():
    config = imbalanced_config(grid=[(0.1, 0.9), (0.5, 0.5), (0.9, 0.1)], seeds=list(range(5)),
                               scaling_sizes=[], sharpness_probes=50)
    summaries = run_sweep(config).summaries_for('main')
    low = [s.median_sharpness[1] for s in summaries]
    assert low[0] > low[1] > low[2]
