#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
多任务训练模拟模块

桌面规模的多任务回归: 共享的 tanh 主干加每个任务一个线性输出头，
目标来自固定的随机目标网络加高斯噪声，训练时每个batch按采样比例做多项分布抽样。
用于复现低资源任务的U形曲线（帕累托前沿塌缩），并提供 Hutchinson 锐度估计。
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, replace
from itertools import product
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils import info, warning, debug
from .exceptions import DimensionMismatchError, DivergenceError, DomainError, ParameterError
from .pareto import SweepPoint

SCHEDULES = ('constant', 'inverse_sqrt', 'cosine')
SUBSETS = ('all', 'trunk', 'heads')

# 随机数流编号
_STREAM_DATA = 1
_STREAM_TRUNK = 2
_STREAM_HEAD = 3
_STREAM_BATCH = 4
_STREAM_TARGET = 5
_STREAM_PROBE = 6

# 目标网络输出按该数量的参考样本标准化
_TARGET_REFERENCE = 4096
# 参数绝对值超过该值视为发散
_DIVERGENCE_LIMIT = 1e6

MAIN_SWEEP = 'main'


def _rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


@dataclass(frozen=True)
class TaskSpec:
    """模拟任务: 名称、训练样本数、目标网络种子"""
    name: str
    size: int
    target_seed: int

    def to_dict(self) -> Dict[str, object]:
        return {'name': self.name, 'size': self.size, 'target_seed': self.target_seed}


def _default_tasks() -> List[TaskSpec]:
    return [TaskSpec('high', 10000, 1), TaskSpec('low', 200, 2)]


def _two_task_grid() -> List[Tuple[float, ...]]:
    """第二个任务的比例从 0.1 到 0.9"""
    return [(round(1.0 - p, 10), round(p, 10)) for p in np.round(np.arange(1, 10) / 10.0, 10)]


def simplex_grid(n: int, step: float = 0.1, minimum: float = 0.1) -> List[Tuple[float, ...]]:
    """单纯形上步长为 step、每维不小于 minimum 的全部比例向量"""
    if n < 2:
        raise ParameterError('n', "至少需要2个任务")
    total = int(round(1.0 / step))
    if abs(total * step - 1.0) > 1e-9:
        raise DomainError('step', step, "1/step 必须为整数")
    m_min = max(1, math.ceil(minimum / step - 1e-9))
    points = []
    for counts in product(range(m_min, total + 1), repeat=n - 1):
        last = total - sum(counts)
        if last >= m_min:
            points.append(tuple(round(c / total, 10) for c in (*counts, last)))
    return points


@dataclass
class SimConfig:
    """模拟配置"""
    tasks: List[TaskSpec] = field(default_factory=_default_tasks)
    input_dim: int = 4
    width: int = 32
    depth: int = 2
    target_width: int = 16
    target_gain: float = 2.0
    noise: float = 0.1
    steps: int = 4000
    batch_size: int = 32
    learning_rate: float = 0.1
    schedule: str = 'constant'
    warmup_steps: int = 0
    grid: List[Tuple[float, ...]] = field(default_factory=_two_task_grid)
    seeds: List[int] = field(default_factory=lambda: list(range(10)))
    master_seed: int = 0
    validation_size: int = 1000
    scaling_sizes: List[int] = field(default_factory=lambda: [1000, 3000])
    sharpness_probes: int = 0
    sharpness_subset: str = 'all'
    workers: int = 1

    def __post_init__(self):
        self.tasks = [t if isinstance(t, TaskSpec) else TaskSpec(**t) for t in self.tasks]
        self.grid = [tuple(float(v) for v in point) for point in self.grid]
        self.validate()

    def validate(self):
        if len(self.tasks) < 2:
            raise ParameterError('tasks', "至少需要2个任务")
        names = [t.name for t in self.tasks]
        if len(set(names)) != len(names):
            raise ParameterError('tasks', "任务名称必须唯一")
        for t in self.tasks:
            if t.size < self.batch_size:
                raise DomainError(f'tasks[{t.name}].size', t.size, f"样本数不能小于batch大小 {self.batch_size}")
        for size in self.scaling_sizes:
            if size < self.batch_size:
                raise DomainError('scaling_sizes', size, f"样本数不能小于batch大小 {self.batch_size}")
        for name in ('input_dim', 'width', 'depth', 'target_width', 'batch_size', 'validation_size'):
            if getattr(self, name) < 1:
                raise DomainError(name, getattr(self, name), "必须为正整数")
        if self.steps < 0:
            raise DomainError('steps', self.steps, "不能为负")
        if not (self.learning_rate > 0.0 and self.noise >= 0.0):
            raise DomainError('learning_rate', self.learning_rate, "学习率必须为正，噪声不能为负")
        if self.schedule not in SCHEDULES:
            raise ParameterError('schedule', f"未知的学习率策略 '{self.schedule}'，可选: {', '.join(SCHEDULES)}")
        if self.sharpness_subset not in SUBSETS:
            raise ParameterError('sharpness_subset', f"未知的参数子集 '{self.sharpness_subset}'")
        if not self.grid or not self.seeds:
            raise ParameterError('grid', "比例网格和种子列表都不能为空")
        for point in self.grid:
            if len(point) != len(self.tasks):
                raise DimensionMismatchError(len(self.tasks), len(point), "比例向量")
            if any(not (0.0 < v < 1.0) for v in point) or abs(math.fsum(point) - 1.0) > 1e-9:
                raise DomainError('grid', point, "比例必须位于 (0,1) 且和为1")

    def to_dict(self) -> Dict[str, object]:
        data = asdict(self)
        data['grid'] = [list(p) for p in self.grid]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> 'SimConfig':
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        unknown = sorted(set(data) - set(known))
        if unknown:
            warning(f"忽略未知的模拟配置项: {', '.join(unknown)}")
        if 'tasks' in known and 'grid' not in known and len(known['tasks']) != 2:
            known['grid'] = simplex_grid(len(known['tasks']))
        return cls(**known)


def imbalanced_config(**overrides) -> SimConfig:
    """默认的不平衡配置: 10000 对 200 个样本"""
    return replace(SimConfig(), **overrides)


def balanced_config(**overrides) -> SimConfig:
    """平衡配置: 10000 对 10000 个样本"""
    base = SimConfig(tasks=[TaskSpec('high-a', 10000, 1), TaskSpec('high-b', 10000, 2)], scaling_sizes=[])
    return replace(base, **overrides)


class TargetNet:
    """固定的随机目标网络，输出已标准化"""

    def __init__(self, input_dim: int, width: int, gain: float, rng: np.random.Generator):
        self.w1 = rng.normal(0.0, gain / math.sqrt(input_dim), (input_dim, width))
        self.b1 = rng.normal(0.0, 0.5, width)
        self.w2 = rng.normal(0.0, 1.0 / math.sqrt(width), width)
        raw = self._raw(rng.standard_normal((_TARGET_REFERENCE, input_dim)))
        self.mean = float(raw.mean())
        self.std = float(raw.std()) or 1.0

    def _raw(self, x: np.ndarray) -> np.ndarray:
        return np.tanh(x @ self.w1 + self.b1) @ self.w2

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return (self._raw(x) - self.mean) / self.std


@dataclass
class TaskData:
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray


def make_task_data(config: SimConfig, task: TaskSpec, index: int, seed: int) -> TaskData:
    """任务的训练集与验证集，由 (master_seed, seed, 任务序号) 决定"""
    target = TargetNet(config.input_dim, config.target_width, config.target_gain,
                        _rng(config.master_seed, _STREAM_TARGET, task.target_seed))
    rng = _rng(config.master_seed, seed, _STREAM_DATA, index)
    x_train = rng.standard_normal((task.size, config.input_dim))
    y_train = target(x_train) + config.noise * rng.standard_normal(task.size)
    x_val = rng.standard_normal((config.validation_size, config.input_dim))
    y_val = target(x_val) + config.noise * rng.standard_normal(config.validation_size)
    return TaskData(x_train, y_train, x_val, y_val)


class MultiTaskNet:
    """共享 tanh 主干加每个任务的线性输出头，手写反向传播"""

    def __init__(self, weights: List[np.ndarray], biases: List[np.ndarray],
                 heads: np.ndarray, head_biases: np.ndarray):
        self.weights = weights
        self.biases = biases
        self.heads = heads
        self.head_biases = head_biases

    @classmethod
    def initialize(cls, config: SimConfig, seed: int) -> 'MultiTaskNet':
        rng = _rng(config.master_seed, seed, _STREAM_TRUNK)
        weights, biases = [], []
        fan_in = config.input_dim
        for _ in range(config.depth):
            weights.append(rng.normal(0.0, 1.0 / math.sqrt(fan_in), (fan_in, config.width)))
            biases.append(np.zeros(config.width))
            fan_in = config.width
        heads = np.empty((len(config.tasks), config.width))
        for i in range(len(config.tasks)):
            heads[i] = _rng(config.master_seed, seed, _STREAM_HEAD, i).normal(
                0.0, 1.0 / math.sqrt(config.width), config.width)
        return cls(weights, biases, heads, np.zeros(len(config.tasks)))

    def copy(self) -> 'MultiTaskNet':
        return MultiTaskNet([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                            self.heads.copy(), self.head_biases.copy())

    def _trunk(self, x: np.ndarray) -> List[np.ndarray]:
        activations = [x]
        for w, b in zip(self.weights, self.biases):
            activations.append(np.tanh(activations[-1] @ w + b))
        return activations

    def predict(self, x: np.ndarray, task: np.ndarray) -> np.ndarray:
        h = self._trunk(x)[-1]
        return np.einsum('ij,ij->i', h, self.heads[task]) + self.head_biases[task]

    def loss_and_grad(self, x: np.ndarray, y: np.ndarray, task: np.ndarray) -> Tuple[float, Dict[str, object]]:
        """batch上的均方误差及其梯度"""
        activations = self._trunk(x)
        h = activations[-1]
        out = np.einsum('ij,ij->i', h, self.heads[task]) + self.head_biases[task]
        err = out - y
        n = y.size
        loss = float(np.dot(err, err)) / n

        d_out = 2.0 * err / n
        one_hot = np.zeros((n, self.heads.shape[0]))
        one_hot[np.arange(n), task] = 1.0
        g_heads = one_hot.T @ (d_out[:, None] * h)
        g_head_biases = one_hot.T @ d_out

        g_weights: List[np.ndarray] = [None] * len(self.weights)
        g_biases: List[np.ndarray] = [None] * len(self.biases)
        d_h = d_out[:, None] * self.heads[task]
        for layer in range(len(self.weights) - 1, -1, -1):
            d_a = d_h * (1.0 - activations[layer + 1] ** 2)
            g_weights[layer] = activations[layer].T @ d_a
            g_biases[layer] = d_a.sum(axis=0)
            d_h = d_a @ self.weights[layer].T
        return loss, {'weights': g_weights, 'biases': g_biases,
                      'heads': g_heads, 'head_biases': g_head_biases}

    def apply(self, grads: Dict[str, object], lr: float):
        for w, g in zip(self.weights, grads['weights']):
            w -= lr * g
        for b, g in zip(self.biases, grads['biases']):
            b -= lr * g
        self.heads -= lr * grads['heads']
        self.head_biases -= lr * grads['head_biases']

    def task_loss(self, x: np.ndarray, y: np.ndarray, task: int) -> float:
        err = self.predict(x, np.full(y.size, task)) - y
        return float(np.dot(err, err)) / y.size

    def max_abs(self) -> float:
        arrays = self.weights + self.biases + [self.heads, self.head_biases]
        return max(float(np.max(np.abs(a))) for a in arrays)

    # ---- 展平的参数子集，供锐度估计使用 ----

    def _subset_arrays(self, source: Dict[str, object], subset: str) -> List[np.ndarray]:
        trunk = list(source['weights']) + list(source['biases'])
        heads = [source['heads'], source['head_biases']]
        if subset == 'trunk':
            return trunk
        if subset == 'heads':
            return heads
        return trunk + heads

    def _params(self) -> Dict[str, object]:
        return {'weights': self.weights, 'biases': self.biases,
                'heads': self.heads, 'head_biases': self.head_biases}

    def flatten(self, subset: str = 'all') -> np.ndarray:
        return np.concatenate([a.ravel() for a in self._subset_arrays(self._params(), subset)])

    def with_flat(self, vector: np.ndarray, subset: str = 'all') -> 'MultiTaskNet':
        net = self.copy()
        offset = 0
        for a in net._subset_arrays(net._params(), subset):
            a[...] = vector[offset:offset + a.size].reshape(a.shape)
            offset += a.size
        return net

    def flat_gradient(self, grads: Dict[str, object], subset: str = 'all') -> np.ndarray:
        return np.concatenate([np.asarray(a).ravel() for a in self._subset_arrays(grads, subset)])


def learning_rate_at(config: SimConfig, step: int) -> float:
    """学习率策略，带线性预热"""
    lr = config.learning_rate
    if config.warmup_steps and step < config.warmup_steps:
        return lr * (step + 1) / config.warmup_steps
    if config.schedule == 'inverse_sqrt':
        return lr * math.sqrt(max(config.warmup_steps, 1) / max(step + 1, config.warmup_steps, 1))
    if config.schedule == 'cosine':
        return lr * 0.5 * (1.0 + math.cos(math.pi * step / max(config.steps, 1)))
    return lr


@dataclass(frozen=True)
class SharpnessEstimate:
    estimate: float
    stderr: float
    probes: int

    def to_dict(self) -> Dict[str, object]:
        return {'estimate': self.estimate, 'stderr': self.stderr, 'probes': self.probes}


def sharpness(gradient_fn: Callable[[np.ndarray], np.ndarray], point: Sequence[float],
              probes: int = 100, h: Optional[float] = None, seed: int = 0) -> SharpnessEstimate:
    """
    Hessian 迹的 Hutchinson 估计

    对 Rademacher 向量 v 取 vᵀ(Hv) 的平均，Hv 由梯度的中心差分得到。

    Raises:
        DivergenceError: 梯度出现非有限值
    """
    x = np.asarray(point, dtype=float)
    if probes < 1:
        raise DomainError('probes', probes, "至少需要1个探测向量")
    if x.size == 0:
        raise DomainError('point', x.size, "参数向量不能为空")
    if h is None:
        h = 1e-4 * (1.0 + float(np.max(np.abs(x))))
    if not (math.isfinite(h) and h > 0.0):
        raise DomainError('h', h, "差分步长必须为正")

    rng = _rng(seed, _STREAM_PROBE)
    samples = np.empty(probes)
    for i in range(probes):
        v = rng.choice([-1.0, 1.0], size=x.size)
        g_plus = np.asarray(gradient_fn(x + h * v), dtype=float)
        g_minus = np.asarray(gradient_fn(x - h * v), dtype=float)
        if not (np.all(np.isfinite(g_plus)) and np.all(np.isfinite(g_minus))):
            raise DivergenceError("锐度估计中梯度出现非有限值")
        samples[i] = float(np.dot(v, (g_plus - g_minus) / (2.0 * h)))
    stderr = float(samples.std(ddof=1) / math.sqrt(probes)) if probes > 1 else math.inf
    return SharpnessEstimate(float(samples.mean()), stderr, probes)


def model_sharpness(net: MultiTaskNet, data: TaskData, task: int, subset: str = 'all',
                    probes: int = 100, seed: int = 0) -> SharpnessEstimate:
    """任务在验证集上的损失关于参数子集的锐度"""
    if subset not in SUBSETS:
        raise ParameterError('subset', f"未知的参数子集 '{subset}'")
    labels = np.full(data.y_val.size, task)

    def gradient(vector: np.ndarray) -> np.ndarray:
        candidate = net.with_flat(vector, subset)
        _, grads = candidate.loss_and_grad(data.x_val, data.y_val, labels)
        return candidate.flat_gradient(grads, subset)

    return sharpness(gradient, net.flatten(subset), probes=probes, seed=seed)


@dataclass
class TrainRecord:
    """一次训练的结果"""
    ratios: Tuple[float, ...]
    seed: int
    losses: Tuple[float, ...]
    diverged: bool = False
    steps_run: int = 0
    sharpness: Optional[List[SharpnessEstimate]] = None
    sweep: str = MAIN_SWEEP
    point: int = 0

    def to_dict(self) -> Dict[str, object]:
        return {
            'sweep': self.sweep, 'point': self.point, 'seed': self.seed,
            'ratios': list(self.ratios), 'losses': list(self.losses),
            'diverged': self.diverged, 'steps_run': self.steps_run,
            'sharpness': None if self.sharpness is None else [s.to_dict() for s in self.sharpness]
        }


@dataclass
class SweepProgress:
    """
    扫描进度

    每完成一次训练调用 callback(已完成, 总数, 描述)，描述包含扫描标签、比例点、种子和累计发散次数。
    """
    total: int
    callback: Optional[Callable[[int, int, str], None]] = None
    done: int = 0
    diverged: int = 0

    def record_done(self, record: TrainRecord):
        self.done += 1
        if record.diverged:
            self.diverged += 1
        if self.callback is None:
            return
        ratios = ', '.join(f'{v:g}' for v in record.ratios)
        message = f"{record.sweep} 点 {record.point} ({ratios}) 种子 {record.seed}"
        if self.diverged:
            message += f"，已发散 {self.diverged} 次"
        self.callback(self.done, self.total, message)


def _prepare(config: SimConfig, seed: int) -> Tuple[List[TaskData], MultiTaskNet]:
    data = [make_task_data(config, task, i, seed) for i, task in enumerate(config.tasks)]
    return data, MultiTaskNet.initialize(config, seed)


def _validation_losses(net: MultiTaskNet, data: Sequence[TaskData]) -> Tuple[float, ...]:
    return tuple(net.task_loss(d.x_val, d.y_val, i) for i, d in enumerate(data))


def initial_losses(config: SimConfig, seed: int) -> Tuple[float, ...]:
    """初始化时各任务的验证损失"""
    data, net = _prepare(config, seed)
    return _validation_losses(net, data)


def train_once(config: SimConfig, ratios: Sequence[float], seed: int, cell: int = 0,
               with_sharpness: bool = False) -> TrainRecord:
    """
    按采样比例训练共享模型，返回各任务的验证损失

    发散（损失或参数非有限）时返回带标记的记录，不抛异常。
    """
    ratios = tuple(float(v) for v in ratios)
    if len(ratios) != len(config.tasks):
        raise DimensionMismatchError(len(config.tasks), len(ratios), "比例向量")
    if any(v < 0.0 for v in ratios) or abs(math.fsum(ratios) - 1.0) > 1e-9:
        raise DomainError('ratios', ratios, "比例向量必须位于单纯形上")

    data, net = _prepare(config, seed)
    pvals = np.array(ratios) / math.fsum(ratios)
    batch_rng = _rng(config.master_seed, seed, _STREAM_BATCH, cell)
    task_ids = np.arange(len(config.tasks))

    for step in range(config.steps):
        counts = batch_rng.multinomial(config.batch_size, pvals)
        xs, ys, ts = [], [], []
        for i, count in enumerate(counts):
            if count == 0:
                continue
            idx = batch_rng.integers(0, config.tasks[i].size, count)
            xs.append(data[i].x_train[idx])
            ys.append(data[i].y_train[idx])
            ts.append(np.full(count, task_ids[i]))
        loss, grads = net.loss_and_grad(np.concatenate(xs), np.concatenate(ys), np.concatenate(ts))
        if not math.isfinite(loss):
            warning(f"训练发散: 比例={ratios}, seed={seed}, step={step}")
            return TrainRecord(ratios, seed, tuple([math.nan] * len(ratios)), True, step)
        net.apply(grads, learning_rate_at(config, step))
        if net.max_abs() > _DIVERGENCE_LIMIT:
            warning(f"参数发散: 比例={ratios}, seed={seed}, step={step}")
            return TrainRecord(ratios, seed, tuple([math.nan] * len(ratios)), True, step + 1)

    losses = _validation_losses(net, data)
    if not all(math.isfinite(v) for v in losses):
        return TrainRecord(ratios, seed, tuple([math.nan] * len(ratios)), True, config.steps)

    record = TrainRecord(ratios, seed, losses, False, config.steps)
    if with_sharpness and config.sharpness_probes > 0:
        record.sharpness = [
            model_sharpness(net, data[i], i, config.sharpness_subset, config.sharpness_probes,
                            seed=config.master_seed * 1000003 + seed)
            for i in range(len(config.tasks))
        ]
    return record


@dataclass
class PointSummary:
    """一个比例点上的中位数结果"""
    sweep: str
    point: int
    ratios: Tuple[float, ...]
    median_losses: Tuple[float, ...]
    valid_seeds: int
    median_sharpness: Optional[Tuple[float, ...]] = None

    def to_dict(self) -> Dict[str, object]:
        return {
            'sweep': self.sweep, 'point': self.point, 'ratios': list(self.ratios),
            'median_losses': list(self.median_losses), 'valid_seeds': self.valid_seeds,
            'median_sharpness': None if self.median_sharpness is None else list(self.median_sharpness)
        }


@dataclass
class SweepResult:
    """扫描结果: 每个 (比例, 种子) 一条记录，以及按中位数汇总的结果"""
    config: SimConfig
    sweeps: Dict[str, List[TaskSpec]]
    records: List[TrainRecord]
    summaries: List[PointSummary]

    @property
    def flagged(self) -> bool:
        return any(r.diverged for r in self.records)

    def summaries_for(self, sweep: str = MAIN_SWEEP) -> List[PointSummary]:
        return [s for s in self.summaries if s.sweep == sweep]

    def task_names(self) -> List[str]:
        return [t.name for t in self.config.tasks]

    def to_sweep_points(self, sweep: str = MAIN_SWEEP) -> List[SweepPoint]:
        """供塌缩检测使用的中位数损失"""
        return [SweepPoint.of(s.ratios, s.median_losses) for s in self.summaries_for(sweep)
                if s.valid_seeds > 0]

    def to_rows(self) -> List[Dict[str, object]]:
        """与拟合输入兼容的长表"""
        rows = []
        for s in self.summaries:
            if s.valid_seeds == 0:
                continue
            for task, ratio, loss in zip(self.sweeps[s.sweep], s.ratios, s.median_losses):
                rows.append({
                    'sweep': s.sweep, 'point': s.point, 'direction': task.name,
                    'data_size_millions': task.size / 1e6,
                    'sampling_ratio': ratio, 'eval_cross_entropy': loss
                })
        return rows

    def to_dict(self) -> Dict[str, object]:
        return {
            'config': self.config.to_dict(),
            'sweeps': {k: [t.to_dict() for t in v] for k, v in self.sweeps.items()},
            'flagged': self.flagged,
            'summaries': [s.to_dict() for s in self.summaries],
            'records': [r.to_dict() for r in self.records]
        }


def sweep_families(config: SimConfig) -> Dict[str, List[TaskSpec]]:
    """主扫描以及替换最小任务样本数的辅助扫描"""
    families = {MAIN_SWEEP: list(config.tasks)}
    smallest = min(range(len(config.tasks)), key=lambda i: (config.tasks[i].size, i))
    for size in config.scaling_sizes:
        tasks = list(config.tasks)
        tasks[smallest] = replace(tasks[smallest], size=int(size))
        families[f'scale-{size}'] = tasks
    return families


def _run_cell(args: Tuple[SimConfig, str, int, Tuple[float, ...], int, int]) -> TrainRecord:
    config, sweep, point, ratios, seed, cell = args
    record = train_once(config, ratios, seed, cell=cell, with_sharpness=config.sharpness_probes > 0)
    record.sweep = sweep
    record.point = point
    return record


def _summarize(sweep: str, point: int, ratios: Tuple[float, ...], records: Sequence[TrainRecord]) -> PointSummary:
    valid = [r for r in records if not r.diverged]
    if not valid:
        warning(f"扫描 {sweep} 第 {point} 个点的所有种子均发散")
        return PointSummary(sweep, point, ratios, tuple([math.nan] * len(ratios)), 0)
    medians = tuple(float(v) for v in np.median(np.array([r.losses for r in valid]), axis=0))
    sharp = None
    if all(r.sharpness is not None for r in valid):
        values = np.array([[s.estimate for s in r.sharpness] for r in valid])
        sharp = tuple(float(v) for v in np.median(values, axis=0))
    return PointSummary(sweep, point, ratios, medians, len(valid), sharp)


def run_sweep(config: SimConfig,
              progress_callback: Optional[Callable[[int, int, str], None]] = None) -> SweepResult:
    """在 (比例网格 × 种子) 上逐一训练，按中位数汇总"""
    families = sweep_families(config)
    cells = []
    for sweep, tasks in families.items():
        sweep_config = replace(config, tasks=tasks, scaling_sizes=[])
        for point, ratios in enumerate(config.grid):
            for seed in config.seeds:
                cells.append((sweep_config, sweep, point, ratios, seed, len(cells)))

    progress = SweepProgress(len(cells), progress_callback)
    info(f"开始扫描: {len(families)} 组, 共 {len(cells)} 次训练")

    records: List[Optional[TrainRecord]] = [None] * len(cells)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for i, record in enumerate(pool.map(_run_cell, cells)):
                records[i] = record
                progress.record_done(record)
    else:
        for i, cell in enumerate(cells):
            records[i] = _run_cell(cell)
            progress.record_done(records[i])

    summaries = []
    for sweep in families:
        for point, ratios in enumerate(config.grid):
            group = [r for r in records if r.sweep == sweep and r.point == point]
            summaries.append(_summarize(sweep, point, tuple(ratios), group))
    result = SweepResult(config, families, records, summaries)
    if result.flagged:
        warning("扫描中有训练发散，相关记录已标记")
    debug(f"扫描完成: {len(records)} 条记录")
    return result
