#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
双幂律参数拟合模块

三步估计:
    1. 用最高资源序列拟合容量占用项 (k, α, M)，忽略过拟合项
    2. 固定 (k, α)，用最低资源序列拟合过拟合项的形状 (β, s0, M)
    3. 固定 β，拟合其余低资源序列的尺度 s_j，再由 s_j = (D_j^γ + b)·q^β 回归 (γ, b, q)
之后对全部数据做一次联合精修，最后按闭式解重新计算各序列偏置项。
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares, minimize, minimize_scalar, Bounds

from utils import info, warning, debug
from .dpl_model import DirectionSpec, DplParams, dpl_shape, eval_dpl
from .exceptions import (
    DplError, DimensionMismatchError, DivergenceError, IdentifiabilityError,
    InsufficientDataError, ParameterError, DomainError, UndefinedStatisticError
)

# 与边界的距离小于 区间宽度×该比例 时尝试贴到边界上
BOUND_SNAP_FRACTION = 1e-4

FLAG_DATA_SIZE_INDEPENDENT = 'data_size_independent'


@dataclass(frozen=True)
class Observation:
    """一次测量: 方向、采样比例、评估交叉熵，以及可选的数据量（百万条）"""
    direction: str
    sampling_ratio: float
    eval_loss: float
    data_size: Optional[float] = None

    def __post_init__(self):
        p = float(self.sampling_ratio)
        if not (math.isfinite(p) and 0.0 < p < 1.0):
            raise DomainError('sampling_ratio', p, "采样比例必须位于 (0, 1)")
        if not (math.isfinite(float(self.eval_loss)) and self.eval_loss > 0.0):
            raise DomainError('eval_loss', self.eval_loss, "评估损失必须为正的有限数")
        if self.data_size is not None and not (math.isfinite(self.data_size) and self.data_size > 0.0):
            raise DomainError('data_size', self.data_size, "数据量必须为正")

    def direction_spec(self) -> DirectionSpec:
        if self.data_size is None:
            raise ParameterError('data_size', f"观测 ({self.direction}, {self.sampling_ratio}) 缺少数据量")
        return DirectionSpec(self.direction, self.data_size)


@dataclass
class Series:
    """同一方向、同一数据量的观测序列"""
    direction: DirectionSpec
    observations: List[Observation]

    @property
    def key(self) -> str:
        return self.direction.key

    @property
    def ratios(self) -> np.ndarray:
        return np.array([o.sampling_ratio for o in self.observations])

    @property
    def losses(self) -> np.ndarray:
        return np.array([o.eval_loss for o in self.observations])


@dataclass
class NllsResult:
    """非线性最小二乘的结果"""
    x: np.ndarray
    cost: float
    initial_norm: float
    nfev: int
    converged: bool
    method: str
    active_bounds: Tuple[int, ...] = ()
    names: Tuple[str, ...] = ()
    message: str = ''

    @property
    def residual_norm(self) -> float:
        return math.sqrt(2.0 * self.cost)

    @property
    def flagged(self) -> bool:
        """未收敛或有参数停在边界上"""
        return (not self.converged) or bool(self.active_bounds)

    @property
    def active_names(self) -> List[str]:
        if not self.names:
            return [str(i) for i in self.active_bounds]
        return [self.names[i] for i in self.active_bounds]


@dataclass(frozen=True)
class FitOptions:
    """拟合的初值、边界和求解器设置，可由配置文件覆盖"""
    k0: float = 0.1
    alpha0: float = 0.3
    beta0: float = 1.0
    k_bounds: Tuple[float, float] = (1e-4, 1e2)
    q_bounds: Tuple[float, float] = (1e-4, 1e2)
    alpha_bounds: Tuple[float, float] = (0.01, 2.0)
    beta_bounds: Tuple[float, float] = (0.1, 10.0)
    scale_bounds: Tuple[float, float] = (0.0, 1e3)
    gamma_bounds: Tuple[float, float] = (-5.0, 5.0)
    b_bounds: Tuple[float, float] = (-1e2, 1e2)
    jacobian_step: float = 1e-6
    max_nfev: int = 2000

    @classmethod
    def from_config(cls, section: Optional[Mapping[str, object]]) -> 'FitOptions':
        if not section:
            return cls()
        kwargs = {}
        for name in cls.__dataclass_fields__:
            if name not in section:
                continue
            value = section[name]
            if name.endswith('_bounds'):
                lo, hi = value
                kwargs[name] = (float(lo), float(hi))
            elif name == 'max_nfev':
                kwargs[name] = int(value)
            else:
                kwargs[name] = float(value)
        return cls(**kwargs)


@dataclass(frozen=True)
class CapacityFit:
    k: float
    alpha: float
    bias: float
    solve: NllsResult

    def __iter__(self) -> Iterator[float]:
        return iter((self.k, self.alpha, self.bias))

    @property
    def flagged(self) -> bool:
        return self.solve.flagged


@dataclass(frozen=True)
class OverfitShapeFit:
    beta: float
    scale: float
    bias: float
    solve: NllsResult

    def __iter__(self) -> Iterator[float]:
        return iter((self.beta, self.scale, self.bias))

    @property
    def flagged(self) -> bool:
        return self.solve.flagged


@dataclass(frozen=True)
class OverfitScaleFit:
    scale: float
    bias: float
    solve: NllsResult

    def __iter__(self) -> Iterator[float]:
        return iter((self.scale, self.bias))


@dataclass(frozen=True)
class DataScalingFit:
    gamma: float
    b: float
    q: float
    solve: Optional[NllsResult]
    data_size_independent: bool = False

    def __iter__(self) -> Iterator[float]:
        return iter((self.gamma, self.b, self.q))

    @property
    def flagged(self) -> bool:
        return self.data_size_independent or (self.solve is not None and self.solve.flagged)


@dataclass
class StepRecord:
    """拟合报告中每一步的记录"""
    step: int
    name: str
    residual_norm: float
    nfev: int
    converged: bool
    method: str
    active_bounds: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, object]:
        return {
            'step': self.step, 'name': self.name, 'residual_norm': self.residual_norm,
            'nfev': self.nfev, 'converged': self.converged, 'method': self.method,
            'active_bounds': list(self.active_bounds)
        }


@dataclass
class FitReport:
    """完整拟合的结果"""
    params: DplParams
    steps: List[StepRecord]
    r_squared: Dict[str, Optional[float]]
    series: List[Dict[str, object]]
    flags: List[str] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return all(step.converged for step in self.steps)

    def directions(self) -> List[DirectionSpec]:
        return [DirectionSpec(str(s['direction']), float(s['data_size_millions'])) for s in self.series]

    def to_dict(self) -> Dict[str, object]:
        return {
            'params': self.params.to_dict(),
            'converged': self.converged,
            'steps': [s.to_dict() for s in self.steps],
            'r_squared': dict(self.r_squared),
            'series': list(self.series),
            'flags': list(self.flags)
        }


# ---- 通用求解器 ----

class _ResidualTracker:
    """包装残差函数，记录迄今最优点，遇到非有限残差时报错"""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray]):
        self.fn = fn
        self.best_x: Optional[np.ndarray] = None
        self.best_cost = math.inf
        self.nfev = 0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        r = np.atleast_1d(np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float))
        self.nfev += 1
        if not np.all(np.isfinite(r)):
            best_norm = math.sqrt(2.0 * self.best_cost) if self.best_x is not None else None
            raise DivergenceError("残差出现非有限值", self.best_x, best_norm)
        cost = 0.5 * float(np.dot(r, r))
        if cost < self.best_cost:
            self.best_cost = cost
            self.best_x = np.array(x, dtype=float)
        return r

    def cost(self, x: np.ndarray) -> float:
        r = self(x)
        return 0.5 * float(np.dot(r, r))


def _jacobian_degenerate(jac: np.ndarray) -> bool:
    jac = np.asarray(jac, dtype=float)
    if jac.ndim != 2 or jac.shape[0] < jac.shape[1]:
        return True
    singular = np.linalg.svd(jac, compute_uv=False)
    return singular[0] == 0.0 or singular[-1] <= singular[0] * 1e-10


def nlls_solve(residual_fn: Callable[[np.ndarray], np.ndarray],
               x0: Sequence[float],
               lower: Sequence[float],
               upper: Sequence[float],
               names: Sequence[str] = (),
               jacobian_step: float = 1e-6,
               max_nfev: int = 2000) -> NllsResult:
    """
    带边界的非线性最小二乘

    先用信赖域反射法 (有限差分雅可比)，失败或雅可比退化时再用 Nelder-Mead；
    取代价最小的候选，相同时取离初值最近的。结果不会比初值差。

    Raises:
        DivergenceError: 迭代中残差出现非有限值
    """
    x0 = np.asarray(x0, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = x0.size
    if lower.size != n:
        raise DimensionMismatchError(n, lower.size, "下界")
    if upper.size != n:
        raise DimensionMismatchError(n, upper.size, "上界")
    if np.any(lower >= upper):
        raise ParameterError('bounds', "每个下界必须严格小于上界")

    start = np.clip(x0, lower, upper)
    if not np.array_equal(start, x0):
        debug("初值超出边界，已截断到可行域")
    tracker = _ResidualTracker(residual_fn)
    initial_cost = tracker.cost(start)
    initial_norm = math.sqrt(2.0 * initial_cost)

    candidates = [(initial_cost, start, False, 'initial', '')]
    need_fallback = False
    try:
        ls = least_squares(
            tracker, start, jac='3-point', bounds=(lower, upper), method='trf',
            x_scale='jac', diff_step=jacobian_step,
            ftol=1e-12, xtol=1e-12, gtol=1e-12, max_nfev=max_nfev
        )
        ls_x = np.clip(ls.x, lower, upper)
        candidates.append((tracker.cost(ls_x), ls_x, ls.status > 0, 'trf', ls.message))
        need_fallback = ls.status <= 0 or _jacobian_degenerate(ls.jac)
    except DivergenceError:
        raise
    except (ValueError, np.linalg.LinAlgError) as e:
        warning(f"信赖域求解失败: {e}，改用单纯形搜索")
        need_fallback = True

    if need_fallback:
        nm_start = min(candidates, key=lambda c: c[0])[1]
        nm = minimize(
            tracker.cost, nm_start, method='Nelder-Mead',
            bounds=Bounds(lower, upper),
            options={'xatol': 1e-12, 'fatol': 1e-15, 'maxfev': max_nfev * max(n, 1)}
        )
        nm_x = np.clip(nm.x, lower, upper)
        candidates.append((tracker.cost(nm_x), nm_x, bool(nm.success), 'nelder-mead', str(nm.message)))

    best_cost = min(c[0] for c in candidates)
    tie = [c for c in candidates if c[0] <= best_cost + 1e-12 * best_cost]
    chosen = min(tie, key=lambda c: float(np.linalg.norm(c[1] - start)))
    cost, x, converged, method, message = chosen
    if method == 'initial':
        converged = any(c[2] for c in candidates)
    x = np.array(x, dtype=float)

    # 贴近边界且代价没有可测的增加时，取边界值
    snap_slack = 1e-12 * initial_cost
    for i in range(n):
        lo, hi = lower[i], upper[i]
        width = hi - lo
        for bound in (lo, hi):
            if not math.isfinite(bound) or x[i] == bound:
                continue
            tol = BOUND_SNAP_FRACTION * width if math.isfinite(width) else 1e-8 * max(1.0, abs(bound))
            if abs(x[i] - bound) <= tol:
                trial = x.copy()
                trial[i] = bound
                trial_cost = tracker.cost(trial)
                if trial_cost <= cost + snap_slack:
                    x, cost = trial, trial_cost

    active = tuple(i for i in range(n) if x[i] == lower[i] or x[i] == upper[i])
    result = NllsResult(
        x=x, cost=cost, initial_norm=initial_norm, nfev=tracker.nfev,
        converged=bool(converged), method=method, active_bounds=active,
        names=tuple(names), message=message
    )
    if result.flagged:
        warning(f"最小二乘结果被标记: 收敛={result.converged}, 边界参数={result.active_names}")
    return result


# ---- 分组与检查 ----

def group_series(observations: Sequence[Observation]) -> List[Series]:
    """按 (方向, 数据量) 分组，数据量从大到小排列"""
    groups: Dict[Tuple[str, float], List[Observation]] = {}
    for obs in observations:
        spec = obs.direction_spec()
        groups.setdefault((spec.name, spec.data_size), []).append(obs)
    ordered = sorted(groups.items(), key=lambda item: (-item[0][1], item[0][0]))
    return [Series(DirectionSpec(name, size), obs) for (name, size), obs in ordered]


def _check_single_series(observations: Sequence[Observation]):
    if len(observations) < 4:
        raise InsufficientDataError(f"至少需要4个观测，当前只有 {len(observations)} 个")
    distinct = {o.sampling_ratio for o in observations}
    if len(distinct) < 3:
        raise InsufficientDataError(f"至少需要3个不同的采样比例，当前只有 {len(distinct)} 个")
    keys = {(o.direction, o.data_size) for o in observations}
    if len(keys) != 1:
        raise ParameterError('observations', "观测必须来自同一方向、同一数据量")


def _arrays(observations: Sequence[Observation]) -> Tuple[np.ndarray, np.ndarray]:
    return (np.array([o.sampling_ratio for o in observations]),
            np.array([o.eval_loss for o in observations]))


# ---- 三步估计 ----

def fit_capacity(observations: Sequence[Observation], options: FitOptions = FitOptions()) -> CapacityFit:
    """第一步: loss ≈ (k·p)^(-α) + M"""
    _check_single_series(observations)
    p, y = _arrays(observations)

    def residuals(x):
        k, alpha, m = x
        return (k * p) ** (-alpha) + m - y

    k0, a0 = options.k0, options.alpha0
    m0 = float(np.min(y)) - (k0 * float(np.max(p))) ** (-a0)
    solve = nlls_solve(
        residuals, [k0, a0, m0],
        [options.k_bounds[0], options.alpha_bounds[0], -np.inf],
        [options.k_bounds[1], options.alpha_bounds[1], np.inf],
        names=('k', 'alpha', 'M'),
        jacobian_step=options.jacobian_step, max_nfev=options.max_nfev
    )
    k, alpha, m = (float(v) for v in solve.x)
    info(f"容量项拟合完成: k={k:.6g}, alpha={alpha:.6g}, M={m:.6g}")
    return CapacityFit(k, alpha, m, solve)


def fit_overfit_shape(observations: Sequence[Observation], fixed_capacity: Tuple[float, float],
                      options: FitOptions = FitOptions()) -> OverfitShapeFit:
    """第二步: 固定 (k, α)，loss ≈ (k·p)^(-α) + s0·p^β + M"""
    _check_single_series(observations)
    k, alpha = (float(v) for v in fixed_capacity)
    if not (k > 0.0 and alpha > 0.0):
        raise DomainError('fixed_capacity', (k, alpha), "k 与 alpha 必须为正")
    p, y = _arrays(observations)
    capacity = (k * p) ** (-alpha)

    def residuals(x):
        beta, s0, m = x
        return capacity + s0 * p ** beta + m - y

    beta0 = options.beta0
    s00 = max(float(np.ptp(y)), options.scale_bounds[0])
    m0 = float(np.mean(y - capacity - s00 * p ** beta0))
    solve = nlls_solve(
        residuals, [beta0, s00, m0],
        [options.beta_bounds[0], options.scale_bounds[0], -np.inf],
        [options.beta_bounds[1], options.scale_bounds[1], np.inf],
        names=('beta', 's0', 'M'),
        jacobian_step=options.jacobian_step, max_nfev=options.max_nfev
    )
    beta, s0, m = (float(v) for v in solve.x)
    info(f"过拟合项形状拟合完成: beta={beta:.6g}, s0={s0:.6g}, M={m:.6g}")
    return OverfitShapeFit(beta, s0, m, solve)


def fit_overfit_scale(observations: Sequence[Observation], fixed: Tuple[float, float, float],
                      options: FitOptions = FitOptions()) -> OverfitScaleFit:
    """固定 (k, α, β)，拟合单个序列的尺度 s 与偏置；s 允许为负"""
    _check_single_series(observations)
    k, alpha, beta = (float(v) for v in fixed)
    p, y = _arrays(observations)
    capacity = (k * p) ** (-alpha)
    power = p ** beta

    def residuals(x):
        s, m = x
        return capacity + s * power + m - y

    bound = options.scale_bounds[1]
    m0 = float(np.mean(y - capacity))
    solve = nlls_solve(
        residuals, [0.0, m0], [-bound, -np.inf], [bound, np.inf],
        names=('s', 'M'), jacobian_step=options.jacobian_step, max_nfev=options.max_nfev
    )
    s, m = (float(v) for v in solve.x)
    debug(f"序列尺度拟合完成: s={s:.6g}, M={m:.6g}")
    return OverfitScaleFit(s, m, solve)


def _profile_scaling(sizes: np.ndarray, scales: np.ndarray, gamma: float) -> Tuple[float, float, float]:
    """固定 γ 时 s = A·D^γ + C 的线性最小二乘，返回 (代价, A, C)"""
    design = np.column_stack([sizes ** gamma, np.ones_like(sizes)])
    coef, *_ = np.linalg.lstsq(design, scales, rcond=None)
    a, c = float(coef[0]), float(coef[1])
    if a <= 0.0:
        return math.inf, a, c
    r = design @ coef - scales
    return 0.5 * float(np.dot(r, r)), a, c


def fit_data_scaling(series: Sequence[Tuple[float, float]], beta: float,
                     options: FitOptions = FitOptions()) -> DataScalingFit:
    """
    第三步: 由各序列尺度回归 s_j = (D_j^γ + b)·q^β

    A = q^β 吸收了 (D^γ + b) 的整体缩放，因此先对 γ 做变量投影，再对 (γ, b, q) 联合精修。

    Raises:
        IdentifiabilityError: 不同数据量少于3个
    """
    sizes = np.array([float(d) for d, _ in series])
    scales = np.array([float(s) for _, s in series])
    if len(np.unique(sizes)) < 3:
        raise IdentifiabilityError(f"需要至少3个不同数据量的低资源序列，当前只有 {len(np.unique(sizes))} 个")
    if not (math.isfinite(beta) and beta > 0):
        raise DomainError('beta', beta, "必须为正")

    if np.ptp(scales) <= 1e-12 * max(1.0, float(np.max(np.abs(scales)))):
        s = float(np.mean(scales))
        warning("各序列尺度相同，过拟合项与数据量无关")
        return DataScalingFit(0.0, s - 1.0, 1.0, None, data_size_independent=True)

    g_lo, g_hi = max(-3.0, options.gamma_bounds[0]), min(3.0, options.gamma_bounds[1])
    grid = np.linspace(g_lo, g_hi, 601)
    costs = np.array([_profile_scaling(sizes, scales, g)[0] for g in grid])
    if not np.any(np.isfinite(costs)):
        raise IdentifiabilityError("找不到 q^β > 0 的数据量缩放")
    i = int(np.argmin(costs))
    step = grid[1] - grid[0]
    refine = minimize_scalar(
        lambda g: _profile_scaling(sizes, scales, g)[0],
        bounds=(max(g_lo, grid[i] - step), min(g_hi, grid[i] + step)),
        method='bounded', options={'xatol': 1e-12}
    )
    gamma = float(refine.x) if refine.fun <= costs[i] else float(grid[i])
    _, a, c = _profile_scaling(sizes, scales, gamma)
    q0 = float(np.clip(a ** (1.0 / beta), *options.q_bounds))
    b0 = float(np.clip(c / a, *options.b_bounds))

    def residuals(x):
        g, b, q = x
        return (sizes ** g + b) * q ** beta - scales

    solve = nlls_solve(
        residuals, [gamma, b0, q0],
        [options.gamma_bounds[0], options.b_bounds[0], options.q_bounds[0]],
        [options.gamma_bounds[1], options.b_bounds[1], options.q_bounds[1]],
        names=('gamma', 'b', 'q'),
        jacobian_step=options.jacobian_step, max_nfev=options.max_nfev
    )
    gamma, b, q = (float(v) for v in solve.x)
    info(f"数据量缩放拟合完成: gamma={gamma:.6g}, b={b:.6g}, q={q:.6g}")
    return DataScalingFit(gamma, b, q, solve)


# ---- 偏置项与拟合优度 ----

def fit_bias(params: DplParams, observations: Sequence[Observation]) -> float:
    """只调整偏置项: M = mean(loss - shape(p, D))，闭式解"""
    if not observations:
        raise InsufficientDataError("拟合偏置项至少需要1个观测")
    residuals = [o.eval_loss - float(dpl_shape(params, o.sampling_ratio, o.direction_spec().data_size))
                 for o in observations]
    return math.fsum(residuals) / len(residuals)


def refit_biases(params: DplParams, observations: Sequence[Observation]) -> DplParams:
    """按 名称@数据量 重新计算全部偏置项，共享参数不变"""
    biases = dict(params.biases)
    for series in group_series(observations):
        biases[series.key] = fit_bias(params, series.observations)
    return params.with_biases(biases)


def r_squared(observed: Sequence[float], predicted: Sequence[float]) -> float:
    """1 - SS_res/SS_tot，使用补偿求和"""
    observed = np.asarray(observed, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if observed.shape != predicted.shape:
        raise DimensionMismatchError(observed.size, predicted.size, "预测值")
    if observed.size < 2:
        raise UndefinedStatisticError("计算 r² 至少需要2个观测")
    if np.ptp(observed) == 0.0:
        raise UndefinedStatisticError("观测损失为常数，r² 无定义")
    mean = math.fsum(observed) / observed.size
    ss_tot = math.fsum((observed - mean) ** 2)
    ss_res = math.fsum((observed - predicted) ** 2)
    return 1.0 - ss_res / ss_tot


def goodness_of_fit(params: DplParams, observations: Sequence[Observation]) -> float:
    """观测相对 eval_dpl 预测的 r²"""
    if len(observations) < 2:
        raise UndefinedStatisticError("计算 r² 至少需要2个观测")
    observed = [o.eval_loss for o in observations]
    predicted = [eval_dpl(params, o.sampling_ratio, o.direction_spec()) for o in observations]
    return r_squared(observed, predicted)


# ---- 完整流程 ----

def _record(step: int, name: str, solve: Optional[NllsResult]) -> StepRecord:
    if solve is None:
        return StepRecord(step, name, 0.0, 0, True, 'closed-form')
    return StepRecord(step, name, solve.residual_norm, solve.nfev, solve.converged,
                      solve.method, solve.active_names)


def _joint_polish(params: DplParams, series: Sequence[Series], options: FitOptions) -> Tuple[DplParams, NllsResult]:
    """全部共享参数加各序列偏置的联合精修"""
    p = np.concatenate([s.ratios for s in series])
    y = np.concatenate([s.losses for s in series])
    sizes = np.concatenate([np.full(len(s.observations), s.direction.data_size) for s in series])
    owner = np.concatenate([np.full(len(s.observations), j) for j, s in enumerate(series)])

    def residuals(x):
        k, alpha, q, beta, gamma, b = x[:6]
        biases = x[6:]
        pred = (k * p) ** (-alpha) + (sizes ** gamma + b) * (q * p) ** beta + biases[owner]
        return pred - y

    x0 = list(params.shape_vector()) + [params.biases.get(s.key, 0.0) for s in series]
    lower = [options.k_bounds[0], options.alpha_bounds[0], options.q_bounds[0], options.beta_bounds[0],
             options.gamma_bounds[0], options.b_bounds[0]] + [-np.inf] * len(series)
    upper = [options.k_bounds[1], options.alpha_bounds[1], options.q_bounds[1], options.beta_bounds[1],
             options.gamma_bounds[1], options.b_bounds[1]] + [np.inf] * len(series)
    names = ('k', 'alpha', 'q', 'beta', 'gamma', 'b') + tuple(f'M[{s.key}]' for s in series)
    solve = nlls_solve(residuals, x0, lower, upper, names=names,
                       jacobian_step=options.jacobian_step, max_nfev=options.max_nfev)
    k, alpha, q, beta, gamma, b = (float(v) for v in solve.x[:6])
    biases = {s.key: float(v) for s, v in zip(series, solve.x[6:])}
    return DplParams(k, alpha, q, beta, gamma, b, biases), solve


def _attach_step(exc: DplError, step: int):
    exc.step = step
    exc.add_note(f"fit_full 第 {step} 步失败")


def fit_full(observations: Sequence[Observation], options: FitOptions = FitOptions()) -> FitReport:
    """
    三步估计加联合精修

    Raises:
        InsufficientDataError: 没有观测数据
        IdentifiabilityError: 低资源数据量不足3个（第3步）
    """
    if not observations:
        raise InsufficientDataError("没有观测数据 (no observations)")
    series = group_series(observations)
    flags: List[str] = []
    steps: List[StepRecord] = []
    info(f"开始拟合: {len(observations)} 个观测, {len(series)} 个序列")

    high = series[0]
    max_size = high.direction.data_size
    low = [s for s in series if s.direction.data_size < max_size]

    step = 1
    try:
        capacity = fit_capacity(high.observations, options)
        steps.append(_record(1, 'capacity', capacity.solve))

        step = 2
        if not low:
            raise InsufficientDataError("至少需要一个数据量小于最高资源序列的低资源序列")
        smallest = low[-1]
        shape = fit_overfit_shape(smallest.observations, (capacity.k, capacity.alpha), options)
        steps.append(_record(2, 'overfit_shape', shape.solve))
        if shape.flagged:
            flags.append(f'overfit_shape_flagged:{smallest.key}')

        step = 3
        distinct = {s.direction.data_size for s in low}
        if len(distinct) < 3:
            raise IdentifiabilityError(
                f"第3步需要至少3个不同数据量的低资源序列，当前只有 {len(distinct)} 个")
        pairs = [(smallest.direction.data_size, shape.scale)]
        biases = {high.key: capacity.bias, smallest.key: shape.bias}
        for s in low[:-1]:
            scale_fit = fit_overfit_scale(s.observations, (capacity.k, capacity.alpha, shape.beta), options)
            pairs.append((s.direction.data_size, scale_fit.scale))
            biases[s.key] = scale_fit.bias
            if not scale_fit.solve.converged:
                steps.append(_record(3, f'overfit_scale:{s.key}', scale_fit.solve))
        scaling = fit_data_scaling(pairs, shape.beta, options)
        steps.append(_record(3, 'data_scaling', scaling.solve))
        if scaling.data_size_independent:
            flags.append(FLAG_DATA_SIZE_INDEPENDENT)

        step = 4
        initial = DplParams(capacity.k, capacity.alpha, scaling.q, shape.beta,
                            scaling.gamma, scaling.b, biases)
        polished, polish = _joint_polish(initial, series, options)
        steps.append(_record(4, 'joint_polish', polish))
        if polish.active_bounds:
            flags.append('bounds_active:' + ','.join(polish.active_names))
    except DplError as exc:
        _attach_step(exc, step)
        raise

    params = refit_biases(polished.with_biases({}), observations)
    r2: Dict[str, Optional[float]] = {}
    for s in series:
        try:
            r2[s.key] = goodness_of_fit(params, s.observations)
        except UndefinedStatisticError:
            r2[s.key] = None
            flags.append(f'r2_undefined:{s.key}')

    report = FitReport(
        params=params,
        steps=steps,
        r_squared=r2,
        series=[{'direction': s.direction.name, 'data_size_millions': s.direction.data_size,
                 'key': s.key, 'n': len(s.observations)} for s in series],
        flags=flags
    )
    if not report.converged:
        warning("拟合未完全收敛，结果已标记")
    info(f"拟合完成: {params.to_dict()}")
    return report


def generate_observations(params: DplParams, directions: Sequence[DirectionSpec],
                          ratios: Sequence[float], noise: float = 0.0,
                          seed: Optional[int] = None, repeats: int = 1) -> List[Observation]:
    """由参数生成合成观测，噪声为高斯分布"""
    rng = np.random.default_rng(seed)
    observations = []
    for direction in directions:
        for p in ratios:
            for _ in range(repeats):
                loss = eval_dpl(params, p, direction)
                if noise > 0.0:
                    loss += noise * float(rng.standard_normal())
                observations.append(Observation(direction.name, float(p), loss, direction.data_size))
    return observations
