#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
采样比例优化模块

在带下限的概率单纯形上最小化 L(p) = Σ r_i·F_i(p_i)。
目标可分离，每个加权方向的导数单调递增时直接解 KKT 方程
r_i·F_i'(p_i) = -λ（对 λ 二分）；否则退回多起点投影梯度下降。
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from utils import info, warning, debug
from .dpl_model import (
    DirectionSpec, DplParams, data_shares, dpl_shape, dpl_shape_derivative,
    dpl_shape_second_derivative, eval_dpl, missing_biases, temperature_weights
)
from .exceptions import (
    BudgetExceededError, DimensionMismatchError, DomainError,
    InfeasibleFloorError, InsufficientDataError, ParameterError
)

METHOD_KKT = 'kkt-bisection'
METHOD_PGD = 'projected-gradient'
METHOD_GRID = 'grid-oracle'

ZERO_WEIGHT_UNIFORM = 'uniform'
ZERO_WEIGHT_DATA_SHARE = 'data_share'

DEFAULT_TEMPERATURES = (1, 2, 5, 10, 100)

CONVEXITY_GRID_POINTS = 64
MAX_GRID_DIRECTIONS = 4
MIN_GRID_RESOLUTION = 1e-4


@dataclass(frozen=True)
class MetricWeights:
    """各方向的指标权重，非负且和为1"""
    r: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.r)
        if not values:
            raise ParameterError('weights', "权重不能为空")
        if any(not math.isfinite(v) or v < 0.0 for v in values):
            raise DomainError('weights', values, "权重必须为非负有限数")
        total = math.fsum(values)
        if abs(total - 1.0) > 1e-12:
            raise DomainError('weights', total, "权重之和必须为1 (weights must sum to 1)")
        object.__setattr__(self, 'r', values)

    def __len__(self) -> int:
        return len(self.r)

    @classmethod
    def uniform(cls, n: int) -> 'MetricWeights':
        """算术平均"""
        return cls(tuple([1.0 / n] * n))

    @classmethod
    def one_hot(cls, n: int, index: int) -> 'MetricWeights':
        return cls(tuple(1.0 if i == index else 0.0 for i in range(n)))

    @classmethod
    def parse(cls, text: str, n: Optional[int] = None) -> 'MetricWeights':
        """解析 "r1,r2,..." 形式的权重"""
        try:
            values = tuple(float(v) for v in text.split(',') if v.strip())
        except ValueError as e:
            raise ParameterError('weights', f"无法解析权重 '{text}'") from e
        if n is not None and len(values) != n:
            raise DimensionMismatchError(n, len(values), "权重")
        return cls(values)


@dataclass
class RatioSolution:
    """优化得到的采样比例及诊断信息"""
    ratios: Tuple[float, ...]
    objective: float
    losses: Tuple[float, ...]
    method: str
    iterations: int
    kkt_residual: Optional[float]
    floor: float
    converged: bool
    directions: List[str] = field(default_factory=list)
    weights: Tuple[float, ...] = ()
    grid_points: Optional[int] = None
    # KKT 乘子 λ，只有 KKT 路径给出
    multiplier: Optional[float] = None
    # 偏置项按 0 计算的方向，losses 与 objective 中不含它们的 M
    bias_missing: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, object]:
        data = {
            'ratios': list(self.ratios),
            'objective': self.objective,
            'losses': list(self.losses),
            'directions': list(self.directions),
            'weights': list(self.weights),
            'floor': self.floor,
            'method': self.method,
            'iterations': self.iterations,
            'kkt_residual': self.kkt_residual,
            'multiplier': self.multiplier,
            'converged': self.converged,
            'bias_missing': list(self.bias_missing)
        }
        if self.grid_points is not None:
            data['grid_points'] = self.grid_points
        return data


@dataclass(frozen=True)
class TemperatureRow:
    temperature: float
    ratios: Tuple[float, ...]
    objective: float

    def to_dict(self) -> Dict[str, object]:
        return {'T': self.temperature, 'ratios': list(self.ratios), 'objective': self.objective}


def _check_problem(directions: Sequence[DirectionSpec], weights: MetricWeights):
    if len(directions) < 2:
        raise InsufficientDataError("至少需要2个方向")
    if len(weights) != len(directions):
        raise DimensionMismatchError(len(directions), len(weights), "权重")
    names = [d.name for d in directions]
    if len(set(names)) != len(names):
        raise ParameterError('directions', "方向名称必须唯一")


def _check_floor(floor: float, n: int):
    if not (math.isfinite(floor) and floor > 0.0):
        raise DomainError('floor', floor, "下限必须为正")
    if floor * n >= 1.0:
        raise InfeasibleFloorError(floor, n)


def objective(params: DplParams, p: Sequence[float], weights: MetricWeights,
              directions: Sequence[DirectionSpec], include_bias: bool = True) -> float:
    """L(p; r; d) = Σ r_i·F_i(p_i, d_i)；偏置项只平移常数，可以省略"""
    p = [float(v) for v in p]
    if len(p) != len(directions):
        raise DimensionMismatchError(len(directions), len(p), "比例向量")
    if len(weights) != len(directions):
        raise DimensionMismatchError(len(directions), len(weights), "权重")
    if any(v <= 0.0 for v in p) or abs(math.fsum(p) - 1.0) > 1e-9:
        raise DomainError('p', p, "比例向量必须为正且和为1")
    terms = []
    for r, pi, d in zip(weights.r, p, directions):
        value = eval_dpl(params, pi, d) if include_bias else float(dpl_shape(params, pi, d.data_size))
        terms.append(r * value)
    return math.fsum(terms)


class _WeightedProblem:
    """加权方向构成的子问题: min Σ r_i f_i(p_i)，p_i >= floor，Σ p_i <= budget (或 = budget)"""

    def __init__(self, params: DplParams, directions: Sequence[DirectionSpec], r: np.ndarray,
                 floor: float, budget: float, equality: bool):
        self.params = params
        self.sizes = [d.data_size for d in directions]
        self.r = r
        self.floor = floor
        self.budget = budget
        self.equality = equality
        self.upper = budget - floor * (len(self.sizes) - 1)

    def value(self, p: np.ndarray) -> float:
        return math.fsum(float(ri * dpl_shape(self.params, pi, d)) for ri, pi, d in zip(self.r, p, self.sizes))

    def gradient(self, p: np.ndarray) -> np.ndarray:
        return np.array([ri * float(dpl_shape_derivative(self.params, pi, d))
                         for ri, pi, d in zip(self.r, p, self.sizes)])

    def is_convex(self) -> bool:
        """每个坐标的加权二阶导在对数网格上都为正"""
        if self.upper <= self.floor:
            return True
        grid = np.geomspace(self.floor, self.upper, CONVEXITY_GRID_POINTS)
        for ri, d in zip(self.r, self.sizes):
            if np.any(ri * dpl_shape_second_derivative(self.params, grid, d) <= 0.0):
                return False
        return True

    def project(self, y: np.ndarray) -> np.ndarray:
        """投影到 {p >= floor, Σp <= budget}（等式约束时为 Σp = budget）"""
        clipped = np.maximum(y, self.floor)
        if not self.equality and clipped.sum() <= self.budget:
            return clipped
        return self.floor + _project_simplex(y - self.floor, self.budget - self.floor * y.size)


def _project_simplex(v: np.ndarray, radius: float) -> np.ndarray:
    """欧氏投影到 {w >= 0, Σw = radius}"""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u * idx > css - radius)[0][-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _solve_kkt(problem: _WeightedProblem) -> Tuple[np.ndarray, float, int]:
    """对 λ 二分求解 r_i f_i'(p_i) = -λ，返回 (p, λ, 外层迭代次数)"""
    lo, hi = problem.floor, problem.upper

    def coordinate(i: int, lam: float) -> float:
        ri, d = problem.r[i], problem.sizes[i]

        def h(p):
            return ri * float(dpl_shape_derivative(problem.params, p, d)) + lam

        if hi <= lo or h(lo) >= 0.0:
            return lo
        if h(hi) <= 0.0:
            return hi
        return brentq(h, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)

    def allocation(lam: float) -> np.ndarray:
        return np.array([coordinate(i, lam) for i in range(len(problem.sizes))])

    if not problem.equality:
        free = allocation(0.0)
        if math.fsum(free) <= problem.budget:
            return free, 0.0, 0

    d_lo = problem.r * dpl_shape_derivative(problem.params, np.full(len(problem.sizes), lo), np.array(problem.sizes))
    d_hi = problem.r * dpl_shape_derivative(problem.params, np.full(len(problem.sizes), hi), np.array(problem.sizes))
    lam_hi = float(np.max(-d_lo)) + 1.0
    lam_lo = float(np.min(-d_hi)) - 1.0
    if not problem.equality:
        lam_lo = max(lam_lo, 0.0)

    lam, result = brentq(lambda lam: math.fsum(allocation(lam)) - problem.budget, lam_lo, lam_hi,
                         xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500, full_output=True)
    return allocation(lam), float(lam), int(result.iterations)


def _kkt_residual(problem: _WeightedProblem, p: np.ndarray, lam: Optional[float]) -> float:
    """内部坐标上 |r_i f_i'(p_i) + λ| 的最大值"""
    grad = problem.gradient(p)
    interior = (p > problem.floor + 1e-12) & (p < problem.upper - 1e-12)
    if not np.any(interior):
        return 0.0
    if lam is None:
        lam = -float(np.mean(grad[interior]))
    return float(np.max(np.abs(grad[interior] + lam)))


def _projected_gradient(problem: _WeightedProblem, start: np.ndarray,
                        max_iter: int = 5000, tol: float = 1e-12) -> Tuple[np.ndarray, float, int, bool]:
    """Armijo回溯的投影梯度下降"""
    x = problem.project(start)
    fx = problem.value(x)
    step = 1.0
    for it in range(1, max_iter + 1):
        g = problem.gradient(x)
        while True:
            x_new = problem.project(x - step * g)
            f_new = problem.value(x_new)
            moved = x_new - x
            if f_new <= fx - 1e-4 / step * float(np.dot(moved, moved)) or step < 1e-16:
                break
            step *= 0.5
        if float(np.linalg.norm(moved)) <= tol or abs(fx - f_new) <= tol * max(1.0, abs(fx)):
            return x_new, f_new, it, True
        x, fx = x_new, f_new
        step = min(step * 2.0, 1.0)
    return x, fx, max_iter, False


def _multi_start(problem: _WeightedProblem, shares: np.ndarray, starts: int, seed: int) -> Tuple[np.ndarray, int, bool]:
    """数据比例点、均匀点和 Dirichlet(1) 随机点出发，取目标最小者，相同时取字典序最小"""
    n = len(problem.sizes)
    rng = np.random.default_rng(seed)
    points = [shares * problem.budget, np.full(n, problem.budget / n)]
    while len(points) < starts:
        points.append(rng.dirichlet(np.ones(n)) * problem.budget)

    candidates = []
    total_iter = 0
    any_converged = False
    for point in points:
        x, fx, it, ok = _projected_gradient(problem, point)
        total_iter += it
        any_converged = any_converged or ok
        candidates.append((fx, tuple(float(v) for v in x)))
    best = min(candidates)
    return np.array(best[1]), total_iter, any_converged


def _finalize(p: np.ndarray, floor: float) -> np.ndarray:
    """把舍入误差并入最大的坐标，使和严格为1"""
    p = np.maximum(np.asarray(p, dtype=float), floor)
    gap = 1.0 - math.fsum(p)
    j = int(np.argmax(p))
    p[j] += gap
    return p


def optimize_ratios(params: DplParams, directions: Sequence[DirectionSpec], weights: MetricWeights,
                    floor: float = 0.01, zero_weight_policy: str = ZERO_WEIGHT_UNIFORM,
                    starts: int = 16, seed: int = 0) -> RatioSolution:
    """
    求最优采样比例组合

    权重为0的方向先分到下限；加权方向在剩余预算内求解，
    若加权方向用不完预算，余量按 zero_weight_policy 分给权重为0的方向。

    Raises:
        InfeasibleFloorError: floor·n >= 1
    """
    _check_problem(directions, weights)
    n = len(directions)
    _check_floor(floor, n)
    if zero_weight_policy not in (ZERO_WEIGHT_UNIFORM, ZERO_WEIGHT_DATA_SHARE):
        raise ParameterError('zero_weight_policy', f"未知的分配方式 '{zero_weight_policy}'")

    r = np.array(weights.r)
    weighted = [i for i in range(n) if r[i] > 0.0]
    zero = [i for i in range(n) if r[i] == 0.0]
    budget = 1.0 - floor * len(zero)
    problem = _WeightedProblem(params, [directions[i] for i in weighted], r[weighted],
                               floor, budget, equality=not zero)

    lam: Optional[float] = None
    if problem.is_convex():
        p_w, lam, iterations = _solve_kkt(problem)
        method, converged = METHOD_KKT, True
        residual = _kkt_residual(problem, p_w, lam)
    else:
        warning("加权目标在可行区间内非凸，改用多起点投影梯度下降")
        shares = data_shares([directions[i] for i in weighted])
        p_w, iterations, converged = _multi_start(problem, shares, starts, seed)
        method = METHOD_PGD
        residual = _kkt_residual(problem, p_w, None)
        if not converged:
            warning("所有起点均未收敛，返回最优的近似解")

    p = np.zeros(n)
    p[weighted] = p_w
    slack = max(0.0, budget - math.fsum(p_w))
    if zero:
        if zero_weight_policy == ZERO_WEIGHT_DATA_SHARE:
            share = data_shares([directions[i] for i in zero])
        else:
            share = np.full(len(zero), 1.0 / len(zero))
        p[zero] = floor + slack * share
    p = _finalize(p, floor)

    solution = RatioSolution(
        ratios=tuple(float(v) for v in p),
        objective=objective(params, p, weights, directions),
        losses=tuple(eval_dpl(params, float(v), d) for v, d in zip(p, directions)),
        method=method,
        iterations=iterations,
        kkt_residual=residual,
        floor=floor,
        converged=converged,
        directions=[d.name for d in directions],
        weights=weights.r,
        multiplier=lam,
        bias_missing=missing_biases(params, directions)
    )
    info(f"采样比例优化完成 ({method}): {[round(v, 6) for v in solution.ratios]}")
    return solution


def grid_oracle(params: DplParams, directions: Sequence[DirectionSpec], weights: MetricWeights,
                resolution: float = 1e-3, floor: float = 0.01) -> RatioSolution:
    """
    单纯形网格上的穷举最优解

    目标可分离，用 min-plus 动态规划代替逐点枚举，结果与穷举相同。

    Raises:
        BudgetExceededError: 方向多于4个或分辨率小于1e-4
    """
    _check_problem(directions, weights)
    n = len(directions)
    _check_floor(floor, n)
    if n > MAX_GRID_DIRECTIONS:
        raise BudgetExceededError(f"网格穷举最多支持 {MAX_GRID_DIRECTIONS} 个方向，当前 {n} 个")
    if not (math.isfinite(resolution) and MIN_GRID_RESOLUTION <= resolution <= 1.0):
        raise BudgetExceededError(f"分辨率必须位于 [{MIN_GRID_RESOLUTION}, 1]，当前 {resolution}")
    total = int(round(1.0 / resolution))
    if abs(total * resolution - 1.0) > 1e-9:
        raise DomainError('resolution', resolution, "1/resolution 必须为整数")

    m_min = max(1, math.ceil(floor / resolution - 1e-9))
    if m_min * n > total:
        raise InfeasibleFloorError(floor, n)
    steps = np.arange(m_min, total + 1)
    ratios = steps / total
    costs = [weights.r[i] * dpl_shape(params, ratios, directions[i].data_size) for i in range(n)]

    # value[t]: 前 j 个方向共用 t 个格点时的最小代价
    value = np.full(total + 1, np.inf)
    value[steps] = costs[0]
    choices = []
    for j in range(1, n):
        new_value = np.full(total + 1, np.inf)
        choice = np.zeros(total + 1, dtype=int)
        for t in range(m_min * (j + 1), total + 1):
            usable = steps[steps <= t - m_min * j]
            candidate = costs[j][:usable.size] + value[t - usable]
            k = int(np.argmin(candidate))
            new_value[t] = candidate[k]
            choice[t] = usable[k]
        choices.append(choice)
        value = new_value

    counts = [0] * n
    t = total
    for j in range(n - 1, 0, -1):
        counts[j] = int(choices[j - 1][t])
        t -= counts[j]
    counts[0] = t
    p = np.array(counts) / total
    grid_points = math.comb(total - n * m_min + n - 1, n - 1)
    debug(f"网格穷举: {grid_points} 个格点")

    return RatioSolution(
        ratios=tuple(float(v) for v in p),
        objective=objective(params, p, weights, directions),
        losses=tuple(eval_dpl(params, float(v), d) for v, d in zip(p, directions)),
        method=METHOD_GRID,
        iterations=grid_points,
        kkt_residual=None,
        floor=floor,
        converged=True,
        directions=[d.name for d in directions],
        weights=weights.r,
        grid_points=grid_points,
        bias_missing=missing_biases(params, directions)
    )


def temperature_baseline(params: DplParams, directions: Sequence[DirectionSpec], weights: MetricWeights,
                         temperatures: Sequence[float] = DEFAULT_TEMPERATURES) -> List[TemperatureRow]:
    """温度采样候选点在同一目标下的取值"""
    _check_problem(directions, weights)
    shares = data_shares(directions)
    rows = []
    for t in temperatures:
        w = temperature_weights(shares, float(t))
        rows.append(TemperatureRow(float(t), tuple(float(v) for v in w),
                                   objective(params, w, weights, directions)))
    return rows
