#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
双幂律模型模块

损失随采样比例 p 的变化:
    F(p; D) = (k·p)^(-α) + (D^γ + b)·(q·p)^β + M

第一项为容量占用项，第二项为内在过拟合项，M 为方向的偏置项。
数据量 D 的单位固定为百万条训练样本。
"""

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import softmax

from utils import warning, debug
from .exceptions import DomainError, MissingBiasError, ParameterError

# 公式在该比例区间内经过验证，区间外的预测会被标记
VALIDATED_RANGE = (0.1, 0.9)

CRITICAL_INTERIOR = 'interior'
CRITICAL_BEYOND_UNIT = 'beyond_unit'
CRITICAL_MONOTONE = 'monotone'


def _check_positive(name: str, value: float):
    if not (math.isfinite(value) and value > 0):
        raise DomainError(name, value, "必须为正的有限数")


@dataclass(frozen=True)
class DirectionSpec:
    """翻译方向及其训练数据量（百万条）"""
    name: str
    data_size: float

    def __post_init__(self):
        if not self.name:
            raise ParameterError('name', "方向名称不能为空")
        _check_positive('data_size', float(self.data_size))
        object.__setattr__(self, 'data_size', float(self.data_size))

    @property
    def key(self) -> str:
        """偏置项的键: 名称@数据量"""
        return f"{self.name}@{self.data_size!r}"

    def to_dict(self) -> Dict[str, object]:
        return {'name': self.name, 'data_size_millions': self.data_size}


@dataclass(frozen=True)
class DplParams:
    """双幂律的共享参数和各方向偏置项"""
    k: float
    alpha: float
    q: float
    beta: float
    gamma: float
    b: float
    biases: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name in ('k', 'alpha', 'q', 'beta'):
            _check_positive(name, float(getattr(self, name)))
        for name in ('gamma', 'b'):
            if not math.isfinite(float(getattr(self, name))):
                raise DomainError(name, getattr(self, name), "必须为有限数")
        for key, value in self.biases.items():
            if not math.isfinite(float(value)):
                raise DomainError(f'biases[{key}]', value, "偏置项必须为有限数")
        object.__setattr__(self, 'biases', {str(k): float(v) for k, v in self.biases.items()})

    def bias_for(self, direction: DirectionSpec) -> Optional[float]:
        """先按 名称@数据量 查找，再按名称查找"""
        if direction.key in self.biases:
            return self.biases[direction.key]
        return self.biases.get(direction.name)

    def with_biases(self, biases: Mapping[str, float]) -> 'DplParams':
        return replace(self, biases=dict(biases))

    def shape_vector(self) -> Tuple[float, float, float, float, float, float]:
        return (self.k, self.alpha, self.q, self.beta, self.gamma, self.b)

    def to_dict(self) -> Dict[str, object]:
        return {
            'k': self.k, 'alpha': self.alpha, 'q': self.q, 'beta': self.beta,
            'gamma': self.gamma, 'b': self.b, 'biases': dict(self.biases)
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> 'DplParams':
        """从字典构造，兼容拟合报告（参数位于 params 键下）"""
        if 'params' in data and isinstance(data['params'], Mapping):
            data = data['params']
        try:
            return cls(
                k=float(data['k']), alpha=float(data['alpha']),
                q=float(data['q']), beta=float(data['beta']),
                gamma=float(data['gamma']), b=float(data['b']),
                biases=dict(data.get('biases') or {})
            )
        except KeyError as e:
            raise ParameterError(str(e.args[0]), "参数文件缺少该字段") from e
        except (TypeError, ValueError) as e:
            raise ParameterError('params', f"无法解析参数: {e}") from e


@dataclass(frozen=True)
class Preset:
    """预设参数（不含偏置项）"""
    label: str
    k: float
    alpha: float
    q: float
    beta: float
    gamma: float
    b: float
    description: str = ''

    def to_params(self, biases: Optional[Mapping[str, float]] = None) -> DplParams:
        return DplParams(self.k, self.alpha, self.q, self.beta, self.gamma, self.b, dict(biases or {}))

    def to_dict(self) -> Dict[str, object]:
        return {
            'label': self.label, 'k': self.k, 'alpha': self.alpha, 'q': self.q,
            'beta': self.beta, 'gamma': self.gamma, 'b': self.b
        }


@dataclass(frozen=True)
class CriticalPointReport:
    """临界点分析结果"""
    ratio: Optional[float]
    raw_ratio: Optional[float]
    status: str
    overfit_coefficient: float

    def to_dict(self) -> Dict[str, object]:
        return {
            'ratio': self.ratio, 'raw_ratio': self.raw_ratio,
            'status': self.status, 'overfit_coefficient': self.overfit_coefficient
        }


@dataclass(frozen=True)
class CurvePrediction:
    """预测曲线，按网格顺序"""
    direction: DirectionSpec
    ratios: Tuple[float, ...]
    losses: Tuple[float, ...]
    extrapolated: Tuple[bool, ...]
    bias_missing: bool

    @property
    def points(self) -> List[Tuple[float, float]]:
        return list(zip(self.ratios, self.losses))

    def __iter__(self) -> Iterator[Tuple[float, float]]:
        return iter(self.points)

    def __len__(self) -> int:
        return len(self.ratios)


# ---- 向量化的形状函数（不含偏置，不做定义域检查） ----

def dpl_shape(params: DplParams, p, data_size: float):
    """F 去掉偏置项后的部分，p 可为数组"""
    p = np.asarray(p, dtype=float)
    coef = data_size ** params.gamma + params.b
    return (params.k * p) ** (-params.alpha) + coef * (params.q * p) ** params.beta


def dpl_shape_derivative(params: DplParams, p, data_size: float):
    p = np.asarray(p, dtype=float)
    coef = data_size ** params.gamma + params.b
    a, bt = params.alpha, params.beta
    return (-a * params.k ** (-a) * p ** (-a - 1.0)
            + bt * coef * params.q ** bt * p ** (bt - 1.0))


def dpl_shape_second_derivative(params: DplParams, p, data_size: float):
    p = np.asarray(p, dtype=float)
    coef = data_size ** params.gamma + params.b
    a, bt = params.alpha, params.beta
    return (a * (a + 1.0) * params.k ** (-a) * p ** (-a - 2.0)
            + bt * (bt - 1.0) * coef * params.q ** bt * p ** (bt - 2.0))


# ---- 标量接口 ----

def _check_ratio(p: float, open_right: bool = False):
    p = float(p)
    upper_ok = p < 1.0 if open_right else p <= 1.0
    if not (math.isfinite(p) and p > 0.0 and upper_ok):
        interval = "(0, 1)" if open_right else "(0, 1]"
        raise DomainError('p', p, f"采样比例必须位于 {interval}")
    return p


def _resolve_bias(params: DplParams, direction: DirectionSpec, strict: bool) -> Tuple[float, bool]:
    bias = params.bias_for(direction)
    if bias is None:
        if strict:
            raise MissingBiasError(direction.name)
        return 0.0, True
    return bias, False


def eval_dpl(params: DplParams, p: float, direction: DirectionSpec, strict: bool = False) -> float:
    """预测方向在采样比例 p 下的评估交叉熵"""
    p = _check_ratio(p)
    bias, missing = _resolve_bias(params, direction, strict)
    if missing:
        debug(f"方向 {direction.key} 没有偏置项，M 按 0 计算")
    return float(dpl_shape(params, p, direction.data_size)) + bias


def missing_biases(params: DplParams, directions: Sequence[DirectionSpec]) -> List[str]:
    """没有偏置项（将按 0 计算）的方向名称"""
    return [d.name for d in directions if params.bias_for(d) is None]


def dpl_derivative(params: DplParams, p: float, direction: DirectionSpec) -> float:
    """dF/dp 的解析式"""
    p = _check_ratio(p, open_right=True)
    return float(dpl_shape_derivative(params, p, direction.data_size))


def dpl_second_derivative(params: DplParams, p: float, direction: DirectionSpec) -> float:
    p = _check_ratio(p)
    return float(dpl_shape_second_derivative(params, p, direction.data_size))


def overfit_coefficient(params: DplParams, direction: DirectionSpec) -> float:
    """D^γ + b，为正时曲线可能呈U形"""
    return direction.data_size ** params.gamma + params.b


def overfit_threshold(params: DplParams) -> Optional[float]:
    """过拟合系数变号处的数据量（百万条），不存在时返回 None"""
    if params.gamma == 0.0 or params.b >= 0.0:
        return None
    return (-params.b) ** (1.0 / params.gamma)


def analyze_critical_point(params: DplParams, direction: DirectionSpec) -> CriticalPointReport:
    """求U形曲线的极小点 p*，p* >= 1 时报告而不截断"""
    coef = overfit_coefficient(params, direction)
    if coef <= 0.0:
        return CriticalPointReport(None, None, CRITICAL_MONOTONE, coef)

    a, bt = params.alpha, params.beta
    numerator = a * params.k ** (-a)
    denominator = bt * coef * params.q ** bt
    raw = (numerator / denominator) ** (1.0 / (a + bt))
    if raw >= 1.0:
        debug(f"方向 {direction.name} 的临界点 {raw:.4f} 不在 (0,1) 内")
        return CriticalPointReport(None, raw, CRITICAL_BEYOND_UNIT, coef)
    return CriticalPointReport(raw, raw, CRITICAL_INTERIOR, coef)


def critical_point(params: DplParams, direction: DirectionSpec) -> Optional[float]:
    """内部临界点，单调方向或 p* >= 1 时返回 None"""
    return analyze_critical_point(params, direction).ratio


def data_shares(directions: Sequence[DirectionSpec]) -> np.ndarray:
    """各方向训练样本所占比例"""
    sizes = [d.data_size for d in directions]
    total = math.fsum(sizes)
    return np.array([s / total for s in sizes])


def temperature_weights(shares: Sequence[float], temperature: float) -> np.ndarray:
    """温度采样: w_i ∝ s_i^(1/T)"""
    shares = np.asarray(shares, dtype=float)
    if shares.ndim != 1 or shares.size == 0:
        raise ParameterError('shares', "需要非空的一维比例向量")
    if not np.all(np.isfinite(shares)) or np.any(shares <= 0.0):
        raise DomainError('shares', shares.tolist(), "所有比例必须为正")
    if not (math.isfinite(temperature) and temperature > 0.0):
        raise DomainError('T', temperature, "温度必须为正")
    if abs(math.fsum(shares) - 1.0) > 1e-9:
        raise DomainError('shares', math.fsum(shares), "比例之和必须为1")

    weights = softmax(np.log(shares) / temperature)
    return weights / math.fsum(weights)


def predict_curve(params: DplParams, direction: DirectionSpec, grid: Sequence[float],
                  strict: bool = False) -> CurvePrediction:
    """在给定网格上预测损失曲线"""
    ratios = tuple(_check_ratio(p) for p in grid)
    bias, missing = _resolve_bias(params, direction, strict)
    losses = dpl_shape(params, np.array(ratios), direction.data_size) + bias
    lo, hi = VALIDATED_RANGE
    extrapolated = tuple(not (lo <= p <= hi) for p in ratios)

    if missing:
        warning(f"方向 {direction.name} 没有偏置项，按 0 处理")
    if any(extrapolated):
        warning(f"方向 {direction.name} 的预测包含 {sum(extrapolated)} 个 [0.1, 0.9] 之外的外推点")
    return CurvePrediction(direction, ratios, tuple(float(v) for v in losses), extrapolated, missing)
