#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
帕累托分析模块

支配关系按损失定义，越小越好。collapse 指扫描中出现被支配的解，
即提高某个方向的采样比例反而让该方向变差。
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import Delaunay, QhullError

from utils import info, debug
from .dpl_model import DirectionSpec, DplParams, eval_dpl
from .exceptions import DimensionMismatchError, DomainError, InsufficientDataError

MONOTONE_IMPROVING = 'monotone-improving'
MONOTONE_DEGRADING = 'monotone-degrading'
U_SHAPED = 'U-shaped'
IRREGULAR = 'irregular'

DEFAULT_TOLERANCE = 1e-3


@dataclass(frozen=True)
class LossVector:
    """各方向的损失，tag 为任意附加信息（例如产生它的采样比例）"""
    losses: Tuple[float, ...]
    tag: Any = None

    def __post_init__(self):
        values = tuple(float(v) for v in self.losses)
        if len(values) < 2:
            raise DimensionMismatchError(2, len(values), "损失向量")
        if not all(math.isfinite(v) for v in values):
            raise DomainError('losses', values, "损失必须为有限数")
        object.__setattr__(self, 'losses', values)

    def __len__(self) -> int:
        return len(self.losses)


@dataclass(frozen=True)
class SweepPoint:
    """扫描中的一个点: 采样比例向量及对应的损失"""
    ratios: Tuple[float, ...]
    losses: LossVector

    @classmethod
    def of(cls, ratios: Sequence[float], losses: Union[LossVector, Sequence[float]]) -> 'SweepPoint':
        if not isinstance(losses, LossVector):
            losses = LossVector(tuple(losses), tuple(ratios))
        return cls(tuple(float(r) for r in ratios), losses)


@dataclass(frozen=True)
class DirectionTrend:
    name: str
    classification: str
    minimum_ratio: float
    minimum_loss: float

    def to_dict(self) -> Dict[str, object]:
        return {
            'name': self.name, 'classification': self.classification,
            'minimum_ratio': self.minimum_ratio, 'minimum_loss': self.minimum_loss
        }


@dataclass
class CollapseReport:
    """扫描的塌缩分析结果"""
    dominated_indices: List[int]
    per_direction: List[DirectionTrend]
    front_indices: List[int]
    tolerance: float
    triangles: List[Tuple[int, int, int]] = field(default_factory=list)

    @property
    def collapsed(self) -> bool:
        return bool(self.dominated_indices)

    @property
    def per_direction_monotonicity(self) -> Dict[str, str]:
        return {t.name: t.classification for t in self.per_direction}

    def to_dict(self) -> Dict[str, object]:
        return {
            'collapsed': self.collapsed,
            'dominated_indices': list(self.dominated_indices),
            'front_indices': list(self.front_indices),
            'per_direction': [t.to_dict() for t in self.per_direction],
            'tolerance': self.tolerance,
            'triangles': [list(t) for t in self.triangles]
        }


def _as_array(v: Union[LossVector, Sequence[float]]) -> np.ndarray:
    return np.asarray(v.losses if isinstance(v, LossVector) else v, dtype=float)


def dominates(a: Union[LossVector, Sequence[float]], b: Union[LossVector, Sequence[float]]) -> bool:
    """a 帕累托支配 b: 每一维不差，且至少一维严格更好"""
    x, y = _as_array(a), _as_array(b)
    if x.shape != y.shape:
        raise DimensionMismatchError(x.size, y.size, "损失向量")
    return bool(np.all(x <= y) and np.any(x < y))


def _dominance_matrix(values: np.ndarray, margin: float = 0.0) -> np.ndarray:
    """dom[i, j] 表示 i 支配 j；margin > 0 时严格改进需超过 margin"""
    a = values[:, None, :]
    b = values[None, :, :]
    no_worse = np.all(a <= b, axis=2)
    better = np.any(a < b - margin, axis=2)
    return no_worse & better


def _loss_matrix(points: Sequence[Union[LossVector, Sequence[float]]]) -> np.ndarray:
    rows = [_as_array(p) for p in points]
    width = rows[0].size
    for row in rows:
        if row.size != width:
            raise DimensionMismatchError(width, row.size, "损失向量")
    return np.vstack(rows)


def pareto_front(points: Sequence[Union[LossVector, Sequence[float]]], keep_duplicates: bool = True) -> List[int]:
    """
    非支配点的下标（升序）

    keep_duplicates=False 时完全相同的点只保留下标最小的一个
    """
    if len(points) == 0:
        raise InsufficientDataError("帕累托前沿至少需要1个点")
    values = _loss_matrix(points)
    dominated = _dominance_matrix(values).any(axis=0)
    front = [i for i in range(len(values)) if not dominated[i]]
    if keep_duplicates:
        return front

    kept: List[int] = []
    seen = set()
    for i in front:
        key = tuple(values[i])
        if key not in seen:
            seen.add(key)
            kept.append(i)
    return kept


def _classify(own_ratio: np.ndarray, losses: np.ndarray, tolerance: float) -> Tuple[str, float, float]:
    """沿方向自身的采样比例判断损失曲线形状"""
    xs = np.unique(own_ratio)
    ys = np.array([losses[own_ratio == x].mean() for x in xs])
    m = int(np.argmin(ys))
    min_ratio, min_loss = float(xs[m]), float(ys[m])
    if xs.size < 3 or np.ptp(ys) <= tolerance:
        return IRREGULAR, min_ratio, min_loss

    steps = np.diff(ys)
    if np.all(steps <= tolerance) and ys[-1] < ys[0] - tolerance:
        return MONOTONE_IMPROVING, min_ratio, min_loss
    if np.all(steps >= -tolerance) and ys[-1] > ys[0] + tolerance:
        return MONOTONE_DEGRADING, min_ratio, min_loss
    if 0 < m < ys.size - 1 and min_loss < ys[0] - tolerance and min_loss < ys[-1] - tolerance:
        return U_SHAPED, min_ratio, min_loss
    return IRREGULAR, min_ratio, min_loss


def front_triangulation(ratios: np.ndarray) -> List[Tuple[int, int, int]]:
    """三方向扫描在前两个比例坐标上的Delaunay三角剖分，退化时返回空列表"""
    ratios = np.asarray(ratios, dtype=float)
    if ratios.ndim != 2 or ratios.shape[1] != 3 or ratios.shape[0] < 3:
        return []
    try:
        tri = Delaunay(ratios[:, :2])
    except QhullError:
        debug("扫描点共线，跳过三角剖分")
        return []
    return sorted(tuple(sorted(int(i) for i in simplex)) for simplex in tri.simplices)


def detect_collapse(sweep: Sequence[Union[SweepPoint, Tuple[Sequence[float], Sequence[float]]]],
                    tolerance: float = DEFAULT_TOLERANCE,
                    names: Optional[Sequence[str]] = None) -> CollapseReport:
    """
    检测扫描中的帕累托前沿塌缩

    被支配点要求每一维不差，且至少一维好出 tolerance 以上；
    形状分类按各方向自身采样比例进行，同一比例的多个点取平均。

    Raises:
        InsufficientDataError: 扫描点少于3个
        DimensionMismatchError: 维度不一致
        DomainError: 比例向量不在单纯形上
    """
    if len(sweep) < 3:
        raise InsufficientDataError(f"塌缩检测需要至少3个扫描点 (needs >= 3 points)，当前 {len(sweep)} 个")
    if not (math.isfinite(tolerance) and tolerance >= 0.0):
        raise DomainError('tolerance', tolerance, "容差必须为非负数")

    points = [p if isinstance(p, SweepPoint) else SweepPoint.of(*p) for p in sweep]
    width = len(points[0].losses)
    for point in points:
        if len(point.ratios) != width:
            raise DimensionMismatchError(width, len(point.ratios), "比例向量")
        if len(point.losses) != width:
            raise DimensionMismatchError(width, len(point.losses), "损失向量")
        r = np.asarray(point.ratios)
        if np.any(r < 0.0) or abs(math.fsum(point.ratios) - 1.0) > 1e-6:
            raise DomainError('ratios', point.ratios, "比例向量必须位于单纯形上")
    if names is None:
        names = [f'task{i}' for i in range(width)]
    elif len(names) != width:
        raise DimensionMismatchError(width, len(names), "方向名称")

    ratios = np.array([p.ratios for p in points])
    losses = np.array([p.losses.losses for p in points])
    dominated = _dominance_matrix(losses, margin=tolerance).any(axis=0)
    dominated_indices = [int(i) for i in np.flatnonzero(dominated)]

    trends = []
    for d in range(width):
        label, min_ratio, min_loss = _classify(ratios[:, d], losses[:, d], tolerance)
        trends.append(DirectionTrend(str(names[d]), label, min_ratio, min_loss))

    report = CollapseReport(
        dominated_indices=dominated_indices,
        per_direction=trends,
        front_indices=pareto_front(list(losses)),
        tolerance=tolerance,
        triangles=front_triangulation(ratios)
    )
    info(f"塌缩检测: {len(points)} 个点, 被支配 {len(dominated_indices)} 个, collapsed={report.collapsed}")
    return report


def predicted_sweep(params: DplParams, directions: Sequence[DirectionSpec],
                    ratio_vectors: Sequence[Sequence[float]]) -> List[SweepPoint]:
    """用双幂律预测生成扫描"""
    points = []
    for ratios in ratio_vectors:
        if len(ratios) != len(directions):
            raise DimensionMismatchError(len(directions), len(ratios), "比例向量")
        losses = [eval_dpl(params, p, d) for p, d in zip(ratios, directions)]
        points.append(SweepPoint.of(ratios, losses))
    return points
