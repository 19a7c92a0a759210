#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
自定义异常类模块

定义项目中使用的自定义异常，计算模块只抛出异常，退出码由命令行层决定
"""

from typing import Optional, Sequence


class DplError(Exception):
    """双幂律工具基础异常类"""
    # fit_full 出错时记录所在步骤
    step: Optional[int] = None


class ParameterError(DplError):
    """参数错误"""
    def __init__(self, param_name: str, message: str):
        self.param_name = param_name
        self.message = message
        super().__init__(f"参数 '{param_name}' 错误: {message}")


class DomainError(ParameterError):
    """取值超出定义域"""
    def __init__(self, param_name: str, value, message: str):
        self.value = value
        super().__init__(param_name, f"{message} (当前值: {value})")


class MissingBiasError(DplError):
    """严格模式下缺少方向的偏置项"""
    def __init__(self, direction: str):
        self.direction = direction
        super().__init__(f"方向 '{direction}' 没有偏置项 M_inf")


class DimensionMismatchError(DplError):
    """维度不一致"""
    def __init__(self, expected: int, actual: int, what: str = "向量"):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}维度不一致: 期望 {expected}，实际 {actual}")


class InsufficientDataError(DplError):
    """数据量不足"""
    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class IdentifiabilityError(DplError):
    """参数不可辨识"""
    def __init__(self, message: str):
        self.message = message
        super().__init__(f"参数不可辨识 (identifiability): {message}")


class DivergenceError(DplError):
    """迭代过程中残差出现非有限值"""
    def __init__(self, message: str, best_x: Optional[Sequence[float]] = None, best_norm: Optional[float] = None):
        self.message = message
        self.best_x = None if best_x is None else list(best_x)
        self.best_norm = best_norm
        super().__init__(f"求解发散: {message}")


class UndefinedStatisticError(DplError):
    """统计量无定义"""
    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class InfeasibleFloorError(DplError):
    """采样比例下限不可行"""
    def __init__(self, floor: float, n: int):
        self.floor = floor
        self.n = n
        super().__init__(f"采样比例下限 {floor} 对 {n} 个方向不可行 (需要 floor*n < 1)")


class BudgetExceededError(DplError):
    """网格穷举超出预算"""
    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class PresetNotFoundError(DplError):
    """未知的预设"""
    def __init__(self, label: str, available: Sequence[str]):
        self.label = label
        self.available = list(available)
        super().__init__(f"未知的预设 '{label}'，可用预设: {', '.join(self.available)}")


class ConfigError(DplError):
    """配置错误"""
    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class DataReadError(DplError):
    """数据读取错误"""
    def __init__(self, file_path: str, message: str):
        self.file_path = file_path
        self.message = message
        super().__init__(f"读取文件 '{file_path}' 时出错: {message}")


class DataFormatError(DplError):
    """数据格式错误"""
    def __init__(self, message: str, line: Optional[int] = None):
        self.message = message
        self.line = line
        if line is not None:
            message = f"第 {line} 行: {message}"
        super().__init__(message)


class SaveError(DplError):
    """保存文件错误"""
    def __init__(self, file_path: str, message: str):
        self.file_path = file_path
        self.message = message
        super().__init__(f"保存文件 '{file_path}' 时出错: {message}")
