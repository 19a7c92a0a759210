#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
数据输入输出模块
"""

import io
import json
import math
import os
import sys
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from utils import info, debug, exception, CSV_FLOAT_FORMAT
from .dpl_model import DirectionSpec
from .exceptions import (
    DataFormatError, DataReadError, DplError, InsufficientDataError, SaveError
)
from .fitting import Observation
from .pareto import SweepPoint

OBSERVATION_COLUMNS = ['direction', 'data_size_millions', 'sampling_ratio', 'eval_cross_entropy']
SWEEP_COLUMNS = ['sweep', 'point'] + OBSERVATION_COLUMNS
CURVE_COLUMNS = ['direction', 'sampling_ratio', 'predicted_loss']


def _read_table(file_path: str) -> pd.DataFrame:
    """
    读取表格文件，所有单元格按字符串读入

    注意:
        - Excel文件：支持.xlsx格式
        - txt文件：自动检测分隔符（逗号、制表符、空格等）
    """
    file_ext = os.path.splitext(file_path)[1].lower()
    try:
        if file_ext == '.xlsx':
            data = pd.read_excel(file_path, dtype=str, engine='openpyxl')
        elif file_ext == '.txt':
            try:
                # 先尝试自动检测分隔符
                data = pd.read_csv(file_path, sep=None, dtype=str, engine='python', keep_default_na=False)
            except pd.errors.ParserError:
                # 如果自动检测失败，按空白分隔
                data = pd.read_csv(file_path, sep=r'\s+', dtype=str, keep_default_na=False)
        else:
            data = pd.read_csv(file_path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise InsufficientDataError(f"文件 '{file_path}' 中没有观测数据 (no observations)")
    except FileNotFoundError:
        raise DataReadError(file_path, "文件不存在")
    except Exception as e:
        exception(f"读取文件 {file_path} 时出错")
        raise DataReadError(file_path, str(e))
    data.columns = [str(c).strip() for c in data.columns]
    return data.fillna('')


def _require_columns(data: pd.DataFrame, columns: Sequence[str], file_path: str):
    missing = [c for c in columns if c not in data.columns]
    if missing:
        raise DataFormatError(f"文件 '{file_path}' 缺少列: {', '.join(missing)}", line=1)


def _parse_float(value: str, column: str, line: int) -> float:
    try:
        number = float(str(value).strip())
    except ValueError:
        raise DataFormatError(f"列 '{column}' 的值 '{value}' 不是数字", line=line)
    if not math.isfinite(number):
        raise DataFormatError(f"列 '{column}' 的值 '{value}' 不是有限数", line=line)
    return number


def read_observations(file_path: str) -> List[Observation]:
    """
    读取实验日志

    表头: direction,data_size_millions,sampling_ratio,eval_cross_entropy，其余列忽略

    Raises:
        InsufficientDataError: 文件中没有观测
        DataFormatError: 缺少列或某一行格式错误（带行号）
    """
    data = _read_table(file_path)
    _require_columns(data, OBSERVATION_COLUMNS, file_path)
    observations = []
    for i, record in enumerate(data.to_dict('records')):
        line = i + 2
        name = str(record['direction']).strip()
        if not name:
            raise DataFormatError("方向名称为空", line=line)
        try:
            observations.append(Observation(
                direction=name,
                sampling_ratio=_parse_float(record['sampling_ratio'], 'sampling_ratio', line),
                eval_loss=_parse_float(record['eval_cross_entropy'], 'eval_cross_entropy', line),
                data_size=_parse_float(record['data_size_millions'], 'data_size_millions', line)
            ))
        except DataFormatError:
            raise
        except DplError as e:
            raise DataFormatError(str(e), line=line) from e
    if not observations:
        raise InsufficientDataError(f"文件 '{file_path}' 中没有观测数据 (no observations)")
    info(f"成功读取文件: {file_path}，共 {len(observations)} 个观测")
    return observations


def _points_from_frame(data: pd.DataFrame, file_path: str, sweep: Optional[str]) -> Tuple[List[SweepPoint], List[str]]:
    frame = data.copy()
    frame['_line'] = range(2, len(frame) + 2)
    if 'sweep' in frame.columns:
        labels = list(dict.fromkeys(frame['sweep']))
        chosen = sweep or ('main' if 'main' in labels else labels[0])
        frame = frame[frame['sweep'] == chosen]
        if frame.empty:
            raise DataFormatError(f"文件 '{file_path}' 中没有扫描 '{chosen}'")
        debug(f"使用扫描 '{chosen}'")

    names = list(dict.fromkeys(str(v).strip() for v in frame['direction']))
    values = {}
    for row in frame.to_dict('records'):
        line = int(row['_line'])
        values[line] = (
            str(row['direction']).strip(),
            _parse_float(row['sampling_ratio'], 'sampling_ratio', line),
            _parse_float(row['eval_cross_entropy'], 'eval_cross_entropy', line)
        )

    groups: Dict[object, Dict[str, Tuple[float, float]]] = {}
    if 'point' in frame.columns:
        for row in frame.to_dict('records'):
            line = int(row['_line'])
            name, ratio, loss = values[line]
            groups.setdefault(str(row['point']).strip(), {})[name] = (ratio, loss)
    elif len(names) == 2:
        # 两个方向且没有 point 列时按互补比例配对
        first = [values[int(r['_line'])] for r in frame.to_dict('records') if str(r['direction']).strip() == names[0]]
        second = [values[int(r['_line'])] for r in frame.to_dict('records') if str(r['direction']).strip() == names[1]]
        for index, (_, ratio, loss) in enumerate(first):
            partner = [item for item in second if abs(item[1] - (1.0 - ratio)) <= 1e-9]
            if not partner:
                raise DataFormatError(f"方向 '{names[0]}' 比例 {ratio} 找不到互补的 '{names[1]}' 记录")
            groups[index] = {names[0]: (ratio, loss), names[1]: (partner[0][1], partner[0][2])}
    else:
        raise DataFormatError(f"文件 '{file_path}' 有 {len(names)} 个方向，需要 point 列来组成扫描点")

    points = []
    for key, entries in groups.items():
        if set(entries) != set(names):
            raise DataFormatError(f"扫描点 {key} 缺少部分方向的数据")
        ratios = [entries[n][0] for n in names]
        losses = [entries[n][1] for n in names]
        points.append(SweepPoint.of(ratios, losses))
    return points, names


def read_sweep(file_path: str, sweep: Optional[str] = None) -> Tuple[List[SweepPoint], List[str]]:
    """
    读取扫描结果，支持CSV（与观测文件相同，可带 point/sweep 列）和
    JSON {points: [{ratios: [...], losses: [...]}], directions?: [...]}

    返回:
        (扫描点列表, 方向名称列表)
    """
    if os.path.splitext(file_path)[1].lower() == '.json':
        document = read_json(file_path)
        raw_points = document.get('points') if isinstance(document, dict) else None
        if not isinstance(raw_points, list):
            raise DataFormatError(f"文件 '{file_path}' 缺少 points 列表")
        points = []
        for i, item in enumerate(raw_points):
            try:
                points.append(SweepPoint.of(item['ratios'], item['losses']))
            except (KeyError, TypeError) as e:
                raise DataFormatError(f"第 {i} 个扫描点格式错误: {e}") from e
        width = len(points[0].ratios) if points else 0
        names = document.get('directions') or [f'task{i}' for i in range(width)]
        return points, [str(n) for n in names]

    data = _read_table(file_path)
    _require_columns(data, ['direction', 'sampling_ratio', 'eval_cross_entropy'], file_path)
    if data.empty:
        raise InsufficientDataError(f"文件 '{file_path}' 中没有扫描数据")
    points, names = _points_from_frame(data, file_path, sweep)
    info(f"成功读取扫描: {file_path}，共 {len(points)} 个点")
    return points, names


def read_json(file_path: str):
    """读取JSON文档"""
    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except FileNotFoundError:
        raise DataReadError(file_path, "文件不存在")
    except json.JSONDecodeError as e:
        raise DataFormatError(f"文件 '{file_path}' 不是合法的JSON: {e.msg}", line=e.lineno)
    except OSError as e:
        raise DataReadError(file_path, str(e))


def read_directions(file_path: str) -> List[DirectionSpec]:
    """读取方向列表 [{name, data_size_millions}]"""
    document = read_json(file_path)
    if isinstance(document, dict):
        document = document.get('directions')
    if not isinstance(document, list) or not document:
        raise DataFormatError(f"文件 '{file_path}' 需要非空的方向列表")
    directions = []
    for i, item in enumerate(document):
        try:
            directions.append(DirectionSpec(str(item['name']), float(item['data_size_millions'])))
        except (KeyError, TypeError, ValueError) as e:
            raise DataFormatError(f"第 {i} 个方向格式错误: {e}") from e
    return directions


def rows_to_csv(rows: Sequence[Dict[str, object]], columns: Sequence[str]) -> str:
    """长表转CSV文本，浮点数保留17位有效数字"""
    frame = pd.DataFrame(list(rows), columns=list(columns))
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n')
    return buffer.getvalue()


def write_csv(rows: Sequence[Dict[str, object]], columns: Sequence[str], file_path: Optional[str] = None):
    """写出CSV；file_path 为空时写到stdout"""
    text = rows_to_csv(rows, columns)
    if file_path is None or file_path == '-':
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    try:
        directory = os.path.dirname(os.path.abspath(file_path))
        os.makedirs(directory, exist_ok=True)
        with open(file_path, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
    except OSError as e:
        raise SaveError(file_path, str(e))
    info(f"结果已保存到: {file_path}")


def save_rows_to_excel(rows: Sequence[Dict[str, object]], columns: Sequence[str],
                       filename: str, sheet_name: str = '预测曲线') -> bool:
    """
    将长表保存到Excel文件

    Raises:
        SaveError: 保存失败时抛出
    """
    try:
        info(f"开始保存结果到: {filename}")
        with pd.ExcelWriter(filename, engine='openpyxl') as writer:
            pd.DataFrame(list(rows), columns=list(columns)).to_excel(writer, sheet_name=sheet_name, index=False)
        info(f"结果已成功保存到: {filename}")
        return True
    except Exception as e:
        exception(f"保存结果到Excel时出错: {str(e)}")
        raise SaveError(filename, str(e))
