#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
序列化工具

JSON/CSV输出的统一入口。JSON中的浮点数使用Python的最短往返表示，
CSV中使用17位有效数字，两者都能按位还原。
"""

import hashlib
import json
import math
import os
import sys
from dataclasses import asdict, is_dataclass
from typing import Any, Optional

import numpy as np

CSV_FLOAT_FORMAT = '%.17g'


def format_float(value: float) -> str:
    """17位有效数字"""
    return format(float(value), '.17g')


def to_jsonable(obj: Any) -> Any:
    """把数据类、numpy类型等转换为可JSON化的结构，非有限浮点数转为None"""
    if is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, 'to_dict'):
            return to_jsonable(obj.to_dict())
        return to_jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


def dumps_json(obj: Any) -> str:
    """生成确定性的JSON文本"""
    return json.dumps(to_jsonable(obj), ensure_ascii=False, indent=2, allow_nan=False) + '\n'


def write_text(text: str, path: Optional[str] = None):
    """写入文件；path为空或'-'时写到stdout"""
    if path is None or path == '-':
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(text)


def write_json(obj: Any, path: Optional[str] = None):
    """写出JSON"""
    write_text(dumps_json(obj), path)


def file_sha256(path: str) -> str:
    """文件内容哈希，用于运行清单"""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()
