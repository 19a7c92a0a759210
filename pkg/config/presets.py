#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
预设参数管理

每个预设是 presets/ 目录下的一个JSON文档，字段为 {label, k, alpha, q, beta, gamma, b}。
环境变量 DPLOPT_PRESET_DIR 可以替换预设目录。
"""

import json
import os
from typing import Dict, List, Optional

from utils import debug, warning
from core.dpl_model import Preset
from core.exceptions import PresetNotFoundError, DataFormatError

PRESET_FIELDS = ('label', 'k', 'alpha', 'q', 'beta', 'gamma', 'b')


def get_preset_dir() -> str:
    """预设目录"""
    env_dir = os.environ.get('DPLOPT_PRESET_DIR')
    if env_dir:
        return env_dir
    return os.path.join(os.path.dirname(os.path.abspath(__file__)), 'presets')


def _read_preset(path: str) -> Preset:
    with open(path, 'r', encoding='utf-8') as f:
        data = json.load(f)
    missing = [name for name in PRESET_FIELDS if name not in data]
    if missing:
        raise DataFormatError(f"预设文件 {path} 缺少字段: {', '.join(missing)}")
    return Preset(
        label=str(data['label']),
        k=float(data['k']), alpha=float(data['alpha']),
        q=float(data['q']), beta=float(data['beta']),
        gamma=float(data['gamma']), b=float(data['b']),
        description=str(data.get('description', ''))
    )


def load_presets(preset_dir: Optional[str] = None) -> Dict[str, Preset]:
    """读取目录下所有预设，按标签排序"""
    preset_dir = preset_dir or get_preset_dir()
    presets: Dict[str, Preset] = {}
    if not os.path.isdir(preset_dir):
        warning(f"预设目录不存在: {preset_dir}")
        return presets

    for file_name in sorted(os.listdir(preset_dir)):
        if not file_name.endswith('.json'):
            continue
        path = os.path.join(preset_dir, file_name)
        try:
            preset = _read_preset(path)
        except (OSError, ValueError, DataFormatError) as e:
            warning(f"跳过无法读取的预设 {path}: {e}")
            continue
        presets[preset.label] = preset
    debug(f"已加载 {len(presets)} 个预设")
    return dict(sorted(presets.items()))


def available_presets(preset_dir: Optional[str] = None) -> List[str]:
    return list(load_presets(preset_dir))


def get_preset(label: str, preset_dir: Optional[str] = None) -> Preset:
    """按标签取预设，未知标签时列出可用预设"""
    presets = load_presets(preset_dir)
    if label not in presets:
        raise PresetNotFoundError(label, list(presets))
    return presets[label]
