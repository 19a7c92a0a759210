#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
运行清单

每个输出都带有一份清单。嵌入输出的部分不含时间戳，相同清单对应相同输出；
带时间戳的完整清单写在输出文件旁边的 <output>.manifest.json 中。
"""

import os
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Optional

from utils import file_sha256, write_json, debug

# 不影响结果的参数不进入清单
_IGNORED_ARGS = {'output', 'detail', 'config', 'verbose', 'handler'}
# 输入文件参数只记录文件名，内容由 inputs 中的哈希确定
_PATH_ARGS = {'observations', 'sweep_file', 'sim_config', 'params', 'directions'}


@dataclass
class RunManifest:
    """一次命令运行的记录"""
    command: str
    tool_version: str
    seed: Optional[int]
    config: Dict[str, Any]
    arguments: Dict[str, Any] = field(default_factory=dict)
    inputs: List[Dict[str, str]] = field(default_factory=list)
    started_at: str = field(default_factory=lambda: datetime.now().isoformat(timespec='seconds'))
    finished_at: Optional[str] = None

    @classmethod
    def from_args(cls, command: str, args, config: Dict[str, Any], version: str) -> 'RunManifest':
        arguments = {k: os.path.basename(v) if k in _PATH_ARGS and isinstance(v, str) else v
                     for k, v in sorted(vars(args).items())
                     if k not in _IGNORED_ARGS and not callable(v)}
        return cls(command=command, tool_version=version, seed=getattr(args, 'seed', None),
                   config=config, arguments=arguments)

    def add_input(self, path: str):
        """记录输入文件及其内容哈希"""
        self.inputs.append({'name': os.path.basename(path), 'sha256': file_sha256(path)})

    def deterministic(self) -> Dict[str, Any]:
        """嵌入输出的部分，不含时间戳和绝对路径"""
        return {
            'command': self.command,
            'tool_version': self.tool_version,
            'seed': self.seed,
            'arguments': self.arguments,
            'inputs': list(self.inputs),
            'config': self.config
        }

    def to_dict(self) -> Dict[str, Any]:
        data = self.deterministic()
        data['started_at'] = self.started_at
        data['finished_at'] = self.finished_at
        return data

    def write_sidecar(self, output_path: Optional[str]):
        """输出为文件时，在旁边写完整清单"""
        if not output_path or output_path == '-':
            return
        self.finished_at = datetime.now().isoformat(timespec='seconds')
        path = f"{output_path}.manifest.json"
        write_json(self.to_dict(), path)
        debug(f"运行清单已写入: {path}")
