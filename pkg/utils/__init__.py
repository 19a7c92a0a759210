"""
工具函数模块
"""

from .logger import get_logger, set_verbose, set_command, debug, info, warning, error, exception
from .serialization import (
    CSV_FLOAT_FORMAT, format_float, to_jsonable, dumps_json,
    write_text, write_json, file_sha256
)

__all__ = [
    'get_logger',
    'set_verbose',
    'debug',
    'info',
    'warning',
    'error',
    'set_command',
    'exception',
    'CSV_FLOAT_FORMAT',
    'format_float',
    'to_jsonable',
    'dumps_json',
    'write_text',
    'write_json',
    'file_sha256'
]
