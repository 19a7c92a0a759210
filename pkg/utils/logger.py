#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
日志系统模块

控制台输出写到 stderr（stdout 留给命令结果），文件日志按天轮转，
每条文件日志带上当前子命令的名称，便于在同一个日志文件里区分多次运行。
"""

import os
import sys
import logging
from datetime import datetime
from logging.handlers import RotatingFileHandler
from typing import Optional

LOGGER_NAME = 'DplOpt'
LOG_DIR_ENV = 'DPLOPT_LOG_DIR'

CONSOLE_FORMAT = '%(asctime)s [%(levelname)s] %(message)s'
FILE_FORMAT = '%(asctime)s [%(levelname)s] [%(command)s] [%(module)s:%(lineno)d] %(message)s'


class _CommandFilter(logging.Filter):
    """给日志记录附加子命令名称"""

    def __init__(self):
        super().__init__()
        self.command = '-'

    def filter(self, record: logging.LogRecord) -> bool:
        record.command = self.command
        return True


class DplLogger:
    """双幂律工具的日志管理类（单例）"""

    _instance: Optional['DplLogger'] = None
    _initialized: bool = False

    def __new__(cls) -> 'DplLogger':
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        if DplLogger._initialized:
            return
        DplLogger._initialized = True

        self.logger = logging.getLogger(LOGGER_NAME)
        self.logger.setLevel(logging.DEBUG)
        self.logger.propagate = False
        self.logger.handlers.clear()

        self.command_filter = _CommandFilter()
        self.logger.addFilter(self.command_filter)

        self.console_handler = logging.StreamHandler(sys.stderr)
        self.console_handler.setLevel(logging.INFO)
        self.console_handler.setFormatter(logging.Formatter(CONSOLE_FORMAT, datefmt='%H:%M:%S'))
        self.logger.addHandler(self.console_handler)

        self.log_file: Optional[str] = None
        self.log_dir = self._get_log_directory()
        try:
            os.makedirs(self.log_dir, exist_ok=True)
            self._add_file_handler()
        except OSError as e:
            self.logger.warning(f"无法创建日志目录 {self.log_dir}: {e}，仅输出到控制台")

    @staticmethod
    def _get_log_directory() -> str:
        env_dir = os.environ.get(LOG_DIR_ENV)
        if env_dir:
            return env_dir
        base_path = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        return os.path.join(base_path, 'logs')

    def _add_file_handler(self):
        self.log_file = os.path.join(self.log_dir, f'dplopt_{datetime.now().strftime("%Y%m%d")}.log')
        handler = RotatingFileHandler(self.log_file, maxBytes=5 * 1024 * 1024, backupCount=5, encoding='utf-8')
        handler.setLevel(logging.DEBUG)
        handler.setFormatter(logging.Formatter(FILE_FORMAT, datefmt='%Y-%m-%d %H:%M:%S'))
        self.logger.addHandler(handler)

    def set_console_level(self, level: int):
        self.console_handler.setLevel(level)

    def set_command(self, command: Optional[str]):
        self.command_filter.command = command or '-'

    def log(self, level: int, message: str, exc_info: bool = False):
        # stacklevel=3 让 module:lineno 指向调用便捷函数的位置
        self.logger.log(level, message, exc_info=exc_info, stacklevel=3)


_logger: Optional[DplLogger] = None


def get_logger() -> DplLogger:
    """获取全局日志实例"""
    global _logger
    if _logger is None:
        _logger = DplLogger()
    return _logger


def set_verbose(verbose: bool):
    """--verbose 时控制台输出调试信息"""
    get_logger().set_console_level(logging.DEBUG if verbose else logging.INFO)


def set_command(command: Optional[str]):
    """记录当前子命令，写入文件日志"""
    get_logger().set_command(command)


def debug(message: str):
    get_logger().log(logging.DEBUG, message)


def info(message: str):
    get_logger().log(logging.INFO, message)


def warning(message: str):
    get_logger().log(logging.WARNING, message)


def error(message: str):
    get_logger().log(logging.ERROR, message)


def exception(message: str):
    """记录异常信息（包含堆栈跟踪）"""
    get_logger().log(logging.ERROR, message, exc_info=True)
