"""
命令行界面模块
"""

__version__ = '0.1.0'

from .app import main, build_parser
from .manifest import RunManifest

__all__ = ['main', 'build_parser', 'RunManifest', '__version__']
