"""
配置管理模块
"""

from .config_manager import (
    get_config_path, save_config, load_config,
    get_section, DEFAULT_CONFIG
)
from .presets import get_preset_dir, load_presets, available_presets, get_preset

__all__ = [
    'get_config_path', 'save_config', 'load_config',
    'get_section', 'DEFAULT_CONFIG',
    'get_preset_dir', 'load_presets', 'available_presets', 'get_preset'
]
