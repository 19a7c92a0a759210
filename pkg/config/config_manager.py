import copy
import os
import sys
import json
from typing import Any, Dict, Optional

from utils import info, warning, error


CONFIG_FILE_NAME = 'dplopt_config.json'

DEFAULT_CONFIG: Dict[str, Dict[str, Any]] = {
    "fitting": {
        "k0": 0.1,                   # 容量项初值
        "alpha0": 0.3,
        "beta0": 1.0,
        "k_bounds": [1e-4, 1e2],
        "q_bounds": [1e-4, 1e2],
        "alpha_bounds": [0.01, 2.0],
        "beta_bounds": [0.1, 10.0],
        "scale_bounds": [0.0, 1e3],
        "gamma_bounds": [-5.0, 5.0],
        "b_bounds": [-1e2, 1e2],
        "jacobian_step": 1e-6,       # 有限差分相对步长
        "max_nfev": 2000
    },
    "optimizer": {
        "floor": 0.01,               # 采样比例下限
        "starts": 16,                # 投影梯度多起点个数
        "zero_weight_policy": "uniform",
        "temperatures": [1, 2, 5, 10, 100],
        "seed": 0
    },
    "pareto": {
        "tolerance": 1e-3            # 单调性判断容差 (nats)
    },
    "predict": {
        "grid_start": 0.01,
        "grid_stop": 0.99,
        "grid_step": 0.01
    },
    "simulator": {}                  # 空表示使用 SimConfig 默认值
}


def get_config_path(path: Optional[str] = None) -> str:
    """获取配置文件的路径，优先级: 参数 > 环境变量 DPLOPT_CONFIG > 程序目录"""
    if path:
        return path
    env_path = os.environ.get('DPLOPT_CONFIG')
    if env_path:
        return env_path
    try:
        if hasattr(sys, '_MEIPASS'):
            base_path = os.path.dirname(sys.executable)
        else:
            base_path = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        return os.path.join(base_path, CONFIG_FILE_NAME)
    except Exception:
        # 出错时回退到当前工作目录
        return os.path.join(os.getcwd(), CONFIG_FILE_NAME)


def save_config(config_data: Dict[str, Any], path: Optional[str] = None) -> bool:
    """保存配置到文件"""
    try:
        with open(get_config_path(path), 'w', encoding='utf-8') as f:
            json.dump(config_data, f, ensure_ascii=False, indent=2)
        info("配置已保存")
        return True
    except Exception as e:
        error(f"保存配置时出错: {e}")
        return False


def load_config(path: Optional[str] = None) -> Dict[str, Dict[str, Any]]:
    """从文件读取配置，缺失的键用默认值补齐"""
    config_path = get_config_path(path)
    default_config = copy.deepcopy(DEFAULT_CONFIG)

    if not os.path.exists(config_path):
        return default_config

    try:
        with open(config_path, 'r', encoding='utf-8') as f:
            config = json.load(f)
        if not isinstance(config, dict):
            raise ValueError("配置文件顶层必须是对象")
        # 兼容老配置
        for section, values in default_config.items():
            user_values = config.get(section)
            if not isinstance(user_values, dict):
                config[section] = values
                continue
            for key, value in values.items():
                user_values.setdefault(key, value)
        info(f"配置已加载: {config_path}")
        return config
    except Exception as e:
        warning(f"读取配置时出错: {e}")
        return default_config


def get_section(config: Dict[str, Any], section: str) -> Dict[str, Any]:
    """取出配置的一个分节，未知分节返回空字典"""
    values = config.get(section)
    return dict(values) if isinstance(values, dict) else {}
