import logging
import os
import tempfile

# 测试期间日志写到临时目录
os.environ.setdefault('DPLOPT_LOG_DIR', tempfile.mkdtemp(prefix='dplopt-logs-'))

import pytest

from config import get_preset
from core import DirectionSpec, generate_observations
from core.data_io import OBSERVATION_COLUMNS, write_csv
from utils import get_logger

RATIOS = [round(0.1 * i, 10) for i in range(1, 10)]

# 一个高资源方向加三个不同数据量的低资源方向
FIT_DIRECTIONS = [
    DirectionSpec('high', 10.0),
    DirectionSpec('low', 1.0),
    DirectionSpec('low', 0.5),
    DirectionSpec('low', 0.26),
]


@pytest.fixture
def base_params():
    return get_preset('base').to_params()


@pytest.fixture
def de_hi():
    """德语 4.6M 与印地语 0.26M"""
    return [DirectionSpec('de', 4.6), DirectionSpec('hi', 0.26)]


@pytest.fixture
def fit_directions():
    return list(FIT_DIRECTIONS)


@pytest.fixture
def synthetic_observations(base_params):
    return generate_observations(base_params, FIT_DIRECTIONS, RATIOS)


def observation_rows(observations):
    return [{'direction': o.direction, 'data_size_millions': o.data_size,
             'sampling_ratio': o.sampling_ratio, 'eval_cross_entropy': o.eval_loss}
            for o in observations]


@pytest.fixture
def write_observations(tmp_path):
    """把观测写成CSV，返回路径"""
    def write(observations, name='observations.csv'):
        path = tmp_path / name
        write_csv(observation_rows(observations), OBSERVATION_COLUMNS, str(path))
        return path
    return write


@pytest.fixture
def observations_csv(write_observations, synthetic_observations):
    return write_observations(synthetic_observations)


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch, tmp_path):
    """默认配置，不读取仓库中的配置文件"""
    monkeypatch.setenv('DPLOPT_CONFIG', str(tmp_path / 'missing_config.json'))
    monkeypatch.delenv('DPLOPT_PRESET_DIR', raising=False)


class _RecordCollector(logging.Handler):
    def __init__(self):
        super().__init__(logging.DEBUG)
        self.records = []

    def emit(self, record):
        self.records.append(record)


@pytest.fixture
def log_records():
    """收集 DplOpt 日志器的记录（日志器不向 root 传播，caplog 收不到）"""
    collector = _RecordCollector()
    logger = get_logger().logger
    logger.addHandler(collector)
    yield collector.records
    logger.removeHandler(collector)
