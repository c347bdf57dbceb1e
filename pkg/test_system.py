#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
MTB 系统测试脚本
快速验证各组件可导入、配置可读、日志与产物存储可用
"""

import json
import sys
from pathlib import Path

import pytest

# 添加项目根目录到Python路径
sys.path.insert(0, str(Path(__file__).parent))


def test_imports():
    """测试模块导入"""
    test_modules = [
        ('config.settings', 'Settings'),
        ('core.errors', 'ToolkitError'),
        ('core.gls', 'PsiFunction'),
        ('core.mixed_norms', 'MomentTable'),
        ('core.bounds', 'optimize_quadruple'),
        ('core.sharpness', 'lower_bound_ratio'),
        ('core.entropy', 'integral_gls'),
        ('core.verification_engine', 'VerificationEngine'),
        ('data.simulate', 'summarize'),
        ('utils.logger', 'setup_logging'),
        ('utils.storage', 'ArtifactStore'),
        ('main', 'main'),
    ]
    for module_name, attr in test_modules:
        module = __import__(module_name, fromlist=[attr])
        assert hasattr(module, attr), f"{module_name}.{attr}"


@pytest.mark.parametrize('dep', ['numpy', 'scipy', 'pandas', 'sklearn', 'loguru', 'yaml', 'dotenv'])
def test_dependencies(dep):
    """测试外部依赖"""
    __import__(dep)


def test_configuration():
    """测试配置"""
    from config.settings import Settings

    grid = Settings.default_p_grid()
    assert grid.size == Settings.P_GRID_POINTS
    assert grid[0] == pytest.approx(2.0)
    assert grid[-1] == pytest.approx(64.0)
    assert Settings.CELL_BUDGET == 2 ** 24
    assert set(Settings.VERIFY_PRESETS) >= {'default', 'quick'}
    with pytest.raises(KeyError):
        Settings.get_preset('nonexistent')


def test_run_config_loading(tmp_path):
    """测试运行配置读取与合并"""
    from config.settings import Settings

    json_path = tmp_path / 'run.json'
    json_path.write_text(json.dumps({'seed': 3, 'reps': 100}))
    yaml_path = tmp_path / 'run.yaml'
    yaml_path.write_text('seed: 5\nthreads: 2\n')

    assert Settings.load_run_config(str(json_path)) == {'seed': 3, 'reps': 100}
    assert Settings.load_run_config(str(yaml_path)) == {'seed': 5, 'threads': 2}
    merged = Settings.merge({'seed': 3, 'reps': 100}, {'seed': 9, 'reps': None})
    assert merged == {'seed': 9, 'reps': 100}

    bad = tmp_path / 'bad.json'
    bad.write_text('[1, 2]')
    with pytest.raises(ValueError):
        Settings.load_run_config(str(bad))
    with pytest.raises(FileNotFoundError):
        Settings.load_run_config(str(tmp_path / 'missing.json'))


def test_error_payloads():
    """测试异常的可序列化描述"""
    from core.errors import ArtifactExistsError, DomainError, ResourceLimitError

    assert DomainError("bad p").to_dict() == {'error': 'DomainError', 'message': 'bad p'}
    assert isinstance(DomainError("x"), ValueError)
    payload = ResourceLimitError("too big", limit_name='cell_budget', limit_value=16).to_dict()
    assert payload['limit'] == 'cell_budget' and payload['limit_value'] == 16
    assert ArtifactExistsError('/tmp/x').to_dict()['path'] == '/tmp/x'


def test_verification_log_sink(tmp_path):
    """测试验证日志只接收绑定 VERIFY 的记录"""
    from loguru import logger
    from utils.logger import get_verification_logger, setup_logging

    setup_logging('INFO', log_dir=str(tmp_path))
    logger.info("ordinary record")
    get_verification_logger('unit').adjudication('rademacher', 'S', 2.0, 16, 1.0, 0.99, 0.01, 'holds')
    logger.complete()

    files = list(tmp_path.glob('verification_*.log'))
    assert len(files) == 1
    text = files[0].read_text(encoding='utf-8')
    assert 'ADJUDICATION | rademacher | S' in text
    assert 'ordinary record' not in text
    logger.remove()
