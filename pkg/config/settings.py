#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
系统配置文件
"""

import os
import json
from pathlib import Path
from typing import Dict, Any, Optional

import numpy as np
import yaml
from dotenv import load_dotenv

# 只有输出目录允许来自环境变量
load_dotenv()


class Settings:
    """系统配置类"""

    # 输出目录
    OUTPUT_DIR = os.getenv('MTB_OUTPUT_DIR', 'reports')

    # p网格配置
    P_GRID_MIN = 2.0
    P_GRID_MAX = 64.0
    P_GRID_POINTS = 64

    # ψ函数配置
    PSI_GRID_POINTS = 512
    YOUNG_FENCHEL_CAP = 1.0e6
    YOUNG_FENCHEL_SEARCH_POINTS = 2048
    LOWER_TRANSFORM_SEARCH_POINTS = 2048

    # 二进鞅构造
    CELL_BUDGET = 2 ** 24

    # 蒙特卡洛配置
    CONFIDENCE_Z = 1.96
    VIOLATION_HALFWIDTHS = 3.0
    BLOCK_SIZE = 1024  # 每个随机子流的重复次数, 与线程数无关
    BOOTSTRAP_RESAMPLES = 0
    MIN_REPS_FOR_CI = 100
    MIN_REPS_FOR_TAIL = 10_000
    DEFAULT_THREADS = 1

    # 生成器默认参数
    GENERATOR_DEFAULTS = {
        'asymmetry': (1.0, 3.0),      # two_point_asymmetric 取值 (a, -b)
        'feedback': 0.2,              # predictable_variance 的方差反馈系数
        'dyadic_p': 2,                # dyadic_embedded 的构造指数
    }

    # 报告中各来源数值的容差
    FORMULA_TOLERANCE = 1.0e-12       # 闭式公式 (相对)
    TRANSFORM_TOLERANCE = 1.0e-6      # 数值 Young-Fenchel 变换
    QUADRATURE_TOLERANCE = 1.0e-9     # 数值积分

    # Hölder四元组优化
    QUADRUPLE_COARSE_GRID = 33
    QUADRUPLE_TIE_RTOL = 1.0e-12

    # 未给出数值的常数
    DEFAULT_C3 = 1.0
    DEFAULT_Q = 1.0

    # 熵积分判别
    ENTROPY_H_CEILING = 1.0e250
    ENTROPY_FIT_POINTS = 64
    ENTROPY_SLOPE_TOL = 1.0e-4
    ENTROPY_POWER_TOL = 0.05
    ENTROPY_FIT_WINDOW = 8  # 用于拟合模型的最小ε点数

    # 验证矩阵预设
    VERIFY_PRESETS = {
        'default': {
            'p_values': [2, 3, 4, 6, 8],
            'n_values': [16, 256, 4096],
            'reps': 100_000,
            'generators': ['rademacher', 'gaussian', 'two_point_asymmetric', 'predictable_variance'],
            'multipliers': ['constant', 'sign_of_past', 'clamped_running_sum', 'gaussian_predictable'],
            'multiplier_bound': 2.0,
            'transform_grid_points': 24,
        },
        'quick': {
            'p_values': [2, 3, 4],
            'n_values': [16, 64],
            'reps': 4_000,
            'generators': ['rademacher', 'gaussian', 'two_point_asymmetric', 'predictable_variance'],
            'multipliers': ['constant', 'sign_of_past', 'clamped_running_sum', 'gaussian_predictable'],
            'multiplier_bound': 2.0,
            'transform_grid_points': 16,
        },
    }

    # 日志配置
    LOG_LEVEL = 'INFO'
    LOG_DIR = 'logs'
    LOG_FORMAT = '{time:YYYY-MM-DD HH:mm:ss} | {level} | {name}:{function}:{line} | {message}'

    @classmethod
    def default_p_grid(cls, points: Optional[int] = None,
                       p_min: Optional[float] = None, p_max: Optional[float] = None) -> np.ndarray:
        """默认的对数等距p网格"""
        points = points or cls.P_GRID_POINTS
        p_min = p_min or cls.P_GRID_MIN
        p_max = p_max or cls.P_GRID_MAX
        return np.geomspace(p_min, p_max, points)

    @classmethod
    def load_run_config(cls, path: str) -> Dict[str, Any]:
        """读取运行配置 (JSON 或 YAML)"""
        config_path = Path(path)
        if not config_path.exists():
            raise FileNotFoundError(f"配置文件不存在: {config_path}")

        with open(config_path, 'r', encoding='utf-8') as f:
            if config_path.suffix.lower() in ('.yaml', '.yml'):
                config = yaml.safe_load(f) or {}
            else:
                config = json.load(f)

        if not isinstance(config, dict):
            raise ValueError(f"配置文件必须是扁平映射: {config_path}")
        return config

    @classmethod
    def merge(cls, file_config: Dict[str, Any], flag_config: Dict[str, Any]) -> Dict[str, Any]:
        """合并配置: 命令行参数覆盖配置文件"""
        merged = dict(file_config)
        for key, value in flag_config.items():
            if value is not None:
                merged[key] = value
        return merged

    @classmethod
    def get_preset(cls, name: str) -> Dict[str, Any]:
        """获取验证矩阵预设"""
        if name not in cls.VERIFY_PRESETS:
            raise KeyError(f"未知的预设: {name}")
        return dict(cls.VERIFY_PRESETS[name])
