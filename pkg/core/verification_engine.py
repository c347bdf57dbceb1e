#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
验证引擎 - 对鞅与鞅变换的矩界执行蒙特卡洛判定矩阵
"""

import asyncio
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from loguru import logger

from config.settings import Settings
from core.bounds import (BoundReport, HolderQuadruple, bound_bounded_multipliers,
                         bound_martingale, legacy_coefficient, optimize_quadruple, theta_function)
from core.errors import ToolkitError
from core.gls import tail_bound
from core.mixed_norms import empirical_moment_curve
from data.simulate import (BatchSummary, GeneratorSpec, MultiplierSpec, adjudicate_terminal,
                           attach_multipliers, empirical_tail, exact_b_table, exact_xi_table,
                           fit_tail_decay, generate, summarize)
from utils.logger import get_verification_logger

IID_FAMILIES = ('rademacher', 'gaussian', 'two_point_asymmetric')


def config_seed(seed: int, *indices: int) -> int:
    """由主种子与配置下标派生的子种子, 与调度顺序无关"""
    state = np.random.SeedSequence([int(seed), *[int(i) for i in indices]]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def multiplier_specs(families: List[str], bound: float, n: int) -> List[MultiplierSpec]:
    """预设中的乘子族 (常数与截断族使用 V = bound)"""
    specs = []
    for family in families:
        if family == 'deterministic_sequence':
            seq = list(bound * np.cos(np.arange(1, n + 1)))
            specs.append(MultiplierSpec(family, sequence=seq))
        else:
            specs.append(MultiplierSpec(family, V=bound))
    return specs


def summary_p_grid(p_values: List[float], points: int) -> np.ndarray:
    """覆盖 [2, 2·max p] 的对数网格, 并包含各个 p"""
    grid = np.geomspace(2.0, 2.0 * max(p_values), points)
    return np.unique(np.concatenate([grid, np.asarray(p_values, dtype=float)]))


@dataclass
class MatrixEntry:
    """判定矩阵中的一项"""
    report: BoundReport
    kind: str  # 'martingale' | 'transform'
    legacy_bound: Optional[float] = None
    specialized_bound: Optional[float] = None
    tie_gap: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        payload = self.report.to_dict()
        payload.update({'kind': self.kind, 'legacy_bound': self.legacy_bound,
                        'specialized_bound': self.specialized_bound, 'tie_gap': self.tie_gap})
        return payload


@dataclass
class VerificationReport:
    """一次验证运行的完整报告"""
    preset: str
    seed: int
    config: Dict[str, Any]
    entries: List[MatrixEntry] = field(default_factory=list)
    sharpness_p2: List[Dict[str, Any]] = field(default_factory=list)
    errors: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def counts(self) -> Dict[str, int]:
        verdicts = [e.report.verdict for e in self.entries]
        return {'total': len(verdicts), 'holds': verdicts.count('holds'),
                'violated': verdicts.count('violated'), 'inconclusive': verdicts.count('inconclusive')}

    @property
    def any_violated(self) -> bool:
        return self.counts['violated'] > 0

    @property
    def incomplete(self) -> bool:
        """有配置失败, 或矩阵中没有任何判定"""
        return bool(self.errors) or self.counts['total'] == 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'preset': self.preset,
            'seed': self.seed,
            'config': self.config,
            'summary': self.counts,
            'results': [e.to_dict() for e in self.entries],
            'sharpness_p2': self.sharpness_p2,
            'errors': self.errors,
            'provenance': {'bound': 'formula', 'empirical': 'mc',
                           'violation_halfwidths': Settings.VIOLATION_HALFWIDTHS,
                           'confidence_z': Settings.CONFIDENCE_Z},
        }


class VerificationEngine:
    """验证引擎主类: 生成器 × n 的配置并发执行, 每个配置内判定所有 p 与乘子族"""

    def __init__(self, preset: str = 'default', seed: int = 0, threads: int = Settings.DEFAULT_THREADS,
                 overrides: Optional[Dict[str, Any]] = None):
        self.preset = preset
        self.seed = int(seed)
        self.threads = max(1, int(threads))
        self.config = Settings.get_preset(preset)
        for key, value in (overrides or {}).items():
            if key in self.config and value is not None:
                self.config[key] = value
        self.vlog = get_verification_logger(preset)
        self.is_initialized = False

    async def initialize(self):
        """校验配置"""
        logger.info(f"🔧 初始化验证引擎: 预设={self.preset}, 种子={self.seed}, 线程={self.threads}")
        for family in self.config['generators']:
            GeneratorSpec(family, n=1, reps=2, seed=0)
        for family in self.config['multipliers']:
            multiplier_specs([family], self.config['multiplier_bound'], 1)
        self.is_initialized = True
        logger.info("✅ 验证引擎初始化完成")

    def _config_tasks(self) -> List[Dict[str, Any]]:
        tasks = []
        for g, family in enumerate(self.config['generators']):
            for k, n in enumerate(self.config['n_values']):
                tasks.append({'generator': family, 'n': int(n), 'seed': config_seed(self.seed, g, k)})
        return tasks

    def _run_config(self, task: Dict[str, Any]) -> Dict[str, Any]:
        """单个 (生成器, n) 配置: 流式汇总后判定所有 (p, 目标, 乘子)"""
        spec = GeneratorSpec(task['generator'], n=task['n'], reps=int(self.config['reps']), seed=task['seed'])
        mults = multiplier_specs(self.config['multipliers'], self.config['multiplier_bound'], spec.n)
        p_values = [float(p) for p in self.config['p_values']]
        grid = summary_p_grid(p_values, int(self.config['transform_grid_points']))
        summary = summarize(spec, mults, grid, threads=1)

        entries = []
        sharpness = []
        for p in p_values:
            entries.append(self._martingale_entry(summary, p))
            for mult in mults:
                entries.append(self._transform_entry(summary, mult, p))
        if spec.family in IID_FAMILIES:
            sharpness.append(self._sharpness_p2(summary))
        return {'entries': entries, 'sharpness': sharpness}

    def _martingale_entry(self, summary: BatchSummary, p: float) -> MatrixEntry:
        spec = summary.spec
        bound = bound_martingale(summary.xi_table, p, spec.n)
        report = self._adjudicate(summary.s_terminal, bound, p, spec, 'S', '')
        legacy = legacy_coefficient(p) * bound / (p - 1)
        return MatrixEntry(report, 'martingale', legacy_bound=legacy)

    def _transform_entry(self, summary: BatchSummary, mult: MultiplierSpec, p: float) -> MatrixEntry:
        spec = summary.spec
        b_table = summary.b_tables[mult.label]
        quad, bound = optimize_quadruple(b_table, summary.xi_table, p, spec.n)
        report = self._adjudicate(summary.w_terminal[mult.label], bound, p, spec, 'W', mult.label, quad)

        entry = MatrixEntry(report, 'transform')
        if mult.family == 'constant':
            # α = ∞ 的特例与网格最优值的相对差
            special = bound_bounded_multipliers(mult.V, summary.xi_table, p, spec.n)
            entry.specialized_bound = special
            entry.tie_gap = (bound - special) / special if special > 0 else 0.0
        return entry

    def _adjudicate(self, values: np.ndarray, bound: float, p: float, spec: GeneratorSpec,
                    target: str, multiplier: str, quad: Optional[HolderQuadruple] = None) -> BoundReport:
        report = adjudicate_terminal(values, bound, p, spec.n, generator=spec.family, seed=spec.seed,
                                     target=target, multiplier=multiplier, quadruple=quad)
        self.vlog.adjudication(spec.family if not multiplier else f"{spec.family}/{multiplier}",
                               target, p, spec.n, report.bound, report.empirical, report.halfwidth,
                               report.verdict)
        return report

    def _sharpness_p2(self, summary: BatchSummary) -> Dict[str, Any]:
        """p=2 时经验值与界之比, 独立同分布差分下应接近 1"""
        spec = summary.spec
        bound = bound_martingale(summary.xi_table, 2.0, spec.n)
        curve = empirical_moment_curve(summary.s_terminal, [2.0])
        halfwidth = float(curve.halfwidths[0]) if curve.halfwidths is not None else math.nan
        return {'generator': spec.family, 'n': spec.n, 'ratio': float(curve.values[0]) / bound,
                'halfwidth': halfwidth / bound, 'provenance': 'mc',
                'tolerance': {'halfwidth': halfwidth / bound, 'confidence_z': Settings.CONFIDENCE_Z}}

    async def run_matrix(self) -> VerificationReport:
        """并发执行所有配置, 结果按配置顺序归并"""
        if not self.is_initialized:
            await self.initialize()

        tasks = self._config_tasks()
        report = VerificationReport(self.preset, self.seed, dict(self.config))
        loop = asyncio.get_running_loop()
        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            futures = [loop.run_in_executor(executor, self._run_config, task) for task in tasks]
            results = await asyncio.gather(*futures, return_exceptions=True)

        for task, result in zip(tasks, results):
            if isinstance(result, ToolkitError):
                logger.error(f"❌ 配置 {task['generator']} n={task['n']} 失败: {result}")
                report.errors.append({**result.to_dict(), 'generator': task['generator'], 'n': task['n']})
                continue
            if isinstance(result, BaseException):
                raise result
            report.entries.extend(result['entries'])
            report.sharpness_p2.extend(result['sharpness'])

        counts = report.counts
        self.vlog.matrix_summary(counts['total'], counts['holds'], counts['violated'], counts['inconclusive'])
        if report.any_violated:
            logger.warning(f"⚠️ 验证矩阵出现 {counts['violated']} 个违反")
        elif report.incomplete:
            logger.error(f"❌ 验证矩阵不完整: {len(report.errors)} 个配置失败, {counts['total']} 项判定")
        else:
            logger.info(f"✅ 验证矩阵完成: {counts['holds']}/{counts['total']} 成立")
        return report


def tail_u_grid(values: np.ndarray, points: int = 24) -> np.ndarray:
    """从 0.5 到 1 - 10/reps 分位数的 u 网格"""
    x = np.abs(np.asarray(values, dtype=float))
    top = float(np.quantile(x, 1.0 - 10.0 / x.size))
    low = min(0.5, top / 2)
    return np.linspace(low, top, points)


def run_tail_pipeline(seed: int, n: int = 16, reps: int = 1_000_000, threads: int = 1,
                      u_points: int = 24, p_grid=None) -> Dict[str, Any]:
    """高斯差分 + 高斯可料乘子: θ 导出的指数尾部界对比经验尾部"""
    spec = GeneratorSpec('gaussian', n=n, reps=reps, seed=seed)
    mult = MultiplierSpec('gaussian_predictable')
    if p_grid is None:
        p_grid = Settings.default_p_grid()
    xi_table = exact_xi_table(spec, p_grid)
    b_table = exact_b_table(mult, n, p_grid)
    theta = theta_function(b_table, xi_table, n, threads=threads)

    batch = attach_multipliers(generate(spec, threads=threads), mult, threads=threads)
    u_grid = tail_u_grid(batch.terminal('W'), u_points)
    tail = empirical_tail(batch, u_grid, 'W')
    bounds = np.array([tail_bound(theta, 1.0, float(u)) for u in u_grid])

    # 经验尾部的 Wilson 下限超过界才算违反
    dominated = bool(np.all(tail.lower <= bounds))
    try:
        decay = fit_tail_decay(tail)
    except ToolkitError as e:
        logger.warning(f"⚠️ 尾部衰减拟合失败: {e}")
        decay = None

    if dominated:
        logger.info(f"✅ θ 尾部界在 {u_grid.size} 个 u 上控制经验尾部")
    else:
        logger.warning("⚠️ θ 尾部界在部分 u 上低于经验尾部的置信下限")
    frame = tail.to_frame()
    frame['bound'] = bounds
    return {'theta': theta, 'tail': tail, 'frame': frame, 'dominated': dominated, 'decay': decay,
            'lineage': batch.lineage}
