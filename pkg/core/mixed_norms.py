#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
混合范数模块
L_p × ℓ_λ 混合范数、样本矩估计与自然函数
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Any

import numpy as np
import pandas as pd
from loguru import logger
from sklearn.isotonic import IsotonicRegression

from config.settings import Settings
from core.errors import DomainError
from core.gls import MomentCurve, PsiFunction


@dataclass(eq=False)
class MomentTable:
    """逐指标的矩曲线表 |ξ(i)|_p, 行为 i, 列为 p"""
    p_grid: np.ndarray
    values: np.ndarray
    sup_norms: Optional[np.ndarray] = None  # 各指标的本性上确界, 对应 p = ∞
    infinite_horizon: bool = False
    halfwidths: Optional[np.ndarray] = None
    provenance: str = 'formula'

    def __post_init__(self):
        self.p_grid = np.asarray(self.p_grid, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[0] == 0 or self.p_grid.size == 0:
            raise DomainError("矩表为空")
        if self.values.shape[1] != self.p_grid.size:
            raise DomainError("矩表列数与p网格长度不一致")
        if self.p_grid.size > 1 and np.any(np.diff(self.p_grid) <= 0):
            raise DomainError("p网格必须严格递增")
        if np.any(self.values < 0) or np.any(np.isnan(self.values)):
            raise DomainError("矩表取值必须非负")
        if self.p_grid.size > 1:
            drops = self.values[:, :-1] - self.values[:, 1:]
            scale = np.maximum(self.values[:, :-1], 1e-300)
            if np.any(drops / scale > 1e-9):
                raise DomainError("矩表存在违反Lyapunov单调性的曲线")
        if self.sup_norms is not None:
            self.sup_norms = np.asarray(self.sup_norms, dtype=float)
            if self.sup_norms.shape != (self.values.shape[0],):
                raise DomainError("sup_norms 长度必须等于指标数")

    # ---- 构造 ----

    @classmethod
    def constant(cls, n: int, p_grid, value: float) -> 'MomentTable':
        """所有曲线恒为 value (有界乘子 |b(i)| = V)"""
        p_grid = np.asarray(p_grid, dtype=float)
        return cls(p_grid, np.full((n, p_grid.size), float(value)),
                   sup_norms=np.full(n, float(value)))

    @classmethod
    def from_curves(cls, curves: Sequence[MomentCurve], **kwargs) -> 'MomentTable':
        if not curves:
            raise DomainError("矩表为空")
        grid = curves[0].p_grid
        for curve in curves[1:]:
            if curve.p_grid.shape != grid.shape or not np.allclose(curve.p_grid, grid, rtol=1e-12):
                raise DomainError("矩表中的曲线必须共享同一个p网格")
        return cls(grid, np.vstack([c.values for c in curves]), **kwargs)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> 'MomentTable':
        """从长格式 i,p,value 读入"""
        missing = {'i', 'p', 'value'} - set(frame.columns)
        if missing:
            raise DomainError(f"矩表缺少列: {sorted(missing)}")
        wide = frame.pivot(index='i', columns='p', values='value').sort_index()
        if wide.isna().any().any():
            raise DomainError("矩表的各指标必须共享同一个p网格")
        return cls(wide.columns.to_numpy(dtype=float), wide.to_numpy(dtype=float))

    def to_frame(self) -> pd.DataFrame:
        n, k = self.values.shape
        return pd.DataFrame({
            'i': np.repeat(np.arange(1, n + 1), k),
            'p': np.tile(self.p_grid, n),
            'value': self.values.ravel(),
        })

    # ---- 访问 ----

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    def curve(self, index: int) -> MomentCurve:
        """第 index 条曲线 (从0开始)"""
        hw = None if self.halfwidths is None else self.halfwidths[index]
        return MomentCurve(self.p_grid, self.values[index], hw, provenance=self.provenance)

    def covers(self, p: float) -> bool:
        if math.isinf(p):
            return self.sup_norms is not None
        return self.p_grid[0] * (1 - 1e-12) <= p <= self.p_grid[-1] * (1 + 1e-12)

    def column_at(self, p: float) -> np.ndarray:
        """各指标在 p 处的范数向量"""
        if math.isinf(p):
            if self.sup_norms is None:
                raise DomainError("矩表没有 p=∞ 的上确界信息")
            return self.sup_norms
        if not self.covers(p):
            raise DomainError(f"p={p:g} 超出矩表网格 [{self.p_grid[0]:g}, {self.p_grid[-1]:g}]")
        hit = np.flatnonzero(np.isclose(self.p_grid, p, rtol=1e-12, atol=0.0))
        if hit.size:
            return self.values[:, hit[0]]
        q = min(max(p, self.p_grid[0]), self.p_grid[-1])
        k = int(np.clip(np.searchsorted(self.p_grid, q, side='right') - 1, 0, self.p_grid.size - 2))
        x0, x1 = self.p_grid[k], self.p_grid[k + 1]
        f0, f1 = self.values[:, k], self.values[:, k + 1]
        w = (math.log(q) - math.log(x0)) / (math.log(x1) - math.log(x0))
        positive = (f0 > 0) & (f1 > 0)
        log_part = np.exp(np.log(np.where(positive, f0, 1.0)) * (1 - w)
                          + np.log(np.where(positive, f1, 1.0)) * w)
        return np.where(positive, log_part, f0 * (1 - w) + f1 * w)

    def truncated(self, n: int) -> 'MomentTable':
        sup = None if self.sup_norms is None else self.sup_norms[:n]
        hw = None if self.halfwidths is None else self.halfwidths[:n]
        return MomentTable(self.p_grid, self.values[:n], sup, False, hw, self.provenance)


@dataclass(eq=False)
class SampleMatrix:
    """reps × n 样本矩阵"""
    samples: np.ndarray
    seed: Optional[int] = None
    generator: str = ''

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.samples.ndim != 2:
            raise DomainError("样本矩阵必须是二维的")
        if self.samples.shape[0] < 2:
            raise DomainError("样本矩阵至少需要 2 个重复")
        if not np.all(np.isfinite(self.samples)):
            raise DomainError("样本矩阵包含非有限值")

    @property
    def reps(self) -> int:
        return int(self.samples.shape[0])

    @property
    def n(self) -> int:
        return int(self.samples.shape[1])

    def sidecar(self) -> Dict[str, Any]:
        return {'n': self.n, 'reps': self.reps, 'seed': self.seed, 'generator': self.generator}


def _scaled_power_mean(values: np.ndarray, lam: float) -> float:
    top = float(np.max(values))
    if top == 0.0:
        return 0.0
    return top * float(np.mean((values / top) ** lam)) ** (1.0 / lam)


def mixed_norm(table: MomentTable, p: float, lam: float, n: Optional[int] = None) -> float:
    """混合范数 [n^{-1} Σ_{i<=n} |b(i)|_p^λ]^{1/λ}"""
    if lam < 1:
        raise DomainError(f"λ 必须 >= 1, 当前 {lam}")
    if p < 1:
        raise DomainError(f"p 必须 >= 1, 当前 {p}")
    if n is None:
        if table.infinite_horizon:
            return mixed_norm_horizon_sup(table, p, lam)
        n = table.n
    if not 1 <= n <= table.n:
        raise DomainError(f"n={n} 超出矩表范围 1..{table.n}")

    column = table.column_at(p)[:n]
    if math.isinf(lam):
        return float(np.max(column))
    return _scaled_power_mean(column, lam)


def mixed_norm_horizon_sup(table: MomentTable, p: float, lam: float) -> float:
    """sup_n 的混合范数, 仅在存储的范围内计算, 是真实上确界的下界"""
    if lam < 1:
        raise DomainError(f"λ 必须 >= 1, 当前 {lam}")
    column = table.column_at(p)
    if math.isinf(lam):
        value = float(np.max(column))
    else:
        top = float(np.max(column))
        if top == 0.0:
            return 0.0
        running = np.cumsum((column / top) ** lam) / np.arange(1, column.size + 1)
        value = top * float(np.max(running)) ** (1.0 / lam)
    logger.debug(f"📊 无穷范围混合范数按存储范围 n<={table.n} 计算 (下界)")
    return value


def empirical_moment_curve(samples, p_grid, z: float = Settings.CONFIDENCE_Z,
                           min_reps: int = Settings.MIN_REPS_FOR_CI) -> MomentCurve:
    """由样本估计 |ξ|_p, 置信半宽来自 p 阶矩的 delta 方法"""
    x = np.abs(np.asarray(samples, dtype=np.float64).ravel())
    p_grid = np.asarray(p_grid, dtype=float)
    if x.size < 2:
        raise DomainError("至少需要 2 个样本")
    if not np.all(np.isfinite(x)):
        raise DomainError("样本包含非有限值")

    reps = x.size
    top = float(np.max(x))
    values = np.zeros(p_grid.size)
    halfwidths = np.zeros(p_grid.size)
    if top > 0:
        scaled = x / top
        for k, p in enumerate(p_grid):
            u = scaled ** p
            mu = float(np.mean(u))
            values[k] = top * mu ** (1.0 / p)
            sd = float(np.std(u, ddof=1))
            halfwidths[k] = z * top * (1.0 / p) * mu ** (1.0 / p - 1.0) * sd / math.sqrt(reps)

    correction = 0.0
    if values.size > 1 and np.any(np.diff(values) < 0):
        fitted = IsotonicRegression(increasing=True).fit_transform(p_grid, values)
        correction = float(np.max(np.abs(fitted - values)))
        values = fitted
        logger.info(f"🔧 经验矩曲线保序修正, 幅度 {correction:.3g}")

    if reps < min_reps:
        logger.warning(f"⚠️ 样本数 {reps} < {min_reps}, 不输出置信半宽")
        return MomentCurve(p_grid, values, None, correction, provenance='mc')
    return MomentCurve(p_grid, values, halfwidths, correction, provenance='mc')


def empirical_moment_table(matrix: SampleMatrix, p_grid, threads: int = 1) -> MomentTable:
    """逐列估计矩表, 按列顺序归并"""
    columns = [matrix.samples[:, i] for i in range(matrix.n)]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        curves: List[MomentCurve] = list(executor.map(lambda col: empirical_moment_curve(col, p_grid), columns))

    halfwidths = None
    if all(c.halfwidths is not None for c in curves):
        halfwidths = np.vstack([c.halfwidths for c in curves])
    sup = np.max(np.abs(matrix.samples), axis=0)
    return MomentTable(curves[0].p_grid, np.vstack([c.values for c in curves]),
                       sup_norms=sup, halfwidths=halfwidths, provenance='mc')


def table_from_power_sums(p_grid, sums: np.ndarray, reps: int,
                          sup_norms: Optional[np.ndarray] = None) -> MomentTable:
    """由逐指标的 Σ|x|^p (P × n) 得到经验矩表"""
    p_grid = np.asarray(p_grid, dtype=float)
    values = (np.asarray(sums, dtype=float) / reps) ** (1.0 / p_grid[:, None])
    values = values.T.copy()

    if p_grid.size > 1:
        rows = np.flatnonzero(np.any(np.diff(values, axis=1) < 0, axis=1))
        correction = 0.0
        for i in rows:
            fitted = IsotonicRegression(increasing=True).fit_transform(p_grid, values[i])
            correction = max(correction, float(np.max(np.abs(fitted - values[i]))))
            values[i] = fitted
        if rows.size:
            logger.info(f"🔧 {rows.size} 条经验矩曲线保序修正, 最大幅度 {correction:.3g}")
    return MomentTable(p_grid, values, sup_norms=sup_norms, provenance='mc')


def natural_function(curves: Sequence[MomentCurve]) -> PsiFunction:
    """自然函数: 曲线族的逐点上确界"""
    if not curves:
        raise DomainError("曲线族为空")
    grid = curves[0].p_grid
    for curve in curves[1:]:
        if curve.p_grid.shape != grid.shape or not np.allclose(curve.p_grid, grid, rtol=1e-12):
            raise DomainError("曲线族必须共享同一个p网格")

    envelope = np.max(np.vstack([c.values for c in curves]), axis=0)
    keep = grid >= 2
    if not np.any(keep):
        raise DomainError("曲线族的p网格与 [2, ∞) 不相交")
    return PsiFunction.from_grid(grid[keep], envelope[keep])
