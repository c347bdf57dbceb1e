#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
精确性构造模块
由 f(x) = |log x| - 1 生成的二进条件期望鞅、逐层差分范数、ζ级数界与常数 C
"""

import math
from dataclasses import dataclass, asdict
from typing import Dict, Optional, Tuple, Any

import numpy as np
from loguru import logger
from scipy.integrate import quad
from scipy.special import gammaln

from config.settings import Settings
from core.errors import DomainError, ResourceLimitError

LN2_SQ = math.log(2.0) ** 2
ZETA_TERMS = 1000


def zeta(p: float) -> float:
    """Riemann ζ(p): 直接求和到 K, 加积分尾项及其 Euler-Maclaurin 修正"""
    if not p > 1 + 1e-6:
        raise DomainError(f"ζ(p) 需要 p > 1, 当前 {p}")
    K = ZETA_TERMS
    k = np.arange(K, 0, -1, dtype=float)
    head = float(np.sum(k ** -p))
    tail = (K ** (1 - p) / (p - 1) - 0.5 * K ** -p + p * K ** (-p - 1) / 12
            - p * (p + 1) * (p + 2) * K ** (-p - 3) / 720)
    return head + tail


def series_bound_constant(p: float) -> float:
    """20 ln²2 / 9 + ζ^{2/p}(p) / 3"""
    return 20 * LN2_SQ / 9 + zeta(p) ** (2.0 / p) / 3


def constant_C() -> float:
    """C = (1/e) / [20 ln²2 / 9 + 1/3]^{1/2} ≈ 0.31080315"""
    return math.exp(-1.0) / math.sqrt(20 * LN2_SQ / 9 + 1.0 / 3)


def limit_formula(p: float) -> float:
    """(1/e) / [20 ln²2 / 9 + ζ^{2/p}(p) / 3]^{1/2}, p → ∞ 时趋于 C"""
    return math.exp(-1.0) / math.sqrt(series_bound_constant(p))


def s_infinity_norm(p: float) -> Tuple[float, float]:
    """|f|_p 的精确值与替代量 Γ(p+1)^{1/p}

    代换 t = -ln x 后 |f|_p^p = e^{-1} Γ(p+1) + ∫_0^1 (1-t)^p e^{-t} dt
    """
    if not p >= 2:
        raise DomainError(f"p 必须 >= 2, 当前 {p}")
    head, _ = quad(lambda t: (1 - t) ** p * math.exp(-t), 0.0, 1.0, epsabs=0.0, epsrel=1e-13)
    log_total = np.logaddexp(gammaln(p + 1) - 1.0, math.log(head))
    exact = math.exp(log_total / p)
    surrogate = math.exp(gammaln(p + 1) / p)
    return exact, surrogate


def cell_average(a, h: float) -> np.ndarray:
    """f 在 (a, a+h) 上的平均 (F(a+h) - F(a)) / h, F(x) = x|log x|"""
    a = np.asarray(a, dtype=float)
    safe = np.where(a > 0, a, 1.0)
    interior = -np.log(a + h) - (safe / h) * np.log1p(h / safe)
    return np.where(a > 0, interior, -math.log(h))


def _cell_averages(level_exponent: int) -> np.ndarray:
    """第 e 个二进划分 (2^e 个单元) 上的单元平均"""
    count = 1 << level_exponent
    h = 1.0 / count
    chunk = 1 << 20
    values = np.empty(count)
    for start in range(0, count, chunk):
        stop = min(start + chunk, count)
        values[start:stop] = cell_average(np.arange(start, stop, dtype=float) * h, h)
    return values


class DyadicMartingale:
    """二进鞅 S(m) = E[f | F(m)], 第 m 层有 2^{mp} 个单元"""

    def __init__(self, p: int, M: int, cell_budget: int = Settings.CELL_BUDGET):
        if int(p) != p or p < 2:
            raise DomainError(f"构造指数 p 必须是 >= 2 的整数, 当前 {p}")
        if M < 0:
            raise DomainError(f"层数 M 必须非负, 当前 {M}")
        self.p = int(p)
        self.M = int(M)
        self.cell_budget = int(cell_budget)
        if (1 << (self.M * self.p)) > self.cell_budget:
            raise ResourceLimitError(
                f"2^(M·p) = 2^{self.M * self.p} 个单元超出预算 {self.cell_budget}",
                limit_name='cell_budget', limit_value=self.cell_budget)
        self._levels: Dict[int, np.ndarray] = {}

    @classmethod
    def max_level(cls, p: int, cell_budget: int = Settings.CELL_BUDGET) -> int:
        """预算内可存储的最深层"""
        return int(math.floor(math.log2(cell_budget) / p + 1e-12))

    def level(self, m: int) -> np.ndarray:
        """第 m 层的单元取值 (惰性计算)"""
        if not 0 <= m <= self.M:
            raise DomainError(f"层 {m} 未存储, 可用 0..{self.M}")
        if m not in self._levels:
            self._levels[m] = _cell_averages(m * self.p)
        return self._levels[m]

    def tower_deviation(self, m: int) -> float:
        """子单元平均与父单元值的最大偏差 (相对 max(1, |父值|))"""
        if not 0 <= m < self.M:
            raise DomainError(f"塔性质检查需要 0 <= m < M, 当前 m={m}")
        parent = self.level(m)
        children = self.level(m + 1).reshape(parent.size, 1 << self.p)
        averaged = children.mean(axis=1)
        return float(np.max(np.abs(averaged - parent) / np.maximum(1.0, np.abs(parent))))

    def level_norm(self, q: float, m: int) -> float:
        """|S(m)|_q"""
        values = self.level(m)
        return float(np.mean(np.abs(values) ** q)) ** (1.0 / q)

    def xi_moment(self, q: float, m: int) -> float:
        """E|ξ(m)|^q, ξ(m) = S(m+1) - S(m), 在第 m+1 层单元上精确求和"""
        parent = self.level(m)
        children = self.level(m + 1).reshape(parent.size, 1 << self.p)
        return float(np.mean(np.abs(children - parent[:, None]) ** q))


def level_tail_bound(p: float, m: int, mart: DyadicMartingale) -> Dict[str, float]:
    """超出预算层的 |ξ(m)|_p 上界

    首个单元上 ξ(m) 与 S(1) 同分布, 第 k 个单元上 |ξ(m)| 不超过 log(1 + 1/k) <= 1/k,
    故 E|ξ(m)|^p <= 2^{-m·p_c} (|S(1)|_p^p + ζ(p)), p_c 为构造指数
    """
    if mart.M < 1:
        raise ResourceLimitError("尾部界需要第 1 层在预算内", limit_name='cell_budget',
                                 limit_value=mart.cell_budget)
    s1_moment = float(np.mean(np.abs(mart.level(1)) ** p))
    rigorous = 2.0 ** (-m * mart.p / p) * (s1_moment + zeta(p)) ** (1.0 / p)
    series_term = math.sqrt(LN2_SQ * m * m * 4.0 ** -m + 4.0 ** -m * zeta(p) ** (2.0 / p))
    return {'rigorous': rigorous, 'series_term': series_term}


def xi_level_norm(p: float, m: int, mart: DyadicMartingale) -> float:
    """|ξ(m)|_p: 存储层内精确计算, 否则返回尾部上界"""
    if m < 0:
        raise DomainError(f"层 m 必须非负, 当前 {m}")
    if m + 1 <= mart.M:
        return mart.xi_moment(p, m) ** (1.0 / p)
    logger.debug(f"📊 层 {m} 超出存储范围, 使用尾部上界")
    return level_tail_bound(p, m, mart)['rigorous']


def build_dyadic_martingale(p: int, M: int, cell_budget: int = Settings.CELL_BUDGET) -> DyadicMartingale:
    """构造 0..M 层的二进鞅"""
    mart = DyadicMartingale(p, M, cell_budget)
    logger.debug(f"🔧 二进鞅 p={p}, M={M}, 最细层 {1 << (M * mart.p)} 个单元")
    return mart


@dataclass
class SharpnessRatio:
    """下界比值 |S(∞)|_p / ((p-1) [Σ|ξ(m)|_p²]^{1/2})"""
    p: int
    M: int
    numerator: float
    denominator: float
    ratio: float
    limit_formula: float
    series_prefix: float
    series_tail_bound: float
    level0: float
    surrogate: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def series_total(self) -> float:
        """m >= 1 的级数上界 (前缀 + 尾部界)"""
        return self.series_prefix + self.series_tail_bound


def series_tail_bound(p: float, mart: DyadicMartingale) -> float:
    """Σ_{m>=M} |ξ(m)|_p² 的上界"""
    first = level_tail_bound(p, mart.M, mart)['rigorous'] ** 2
    ratio = 2.0 ** (-2 * mart.p / p)
    return first / (1 - ratio)


def lower_bound_ratio(p: int, M: Optional[int] = None,
                      cell_budget: int = Settings.CELL_BUDGET) -> SharpnessRatio:
    """比值的可证下界: 级数未解析的尾部以其上界代替"""
    if int(p) != p or p < 2:
        raise DomainError(f"p 必须是 >= 2 的整数, 当前 {p}")
    p = int(p)
    if M is None:
        M = DyadicMartingale.max_level(p, cell_budget)
    if M < 1:
        raise ResourceLimitError(f"p={p} 时第 1 层已超出单元预算 {cell_budget}",
                                 limit_name='cell_budget', limit_value=cell_budget)

    mart = build_dyadic_martingale(p, M, cell_budget)
    level0 = mart.xi_moment(p, 0) ** (2.0 / p)
    prefix = float(sum(mart.xi_moment(p, m) ** (2.0 / p) for m in range(1, M)))
    tail = series_tail_bound(p, mart)

    numerator, surrogate = s_infinity_norm(p)
    denominator = (p - 1) * math.sqrt(level0 + prefix + tail)
    ratio = numerator / denominator

    logger.info(f"📊 p={p}, M={M}: ratio={ratio:.6g}, 级数前缀={prefix:.6g}, 尾部界={tail:.3g}")
    return SharpnessRatio(p=p, M=M, numerator=numerator, denominator=denominator, ratio=ratio,
                          limit_formula=limit_formula(p), series_prefix=prefix,
                          series_tail_bound=tail, level0=level0, surrogate=surrogate)
