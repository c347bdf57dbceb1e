#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
界计算模块
鞅与鞅变换的矩界、Hölder四元组优化、θ函数与二次特征界
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Sequence, Tuple, Any

import numpy as np
from loguru import logger
from scipy.optimize import minimize

from config.settings import Settings
from core.errors import DomainError
from core.gls import PsiFunction
from core.mixed_norms import MomentTable, mixed_norm, mixed_norm_horizon_sup

VERDICTS = ('holds', 'violated', 'inconclusive')


def _reciprocal(x: float) -> float:
    return 0.0 if math.isinf(x) else 1.0 / x


@dataclass(frozen=True)
class HolderQuadruple:
    """Hölder四元组 (α, β, λ, μ): 1/α + 1/β = 1, 1/λ + 1/μ = 1"""
    alpha: float
    beta: float
    lam: float
    mu: float

    def __post_init__(self):
        for name in ('alpha', 'beta', 'lam', 'mu'):
            value = getattr(self, name)
            if math.isnan(value) or value < 1:
                raise DomainError(f"{name} 必须落在 [1, ∞], 当前 {value}")
        if abs(_reciprocal(self.alpha) + _reciprocal(self.beta) - 1) > 1e-12:
            raise DomainError(f"1/α + 1/β ≠ 1: α={self.alpha}, β={self.beta}")
        if abs(_reciprocal(self.lam) + _reciprocal(self.mu) - 1) > 1e-12:
            raise DomainError(f"1/λ + 1/μ ≠ 1: λ={self.lam}, μ={self.mu}")

    @classmethod
    def from_reciprocals(cls, s: float, t: float) -> 'HolderQuadruple':
        """由 s = 1/α, t = 1/λ 构造"""
        if not (0 <= s <= 1 and 0 <= t <= 1):
            raise DomainError(f"(1/α, 1/λ) 必须落在 [0,1]², 当前 ({s}, {t})")
        inv = lambda v: math.inf if v == 0 else 1.0 / v
        return cls(inv(s), inv(1 - s), inv(t), inv(1 - t))

    @classmethod
    def bounded_multipliers(cls) -> 'HolderQuadruple':
        """(∞, 1, ∞, 1), 有界乘子的特例"""
        return cls(math.inf, 1.0, math.inf, 1.0)

    @property
    def s(self) -> float:
        return _reciprocal(self.alpha)

    @property
    def t(self) -> float:
        return _reciprocal(self.lam)

    def to_dict(self) -> Dict[str, Any]:
        enc = lambda v: 'inf' if math.isinf(v) else v
        return {'alpha': enc(self.alpha), 'beta': enc(self.beta),
                'lambda': enc(self.lam), 'mu': enc(self.mu)}


@dataclass
class BoundReport:
    """理论界与经验统计量的比对结果"""
    bound: float
    empirical: float
    halfwidth: float
    verdict: str
    p: float
    n: int
    generator: str = ''
    seed: Optional[int] = None
    target: str = 'S'
    multiplier: str = ''
    quadruple: Optional[HolderQuadruple] = None
    provenance: Dict[str, str] = field(default_factory=lambda: {'bound': 'formula', 'empirical': 'mc'})

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise DomainError(f"未知的判定结果: {self.verdict}")

    def to_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        payload['quadruple'] = self.quadruple.to_dict() if self.quadruple else None
        payload['tolerance'] = {'bound': Settings.FORMULA_TOLERANCE, 'halfwidth': self.halfwidth,
                                'confidence_z': Settings.CONFIDENCE_Z,
                                'violation_halfwidths': Settings.VIOLATION_HALFWIDTHS}
        return payload


def adjudicate_values(bound: float, empirical: float, halfwidth: Optional[float],
                      halfwidths: float = Settings.VIOLATION_HALFWIDTHS) -> str:
    """判定: 经验值超出界 halfwidths 个半宽才算违反"""
    if halfwidth is None or not np.isfinite(halfwidth) or not np.isfinite(empirical):
        return 'inconclusive'
    if empirical - halfwidths * halfwidth > bound:
        return 'violated'
    return 'holds'


def _require_p(p: float):
    if not p >= 2:
        raise DomainError(f"p 必须 >= 2, 当前 {p}")


def bound_martingale(table: MomentTable, p: float, n: Optional[int] = None) -> float:
    """|n^{-1/2} S(n)|_p <= (p-1) [n^{-1} Σ |ξ(i)|_p²]^{1/2}"""
    _require_p(p)
    return (p - 1) * mixed_norm(table, p, 2.0, n)


def legacy_coefficient(p: float) -> float:
    """早期的系数 p√2, 用于对比 (p-1) 的改进"""
    _require_p(p)
    return p * math.sqrt(2.0)


def bound_bounded_multipliers(V: float, xi_table: MomentTable, p: float, n: Optional[int] = None) -> float:
    """|b(i)| <= V 时的鞅变换界 (p-1) V [n^{-1} Σ |ξ(i)|_p²]^{1/2}"""
    _require_p(p)
    if V < 0:
        raise DomainError(f"V 必须非负, 当前 {V}")
    return (p - 1) * V * mixed_norm(xi_table, p, 2.0, n)


def bound_transform(b_table: MomentTable, xi_table: MomentTable, p: float,
                    n: Optional[int], quad: HolderQuadruple) -> float:
    """(p-1) |b|_{αp, 2λ} |ξ|_{βp, 2μ}, 界定 |n^{-1/2} W(n)|_p"""
    _require_p(p)
    if not isinstance(quad, HolderQuadruple):
        quad = HolderQuadruple(*quad)
    b_part = mixed_norm(b_table, quad.alpha * p, 2 * quad.lam, n)
    xi_part = mixed_norm(xi_table, quad.beta * p, 2 * quad.mu, n)
    return (p - 1) * b_part * xi_part


class _QuadrupleObjective:
    """在 (1/α, 1/λ) ∈ [0,1]² 上的目标函数, 不可行点取 +∞"""

    def __init__(self, b_table: MomentTable, xi_table: MomentTable, p: float, n: Optional[int]):
        self.b_table = b_table
        self.xi_table = xi_table
        self.p = p
        self.n = n

    def __call__(self, s: float, t: float) -> float:
        try:
            quad = HolderQuadruple.from_reciprocals(s, t)
            return bound_transform(self.b_table, self.xi_table, self.p, self.n, quad)
        except DomainError:
            return math.inf

    def row(self, s: float, ts: np.ndarray) -> np.ndarray:
        return np.array([self(s, t) for t in ts])


def optimize_quadruple(b_table: MomentTable, xi_table: MomentTable, p: float,
                       n: Optional[int] = None, grid_points: int = Settings.QUADRUPLE_COARSE_GRID,
                       threads: int = 1, refine: bool = True) -> Tuple[HolderQuadruple, float]:
    """在约束集上最小化鞅变换界: 粗网格后局部细化"""
    _require_p(p)
    objective = _QuadrupleObjective(b_table, xi_table, p, n)
    grid = np.linspace(0.0, 1.0, grid_points)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        rows = list(executor.map(lambda s: objective.row(s, grid), grid))
    values = np.vstack(rows)

    excluded = int(np.sum(~np.isfinite(values)))
    if excluded == values.size:
        raise DomainError(f"p={p:g} 时网格上没有可行的Hölder四元组")
    if excluded:
        logger.debug(f"📊 p={p:g}: 排除 {excluded}/{values.size} 个超出网格的四元组")

    # 相对容差内的并列取字典序最小的 (1/α, 1/λ), 即偏向较大的 α
    best = float(np.min(values))
    ties = np.argwhere(values <= best * (1 + Settings.QUADRUPLE_TIE_RTOL))
    i, j = ties[0]
    s_best, t_best = float(grid[i]), float(grid[j])

    if refine and grid_points > 1:
        h = 1.0 / (grid_points - 1)
        start = np.array([s_best, t_best])
        simplex = np.array([
            start,
            [s_best + h if s_best + h <= 1 else s_best - h, t_best],
            [s_best, t_best + h if t_best + h <= 1 else t_best - h],
        ])
        result = minimize(lambda x: objective(float(np.clip(x[0], 0, 1)), float(np.clip(x[1], 0, 1))),
                          start, method='Nelder-Mead',
                          options={'initial_simplex': simplex, 'xatol': 1e-10, 'fatol': 1e-14,
                                   'maxiter': 2000})
        refined = float(result.fun)
        if np.isfinite(refined) and refined < best * (1 - Settings.QUADRUPLE_TIE_RTOL):
            s_best = float(np.clip(result.x[0], 0, 1))
            t_best = float(np.clip(result.x[1], 0, 1))
            best = objective(s_best, t_best)

    return HolderQuadruple.from_reciprocals(s_best, t_best), best


def theta_function(b_table: MomentTable, xi_table: MomentTable, n: Optional[int] = None,
                   threads: int = 1) -> PsiFunction:
    """θ(p) = inf_D (p-1) |b|_{αp,2λ} |ξ|_{βp,2μ}, 作为网格ψ函数"""
    ps: List[float] = []
    values: List[float] = []
    for p in xi_table.p_grid:
        if p < 2:
            continue
        try:
            _, value = optimize_quadruple(b_table, xi_table, float(p), n, threads=threads)
        except DomainError:
            continue
        ps.append(float(p))
        values.append(value)

    if not ps:
        raise DomainError("θ(p) 在 p > 2 上处处无穷, 不存在 a > 2 使 θ(a) < ∞")
    if len(ps) < xi_table.p_grid.size:
        logger.info(f"📊 θ(p) 定义于 p ∈ [{ps[0]:g}, {ps[-1]:g}], 其余网格点不可行")
    return PsiFunction.from_grid(ps, values)


def bound_conditional_uniform(Q: float, p: float) -> float:
    """条件一致有界时 sup_n |n^{-1/2} S(n)|_p <= p Q"""
    _require_p(p)
    if not (Q >= 0 and np.isfinite(Q)):
        raise DomainError(f"Q 必须有限且非负, 当前 {Q}")
    return p * Q


def quadratic_characteristic(cond_table: MomentTable, p: float, n: Optional[int] = None) -> float:
    """<f>_{n,p} = [Σ_i |E(ξ²(i)|F(i-1))|_p]^{1/2}"""
    n = cond_table.n if n is None else n
    if not 1 <= n <= cond_table.n:
        raise DomainError(f"n={n} 超出矩表范围 1..{cond_table.n}")
    return math.sqrt(float(np.sum(cond_table.column_at(p)[:n])))


def bound_quadratic_characteristic(cond_table: MomentTable, p: float,
                                   c3: float = Settings.DEFAULT_C3, n: Optional[int] = None) -> float:
    """c3 (p / log p) <f>_{n,p}"""
    _require_p(p)
    if not c3 > 0:
        raise DomainError(f"c3 必须为正, 当前 {c3}")
    return c3 * (p / math.log(p)) * quadratic_characteristic(cond_table, p, n)


def p_quadratic_variation(table: MomentTable, p: float, n: Optional[int] = None) -> float:
    """[f]_{n,p} = {Σ_i |ξ²(i)|_p}^{1/2} = {Σ_i |ξ(i)|_{2p}²}^{1/2}"""
    _require_p(p)
    n = table.n if n is None else n
    if not 1 <= n <= table.n:
        raise DomainError(f"n={n} 超出矩表范围 1..{table.n}")
    column = table.column_at(2 * p)[:n]
    return math.sqrt(float(np.sum(column ** 2)))


def mp_bracket(p: float) -> Tuple[float, float, bool]:
    """独立情形常数的双侧估计 (0.87 p / log p, p - 1) 及其有效标志"""
    _require_p(p)
    lower = 0.87 * p / math.log(p)
    upper = p - 1
    return lower, upper, lower <= upper


def tau_function(tables: Sequence[MomentTable]) -> PsiFunction:
    """τ(p) = sup_v sup_n (p-1) [n^{-1} Σ |ξ(i,v)|_p²]^{1/2}"""
    if not tables:
        raise DomainError("参数族为空")
    grid = tables[0].p_grid
    for table in tables[1:]:
        if table.p_grid.shape != grid.shape or not np.allclose(table.p_grid, grid, rtol=1e-12):
            raise DomainError("参数族的矩表必须共享同一个p网格")

    ps = grid[grid >= 2]
    if ps.size == 0:
        raise DomainError("p网格与 [2, ∞) 不相交")
    values = [(p - 1) * max(mixed_norm_horizon_sup(t, float(p), 2.0) for t in tables) for p in ps]
    return PsiFunction.from_grid(ps, values)
