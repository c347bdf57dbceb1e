#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Grand Lebesgue 空间核心模块
ψ函数表示、GLS范数、Young-Fenchel变换与指数尾部界
"""

import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple, Any

import numpy as np
from loguru import logger
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from config.settings import Settings
from core.errors import DomainError

PSI_KINDS = ('grid', 'psi_r', 'psi_sub2')


def loglog_interp(x, xp: np.ndarray, fp: np.ndarray) -> np.ndarray:
    """在 (log p, log 值) 中线性插值, 含零值的区间退化为线性插值"""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    idx = np.clip(np.searchsorted(xp, x, side='right') - 1, 0, len(xp) - 2)
    x0, x1 = xp[idx], xp[idx + 1]
    f0, f1 = fp[idx], fp[idx + 1]
    w = (np.log(x) - np.log(x0)) / (np.log(x1) - np.log(x0))
    positive = (f0 > 0) & (f1 > 0)
    with np.errstate(divide='ignore'):
        log_part = np.exp(np.log(np.where(positive, f0, 1.0)) * (1 - w)
                          + np.log(np.where(positive, f1, 1.0)) * w)
    out[:] = np.where(positive, log_part, f0 * (1 - w) + f1 * w)
    # 网格点上精确取值
    exact = np.isclose(x, x0, rtol=1e-14, atol=0.0)
    out[exact] = f0[exact]
    exact_hi = np.isclose(x, x1, rtol=1e-14, atol=0.0)
    out[exact_hi] = f1[exact_hi]
    return out


@dataclass(eq=False)
class MomentCurve:
    """矩曲线 p -> |η|_p"""
    p_grid: np.ndarray
    values: np.ndarray
    halfwidths: Optional[np.ndarray] = None
    correction: float = 0.0  # 保序修正幅度
    provenance: str = 'formula'

    def __post_init__(self):
        self.p_grid = np.asarray(self.p_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.p_grid.ndim != 1 or self.p_grid.size == 0:
            raise DomainError("矩曲线需要非空的一维p网格")
        if self.values.shape != self.p_grid.shape:
            raise DomainError("矩曲线的取值与p网格长度不一致")
        if self.p_grid.size > 1 and np.any(np.diff(self.p_grid) <= 0):
            raise DomainError("p网格必须严格递增")
        if np.any(self.values < 0) or np.any(np.isnan(self.values)):
            raise DomainError("矩曲线取值必须非负")
        if self.halfwidths is not None:
            self.halfwidths = np.asarray(self.halfwidths, dtype=float)

    @classmethod
    def constant(cls, p_grid, value: float) -> 'MomentCurve':
        """常数曲线 (退化分布)"""
        p_grid = np.asarray(p_grid, dtype=float)
        return cls(p_grid, np.full(p_grid.shape, float(value)))

    @classmethod
    def from_function(cls, p_grid, func: Callable[[np.ndarray], np.ndarray],
                      provenance: str = 'formula') -> 'MomentCurve':
        """由解析表达式构造"""
        p_grid = np.asarray(p_grid, dtype=float)
        return cls(p_grid, np.asarray(func(p_grid), dtype=float), provenance=provenance)

    @classmethod
    def gaussian(cls, p_grid, sigma: float = 1.0) -> 'MomentCurve':
        """N(0, σ²) 的精确绝对矩曲线"""
        p_grid = np.asarray(p_grid, dtype=float)
        return cls(p_grid, sigma * np.exp(gaussian_log_abs_moment(p_grid) / p_grid))

    @property
    def p_min(self) -> float:
        return float(self.p_grid[0])

    @property
    def p_max(self) -> float:
        return float(self.p_grid[-1])

    def covers(self, p: float) -> bool:
        """p 是否落在网格范围内"""
        return self.p_min * (1 - 1e-12) <= p <= self.p_max * (1 + 1e-12)

    def value_at(self, p: float) -> float:
        """在 p 处取值 (网格外报错)"""
        if not self.covers(p):
            raise DomainError(f"p={p:g} 超出矩曲线网格 [{self.p_min:g}, {self.p_max:g}]")
        if self.p_grid.size == 1:
            return float(self.values[0])
        p = min(max(p, self.p_min), self.p_max)
        return float(loglog_interp(p, self.p_grid, self.values)[0])

    def lyapunov_violation(self) -> float:
        """最大相对下降量, 0 表示单调不减"""
        if self.values.size < 2:
            return 0.0
        drops = self.values[:-1] - self.values[1:]
        scale = np.maximum(np.abs(self.values[:-1]), 1e-300)
        return float(max(0.0, np.max(drops / scale)))

    def is_monotone(self, rtol: float = 1e-9) -> bool:
        return self.lyapunov_violation() <= rtol

    def scaled(self, factor: float) -> 'MomentCurve':
        hw = None if self.halfwidths is None else self.halfwidths * abs(factor)
        return MomentCurve(self.p_grid, self.values * abs(factor), hw, self.correction, self.provenance)

    def to_dict(self) -> Dict[str, Any]:
        return {'p': self.p_grid.tolist(), 'value': self.values.tolist()}


def gaussian_log_abs_moment(p) -> np.ndarray:
    """log E|g|^p, g ~ N(0,1)"""
    p = np.asarray(p, dtype=float)
    return (p / 2) * math.log(2.0) + gammaln((p + 1) / 2) - 0.5 * math.log(math.pi)


@dataclass(eq=False)
class PsiFunction:
    """生成函数 ψ(p), 定义在 [2, a) 上"""
    kind: str
    a: float = math.inf
    r: Optional[float] = None
    grid_p: Optional[np.ndarray] = None
    grid_values: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in PSI_KINDS:
            raise DomainError(f"未知的ψ函数类型: {self.kind}")
        self.a = float(self.a)
        if not self.a > 2:
            raise DomainError(f"支撑上界 a 必须大于 2, 当前 {self.a}")
        if self.kind == 'psi_r':
            if self.r is None or self.r < 1:
                raise DomainError("psi_r 需要 r >= 1")
            self.r = float(self.r)
        if self.kind == 'grid':
            p = np.asarray(self.grid_p, dtype=float)
            v = np.asarray(self.grid_values, dtype=float)
            if p.ndim != 1 or p.size == 0 or v.shape != p.shape:
                raise DomainError("网格ψ函数需要等长的 p 与取值")
            if p.size > 1 and np.any(np.diff(p) <= 0):
                raise DomainError("ψ网格的 p 必须严格递增")
            if p[0] < 2 or p[-1] >= self.a:
                raise DomainError("ψ网格必须落在 [2, a) 内")
            if not np.all(np.isfinite(v)) or np.any(v <= 0):
                raise DomainError("ψ网格取值必须有限且严格为正")
            self.grid_p = p
            self.grid_values = v

    # ---- 构造 ----

    @classmethod
    def psi_sub2(cls, a: float = math.inf) -> 'PsiFunction':
        """次高斯 ψ(p) = √p"""
        return cls('psi_sub2', a=a)

    @classmethod
    def psi_r(cls, r: float) -> 'PsiFunction':
        """退化 ψ_r: 在 r 处为 1, 其余为 +∞"""
        return cls('psi_r', r=r)

    @classmethod
    def from_grid(cls, p, values, a: Optional[float] = None) -> 'PsiFunction':
        p = np.asarray(p, dtype=float)
        if a is None:
            a = math.inf
        return cls('grid', a=a, grid_p=p, grid_values=np.asarray(values, dtype=float))

    @classmethod
    def from_callable(cls, func: Callable[[np.ndarray], np.ndarray], p_min: float = 2.0,
                      p_max: float = Settings.P_GRID_MAX,
                      points: int = Settings.PSI_GRID_POINTS) -> 'PsiFunction':
        """在对数网格上采样解析ψ"""
        p = np.geomspace(p_min, p_max, points)
        return cls.from_grid(p, func(p))

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'PsiFunction':
        a = payload.get('a', 'inf')
        a = math.inf if a in ('inf', None) else float(a)
        kind = payload['kind']
        if kind == 'grid':
            grid = np.asarray(payload['grid'], dtype=float)
            return cls.from_grid(grid[:, 0], grid[:, 1], a=a)
        return cls(kind, a=a, r=payload.get('r'))

    def to_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {'kind': self.kind, 'a': 'inf' if math.isinf(self.a) else self.a}
        if self.kind == 'psi_r':
            payload['r'] = self.r
        if self.kind == 'grid':
            payload['grid'] = [[float(p), float(v)] for p, v in zip(self.grid_p, self.grid_values)]
        return payload

    # ---- 求值 ----

    def support(self, cap: float = Settings.YOUNG_FENCHEL_CAP) -> Tuple[float, float]:
        """有限取值的 p 区间 (受数值上限约束)"""
        if self.kind == 'psi_r':
            return self.r, self.r
        if self.kind == 'psi_sub2':
            return 2.0, min(self.a, cap)
        return float(self.grid_p[0]), float(min(self.grid_p[-1], cap))

    def __call__(self, p) -> np.ndarray:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        out = np.full(p.shape, math.inf)
        if self.kind == 'psi_r':
            out[np.isclose(p, self.r, rtol=1e-12, atol=0.0)] = 1.0
            return out
        inside = (p >= 2) & (p < self.a)
        if self.kind == 'psi_sub2':
            out[inside] = np.sqrt(p[inside])
            return out
        inside &= (p >= self.grid_p[0] * (1 - 1e-12)) & (p <= self.grid_p[-1] * (1 + 1e-12))
        if np.any(inside):
            if self.grid_p.size == 1:
                out[inside] = self.grid_values[0]
            else:
                q = np.clip(p[inside], self.grid_p[0], self.grid_p[-1])
                out[inside] = loglog_interp(q, self.grid_p, self.grid_values)
        return out

    def log_value(self, p) -> np.ndarray:
        with np.errstate(divide='ignore'):
            return np.log(self(p))

    def closed_form_upper(self, y: float) -> Optional[float]:
        """ψ̄* 的解析形式 (仅 psi_sub2 与 psi_r)"""
        if self.kind == 'psi_r':
            return self.r * y if self.r >= 2 else None
        if self.kind == 'psi_sub2' and math.isinf(self.a):
            if y >= (1 + math.log(2)) / 2:
                return math.exp(2 * y - 1) / 2
            return 2 * y - math.log(2)
        return None

    def closed_form_lower(self, x: float) -> Optional[float]:
        """ψ_* 的解析形式 (仅 psi_sub2 与 psi_r)"""
        if self.kind == 'psi_r':
            return x / self.r if self.r >= 2 else math.inf
        if self.kind == 'psi_sub2' and math.isinf(self.a):
            if x >= 1:
                return 0.5 + 0.5 * math.log(2 * x)
            return x / 2 + 0.5 * math.log(2)
        return None


def gls_norm(curve: MomentCurve, psi: PsiFunction) -> float:
    """G(ψ) 范数: 公共网格上 m(p)/ψ(p) 的上确界"""
    if psi.kind == 'psi_r':
        if not curve.covers(psi.r):
            raise DomainError(f"矩曲线网格不包含 r={psi.r:g}")
        return curve.value_at(psi.r)

    psi_values = psi(curve.p_grid)
    common = np.isfinite(psi_values)
    if not np.any(common):
        raise DomainError("矩曲线与ψ函数的支撑不相交")

    ratios = curve.values[common] / psi_values[common]
    if not np.all(np.isfinite(ratios)):
        logger.debug("📊 GLS范数在网格上无界")
        return math.inf
    return float(np.max(ratios))


def _upper_objective(psi: PsiFunction, y: float, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x * y - x * psi.log_value(x)


def _young_fenchel_search(psi: PsiFunction, y: float,
                          cap: float = Settings.YOUNG_FENCHEL_CAP,
                          points: int = Settings.YOUNG_FENCHEL_SEARCH_POINTS) -> Tuple[float, bool]:
    """网格 + 局部细化求 sup_x (xy - ψ̄(x)), 返回 (取值, 是否在数值上限处仍递增)"""
    if psi.kind == 'psi_r':
        if psi.r < 2:
            raise DomainError("psi_r 在 [2, a) 上无有限取值")
        return psi.r * y, False

    lo, hi = psi.support(cap)
    if not hi > lo:
        raise DomainError("ψ函数在 [2, a) 上没有非退化的有限区间")

    xs = np.geomspace(lo, hi, points)
    objective = _upper_objective(psi, y, xs)
    k = int(np.argmax(objective))
    best = float(objective[k])

    # 上界由数值上限截断而非 a 或网格截断
    capped = hi >= cap and psi.support(math.inf)[1] > cap
    if k == xs.size - 1 and capped and objective[-1] > objective[-2]:
        return best, True

    left = xs[max(k - 1, 0)]
    right = xs[min(k + 1, xs.size - 1)]
    if right > left:
        result = minimize_scalar(lambda t: -float(_upper_objective(psi, y, t)[0]),
                                 bounds=(left, right), method='bounded',
                                 options={'xatol': 1e-10 * right})
        if result.success and np.isfinite(result.fun):
            best = max(best, -float(result.fun))
    return best, False


def young_fenchel_upper(psi: PsiFunction, y: float) -> float:
    """ψ̄*(y) = sup_{x>=2} (xy - x log ψ(x)), 在数值上限处仍递增时返回 +∞"""
    value, unbounded = _young_fenchel_search(psi, y)
    if unbounded:
        logger.warning(f"⚠️ Young-Fenchel 目标在数值上限 {Settings.YOUNG_FENCHEL_CAP:g} 处仍递增, y={y:g}")
        return math.inf
    return value


def tail_bound(psi: PsiFunction, gls_norm_value: float, u: float) -> float:
    """指数尾部界 min(1, 2 exp(-ψ̄*(log(u/‖ξ‖))))"""
    if not u > 0:
        raise DomainError(f"u 必须为正, 当前 {u}")
    if not (np.isfinite(gls_norm_value) and gls_norm_value > 0):
        raise DomainError(f"GLS范数必须有限且为正, 当前 {gls_norm_value}")

    y = math.log(u / gls_norm_value)
    # 截断处的取值是上确界的下界, 因而给出的尾部界仍然成立
    value, _ = _young_fenchel_search(psi, y)
    if value <= math.log(2.0):
        return 1.0
    return min(1.0, 2.0 * math.exp(-value))


def psi_lower_transform(psi: PsiFunction, x: float,
                        cap: float = Settings.YOUNG_FENCHEL_CAP,
                        points: int = Settings.LOWER_TRANSFORM_SEARCH_POINTS) -> float:
    """ψ_*(x) = inf_{y∈(0,1/2]} (xy + log ψ(1/y))"""
    if psi.kind == 'psi_r':
        return x / psi.r if psi.r >= 2 else math.inf

    lo, hi = psi.support(cap)
    lo = max(lo, 2.0)
    if hi < lo:
        return math.inf

    if hi == lo:
        return float(x / lo + psi.log_value(lo)[0])

    ps = np.geomspace(lo, hi, points)
    ys = 1.0 / ps
    objective = x * ys + psi.log_value(ps)
    if not np.any(np.isfinite(objective)):
        return math.inf
    k = int(np.nanargmin(objective))
    best = float(objective[k])

    left = ps[max(k - 1, 0)]
    right = ps[min(k + 1, ps.size - 1)]
    if right > left:
        result = minimize_scalar(lambda p: x / p + float(psi.log_value(p)[0]),
                                 bounds=(left, right), method='bounded',
                                 options={'xatol': 1e-10 * right})
        if result.success and np.isfinite(result.fun):
            best = min(best, float(result.fun))
    return best
