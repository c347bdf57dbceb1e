#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
度量熵模块
覆盖数、自然距离与熵积分收敛判别 (GLS / Pisier / Dudley)
"""

import math
from dataclasses import dataclass, asdict
from typing import Callable, Dict, Hashable, List, Optional, Sequence, Tuple, Union, Any

import numpy as np
import pandas as pd
from loguru import logger
from scipy.integrate import quad, trapezoid
from scipy.spatial.distance import cdist

from config.settings import Settings
from core.errors import DomainError
from core.gls import MomentCurve, PsiFunction, gls_norm, psi_lower_transform
from core.mixed_norms import MomentTable, mixed_norm_horizon_sup

MODEL_FAMILIES = ('constant', 'log', 'power')
CRITERIA = ('gls', 'pisier', 'dudley')


@dataclass(frozen=True)
class EntropyModel:
    """H(ε) 的解析模型: constant c, log c + k log(1/ε), power c ε^{-s}"""
    family: str
    c: float = 0.0
    k: float = 0.0
    s: float = 0.0
    fit_window: Optional[Tuple[float, float]] = None
    residual: float = 0.0

    def __post_init__(self):
        if self.family not in MODEL_FAMILIES:
            raise DomainError(f"未知的熵模型: {self.family}")
        if self.family == 'power' and not (self.c > 0 and self.s > 0):
            raise DomainError("power 模型需要 c > 0, s > 0")
        if self.family == 'log' and self.k < 0:
            raise DomainError("log 模型需要 k >= 0")

    @classmethod
    def covering_power(cls, exponent: float, c: float = 0.0) -> 'EntropyModel':
        """N(ε) = e^c ε^{-exponent}, 即 H = c + exponent log(1/ε)"""
        return cls('log', c=c, k=exponent)

    def H_of_t(self, t) -> np.ndarray:
        """以 t = -log ε 表示的 H"""
        t = np.asarray(t, dtype=float)
        if self.family == 'constant':
            return np.full(t.shape, self.c)
        if self.family == 'log':
            return self.c + self.k * t
        with np.errstate(over='ignore'):
            return self.c * np.exp(self.s * t)

    def H(self, eps) -> np.ndarray:
        return self.H_of_t(-np.log(np.asarray(eps, dtype=float)))

    def t_ceiling(self) -> float:
        """H 达到数值上限前的最大 t"""
        if self.family == 'power':
            return min(700.0, (math.log(Settings.ENTROPY_H_CEILING) - math.log(self.c)) / self.s)
        return 700.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(eq=False)
class EntropyProfile:
    """熵曲线 ε -> H(ε), ε 递减排列"""
    epsilon: np.ndarray
    H_upper: np.ndarray
    H_lower: Optional[np.ndarray] = None
    provenance: str = 'points'
    model: Optional[EntropyModel] = None

    def __post_init__(self):
        eps = np.asarray(self.epsilon, dtype=float)
        upper = np.asarray(self.H_upper, dtype=float)
        lower = upper if self.H_lower is None else np.asarray(self.H_lower, dtype=float)
        if eps.ndim != 1 or eps.shape != upper.shape or lower.shape != upper.shape:
            raise DomainError("熵曲线的 ε 与 H 长度不一致")
        if np.any(eps <= 0):
            raise DomainError("ε 必须为正")
        order = np.argsort(-eps)
        self.epsilon, self.H_upper, self.H_lower = eps[order], upper[order], lower[order]
        if np.any(self.H_lower < 0) or np.any(self.H_upper < self.H_lower - 1e-12):
            raise DomainError("熵曲线需要 0 <= H_lower <= H_upper")
        if np.any(np.diff(self.H_upper) < -1e-12) or np.any(np.diff(self.H_lower) < -1e-12):
            raise DomainError("H 必须随 ε 减小而不减")

    @classmethod
    def from_model(cls, model: EntropyModel, eps_grid=None) -> 'EntropyProfile':
        eps = np.geomspace(1.0, 1e-6, 61) if eps_grid is None else np.asarray(eps_grid, dtype=float)
        values = np.maximum(model.H(eps), 0.0)
        return cls(eps, values, provenance='model', model=model)

    def with_model(self, model: EntropyModel) -> 'EntropyProfile':
        return EntropyProfile(self.epsilon, self.H_upper, self.H_lower, self.provenance, model)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'epsilon': self.epsilon, 'H_upper': self.H_upper, 'H_lower': self.H_lower})


@dataclass(eq=False)
class DistanceMatrix:
    """有限指标集上的 (半) 距离矩阵"""
    matrix: np.ndarray
    labels: Optional[List[Hashable]] = None

    def __post_init__(self):
        d = np.asarray(self.matrix, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise DomainError("距离矩阵必须是方阵")
        if np.any(d < 0) or np.any(np.isnan(d)):
            raise DomainError("距离必须非负")
        if not np.allclose(d, d.T, rtol=1e-12, atol=0.0):
            raise DomainError("距离矩阵必须对称")
        if np.any(np.diag(d) != 0):
            raise DomainError("距离矩阵对角线必须为零")
        self.matrix = d
        if self.labels is None:
            self.labels = list(range(d.shape[0]))

    @property
    def size(self) -> int:
        return int(self.matrix.shape[0])

    def triangle_violation(self) -> float:
        """max d(i,k) - d(i,j) - d(j,k)"""
        d = self.matrix
        worst = 0.0
        for j in range(self.size):
            excess = d - (d[:, j][:, None] + d[j, :][None, :])
            worst = max(worst, float(np.max(excess)))
        return worst

    def is_semimetric(self, tol: float = 1e-9) -> bool:
        return self.triangle_violation() <= tol


# ---- 距离 ----

def _pair_key(pairs: Dict, a, b):
    if (a, b) in pairs:
        return pairs[(a, b)]
    if (b, a) in pairs:
        return pairs[(b, a)]
    raise DomainError(f"缺少点对 ({a}, {b}) 的差分矩曲线")


def natural_distance(labels: Sequence[Hashable], pair_curves: Dict[Tuple[Hashable, Hashable], MomentCurve],
                     psi: PsiFunction) -> DistanceMatrix:
    """d(v1, v2) = ‖η(v1) - η(v2)‖_{G(ψ)}"""
    labels = list(labels)
    size = len(labels)
    d = np.zeros((size, size))
    for a in range(size):
        for b in range(a + 1, size):
            curve = _pair_key(pair_curves, labels[a], labels[b])
            d[a, b] = d[b, a] = gls_norm(curve, psi)
    return DistanceMatrix(d, labels)


def martingale_distance_curve(diff_table: MomentTable) -> MomentCurve:
    """p -> sup_n (p-1)[n^{-1} Σ |Δξ(i)|_p²]^{1/2}, 界定差分鞅的 n^{-1/2} 范数"""
    ps = diff_table.p_grid[diff_table.p_grid >= 2]
    if ps.size == 0:
        raise DomainError("p网格与 [2, ∞) 不相交")
    values = [(p - 1) * mixed_norm_horizon_sup(diff_table, float(p), 2.0) for p in ps]
    return MomentCurve(ps, values)


def rho_distance(labels: Sequence[Hashable], diff_tables: Dict[Tuple[Hashable, Hashable], MomentTable],
                 tau: PsiFunction) -> DistanceMatrix:
    """τ 归一化的鞅场距离 ρ(v1, v2) = sup_p 差分界 / τ(p)"""
    curves = {key: martingale_distance_curve(table) for key, table in diff_tables.items()}
    return natural_distance(labels, curves, tau)


# ---- 覆盖 ----

def farthest_point_radii(dmat: DistanceMatrix) -> Tuple[np.ndarray, np.ndarray]:
    """最远点遍历 (从指标 0 开始, 并列取最小指标), 返回顺序与插入半径"""
    size = dmat.size
    if size == 0:
        raise DomainError("点集为空")
    d = dmat.matrix
    order = [0]
    radii = [math.inf]
    nearest = d[0].copy()
    chosen = np.zeros(size, dtype=bool)
    chosen[0] = True
    for _ in range(size - 1):
        candidates = np.where(chosen, -1.0, nearest)
        k = int(np.argmax(candidates))
        order.append(k)
        radii.append(float(nearest[k]))
        chosen[k] = True
        nearest = np.minimum(nearest, d[k])
    return np.array(order), np.array(radii)


def distance_matrix_from_points(points) -> DistanceMatrix:
    """欧氏距离矩阵"""
    x = np.asarray(points, dtype=float)
    if x.size == 0:
        raise DomainError("点集为空")
    if x.ndim == 1:
        x = x[:, None]
    return DistanceMatrix(cdist(x, x))


def covering_entropy(dmat: Union[DistanceMatrix, np.ndarray, Sequence], eps_grid) -> EntropyProfile:
    """贪心覆盖给出 H 的上界, 2ε-分离的中心给出下界"""
    if not isinstance(dmat, DistanceMatrix):
        dmat = distance_matrix_from_points(dmat)
    _, radii = farthest_point_radii(dmat)
    eps = np.asarray(eps_grid, dtype=float)
    if np.any(eps <= 0):
        raise DomainError("ε 必须为正")
    upper = np.array([np.sum(radii > e) for e in eps], dtype=float)
    lower = np.array([np.sum(radii > 2 * e) for e in eps], dtype=float)
    return EntropyProfile(eps, np.log(upper), np.log(np.maximum(lower, 1.0)), provenance='points')


def fit_entropy_model(profile: EntropyProfile, window: int = Settings.ENTROPY_FIT_WINDOW) -> EntropyModel:
    """在最小的 ε 窗口上拟合 log 或 power 模型, 取残差较小者"""
    eps = profile.epsilon[-window:]
    H = profile.H_upper[-window:]
    if eps.size < 3:
        raise DomainError("拟合熵模型至少需要 3 个 ε 点")
    t = -np.log(eps)
    span = (float(eps.min()), float(eps.max()))

    if np.ptp(H) == 0:
        return EntropyModel('constant', c=float(H[0]), fit_window=span, residual=0.0)

    design = np.column_stack([np.ones_like(t), t])
    coef, *_ = np.linalg.lstsq(design, H, rcond=None)
    log_resid = float(np.sqrt(np.mean((design @ coef - H) ** 2)))
    candidates = [(log_resid, EntropyModel('log', c=float(coef[0]), k=max(float(coef[1]), 0.0),
                                           fit_window=span, residual=log_resid))]

    positive = H > 0
    if np.sum(positive) >= 3:
        pc, *_ = np.linalg.lstsq(design[positive], np.log(H[positive]), rcond=None)
        if pc[1] > 0:
            fitted = np.exp(pc[0]) * np.exp(pc[1] * t)
            power_resid = float(np.sqrt(np.mean((fitted - H) ** 2)))
            candidates.append((power_resid, EntropyModel('power', c=float(np.exp(pc[0])), s=float(pc[1]),
                                                         fit_window=span, residual=power_resid)))

    residual, model = min(candidates, key=lambda item: item[0])
    logger.info(f"🔧 熵模型拟合: {model.family}, 窗口 {span}, 残差 {residual:.3g}")
    return model


# ---- 积分判别 ----

@dataclass
class IntegralResult:
    """熵积分的判别结果"""
    criterion: str
    verdict: str  # converges | diverges | inconclusive
    value: Optional[float] = None
    error: Optional[float] = None
    model: Optional[Dict[str, Any]] = None
    fit_window: Optional[Tuple[float, float]] = None
    residual: Optional[float] = None
    exponent: Optional[float] = None
    log_power: Optional[float] = None
    provenance: str = 'quadrature'

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _log_integrand(criterion: str, psi: Optional[PsiFunction], r: Optional[float]) -> Callable[[np.ndarray], np.ndarray]:
    """log g(H), 被积函数 g 是 H 的函数"""
    if criterion == 'pisier':
        return lambda H: np.asarray(H, dtype=float) / r
    if criterion == 'dudley':
        def dudley(H):
            with np.errstate(divide='ignore'):
                return 0.5 * np.log(np.asarray(H, dtype=float))
        return dudley

    def gls(H):
        H = np.atleast_1d(np.asarray(H, dtype=float))
        out = np.empty_like(H)
        for idx, h in enumerate(H):
            x = math.log(2.0) + float(h)
            closed = psi.closed_form_lower(x)
            out[idx] = closed if closed is not None else psi_lower_transform(psi, x)
        return out
    return gls


def _classify(model: EntropyModel, log_g: Callable) -> Tuple[str, float, float, float]:
    """在 t = -log ε 上拟合 log h = a + s t + q log t, 依据 s 与 q 判定"""
    t_hi = model.t_ceiling()
    t = np.geomspace(t_hi / 4, t_hi, Settings.ENTROPY_FIT_POINTS)
    log_h = log_g(model.H_of_t(t)) - t
    if np.all(np.isneginf(log_h)):
        return 'converges', -math.inf, 0.0, 0.0
    if not np.all(np.isfinite(log_h)):
        return 'inconclusive', math.nan, math.nan, math.nan

    design = np.column_stack([np.ones_like(t), t, np.log(t)])
    coef, *_ = np.linalg.lstsq(design, log_h, rcond=None)
    residual = float(np.sqrt(np.mean((design @ coef - log_h) ** 2)))
    slope, power = float(coef[1]), float(coef[2])

    if slope < -Settings.ENTROPY_SLOPE_TOL:
        verdict = 'converges'
    elif slope > Settings.ENTROPY_SLOPE_TOL:
        verdict = 'diverges'
    elif power < -1 - Settings.ENTROPY_POWER_TOL:
        verdict = 'converges'
    elif power > -1 + Settings.ENTROPY_POWER_TOL:
        verdict = 'diverges'
    else:
        verdict = 'inconclusive'
    return verdict, slope, power, residual


def _model_integral(model: EntropyModel, log_g: Callable, t_lo: float = 0.0,
                    t_hi: float = math.inf) -> Tuple[float, float]:
    """∫ g(H(e^{-t})) e^{-t} dt, 对应 ε ∈ (e^{-t_hi}, e^{-t_lo}]"""
    def integrand(t):
        value = float(log_g(model.H_of_t(np.array([t])))[0]) - t
        return 0.0 if value == -math.inf else math.exp(value)
    value, error = quad(integrand, t_lo, t_hi, epsabs=1e-12, epsrel=1e-10, limit=200)
    return float(value), float(error)


def _grid_integral(profile: EntropyProfile, log_g: Callable) -> Tuple[float, float, float]:
    """网格部分 [ε_min, min(ε_max, 1)] 的梯形积分"""
    keep = profile.epsilon <= 1.0
    eps = profile.epsilon[keep][::-1]
    if eps.size < 2:
        return 0.0, 1.0, 1.0
    g = np.exp(log_g(profile.H_upper[keep][::-1]))
    return float(trapezoid(g, eps)), float(eps[0]), float(eps[-1])


def _entropy_integral(criterion: str, source: Union[EntropyProfile, EntropyModel],
                      psi: Optional[PsiFunction] = None, r: Optional[float] = None) -> IntegralResult:
    log_g = _log_integrand(criterion, psi, r)
    profile = source if isinstance(source, EntropyProfile) else None
    model = source if isinstance(source, EntropyModel) else (profile.model if profile else None)

    if model is None:
        value, _, _ = _grid_integral(profile, log_g)
        logger.warning(f"⚠️ {criterion}: 没有 ε→0 的解析模型, 仅在网格上积分")
        return IntegralResult(criterion, 'inconclusive', value=value, provenance='quadrature')

    verdict, slope, power, residual = _classify(model, log_g)
    result = IntegralResult(criterion, verdict, model=model.to_dict(), fit_window=model.fit_window,
                            residual=residual, exponent=slope, log_power=power)
    if verdict != 'converges':
        return result

    if profile is not None and profile.provenance == 'points':
        grid_value, eps_min, eps_max = _grid_integral(profile, log_g)
        head, head_err = _model_integral(model, log_g, t_lo=-math.log(eps_min))
        top, top_err = (0.0, 0.0)
        if eps_max < 1.0:
            top, top_err = _model_integral(model, log_g, t_lo=0.0, t_hi=-math.log(eps_max))
        result.value = grid_value + head + top
        result.error = head_err + top_err
    else:
        result.value, result.error = _model_integral(model, log_g)
    return result


def integral_gls(psi: PsiFunction, source: Union[EntropyProfile, EntropyModel]) -> IntegralResult:
    """∫_0^1 exp(ψ_*(log 2 + H(ε))) dε"""
    return _entropy_integral('gls', source, psi=psi)


def integral_pisier(source: Union[EntropyProfile, EntropyModel], r: float) -> IntegralResult:
    """∫_0^1 N^{1/r}(z) dz"""
    if r < 1:
        raise DomainError(f"r 必须 >= 1, 当前 {r}")
    return _entropy_integral('pisier', source, r=r)


def integral_dudley(source: Union[EntropyProfile, EntropyModel]) -> IntegralResult:
    """∫_0^1 H^{1/2}(ε) dε"""
    return _entropy_integral('dudley', source)


def holder_condition(d: int, alpha: float, r: float) -> bool:
    """Hölder 型覆盖 N(z) ~ z^{-d/α} 下 Pisier 条件成立当且仅当 r > d/α"""
    if int(d) != d or d < 1:
        raise DomainError(f"d 必须是正整数, 当前 {d}")
    if not 0 < alpha <= 1:
        raise DomainError(f"α 必须落在 (0, 1], 当前 {alpha}")
    if r < 1:
        raise DomainError(f"r 必须 >= 1, 当前 {r}")
    return r > d / alpha


def criterion_report(result: IntegralResult, weak_compactness: bool = False) -> Dict[str, Any]:
    """判别结果的报告, 弱紧性由调用者声明"""
    payload = result.to_dict()
    payload['weak_compactness_declared'] = bool(weak_compactness)
    payload['tolerance'] = result.error if result.error is not None else Settings.QUADRATURE_TOLERANCE
    if result.verdict == 'converges':
        conclusion = "criterion satisfied => sample paths are a.s. continuous"
        if weak_compactness:
            conclusion += " and the laws are weakly compact"
    elif result.verdict == 'diverges':
        conclusion = "criterion not satisfied; no conclusion"
    else:
        conclusion = "inconclusive; supply an analytic entropy model near zero"
    payload['conclusion'] = conclusion
    return payload
