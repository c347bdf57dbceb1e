#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
蒙特卡洛模拟器
生成鞅差序列与可料乘子, 构造 S(n) 与 W(n), 估计经验矩与尾部, 并判定各个界
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace, asdict
from typing import Dict, List, Optional, Sequence, Tuple, Any

import numpy as np
import pandas as pd
from loguru import logger
from scipy import stats

from config.settings import Settings
from core.bounds import BoundReport, adjudicate_values
from core.errors import DomainError
from core.gls import MomentCurve, gaussian_log_abs_moment
from core.mixed_norms import (MomentTable, SampleMatrix, empirical_moment_curve,
                              table_from_power_sums)
from core.sharpness import cell_average

GENERATOR_FAMILIES = ('rademacher', 'gaussian', 'two_point_asymmetric',
                      'predictable_variance', 'dyadic_embedded')
MULTIPLIER_FAMILIES = ('constant', 'deterministic_sequence', 'sign_of_past',
                       'clamped_running_sum', 'gaussian_predictable')

# 随机子流编号
STREAM_DIFFERENCES = 0
STREAM_MULTIPLIERS = 1
STREAM_BOOTSTRAP = 2


def _positive_vector(values, n: int, name: str) -> np.ndarray:
    if values is None:
        return np.ones(n)
    vector = np.asarray(values, dtype=float)
    if vector.ndim == 0:
        vector = np.full(n, float(vector))
    if vector.shape != (n,):
        raise DomainError(f"{name} 的长度必须为 n={n}")
    if not np.all(np.isfinite(vector)) or np.any(vector <= 0):
        raise DomainError(f"{name} 必须有限且严格为正")
    return vector


@dataclass
class GeneratorSpec:
    """鞅差生成器配置"""
    family: str
    n: int
    reps: int
    seed: int
    variances: Optional[List[float]] = None  # gaussian 的 σ²(i)
    asymmetry: Tuple[float, float] = Settings.GENERATOR_DEFAULTS['asymmetry']
    feedback: float = Settings.GENERATOR_DEFAULTS['feedback']
    dyadic_p: int = Settings.GENERATOR_DEFAULTS['dyadic_p']

    def __post_init__(self):
        if self.family not in GENERATOR_FAMILIES:
            raise DomainError(f"未知的生成器: {self.family}")
        if self.n < 1:
            raise DomainError(f"n 必须 >= 1, 当前 {self.n}")
        if self.reps < 2:
            raise DomainError(f"reps 必须 >= 2, 当前 {self.reps}")
        if self.seed is None or not 0 <= int(self.seed) < 2 ** 64:
            raise DomainError("随机模拟需要 [0, 2^64) 内的种子")
        self.asymmetry = tuple(float(v) for v in self.asymmetry)
        if len(self.asymmetry) != 2 or min(self.asymmetry) <= 0:
            raise DomainError("two_point_asymmetric 需要两个正数 (a, b)")
        if not 0 <= self.feedback < 1:
            raise DomainError(f"方差反馈系数必须落在 [0, 1), 当前 {self.feedback}")
        if self.family == 'gaussian':
            self.sigma2 = _positive_vector(self.variances, self.n, 'σ²')
        if self.family == 'dyadic_embedded':
            if int(self.dyadic_p) != self.dyadic_p or self.dyadic_p < 2:
                raise DomainError("dyadic_embedded 需要整数 p >= 2")
            if self.n * self.dyadic_p > 52:
                raise DomainError(f"dyadic_embedded 需要 n·p <= 52 (双精度分辨率), 当前 {self.n * self.dyadic_p}")

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'GeneratorSpec':
        known = {k: v for k, v in payload.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        payload['asymmetry'] = list(self.asymmetry)
        return payload


@dataclass
class MultiplierSpec:
    """可料乘子配置"""
    family: str
    V: float = 1.0
    sequence: Optional[List[float]] = None
    variances: Optional[List[float]] = None  # gaussian_predictable 的 ρ²(i)

    def __post_init__(self):
        if self.family not in MULTIPLIER_FAMILIES:
            raise DomainError(f"未知的乘子族: {self.family}")
        if self.family in ('constant', 'clamped_running_sum') and not self.V > 0:
            raise DomainError(f"V 必须为正, 当前 {self.V}")
        if self.family == 'deterministic_sequence' and not self.sequence:
            raise DomainError("deterministic_sequence 需要给出序列")

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'MultiplierSpec':
        known = {k: v for k, v in payload.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @property
    def label(self) -> str:
        if self.family in ('constant', 'clamped_running_sum'):
            return f"{self.family}(V={self.V:g})"
        return self.family


def validate_gaussian_pair(spec: GeneratorSpec, mult: MultiplierSpec):
    """高斯情形: 0 < min(inf σ², inf ρ²) <= sup(σ² + ρ²) < ∞"""
    if spec.family != 'gaussian' or mult.family != 'gaussian_predictable':
        return
    sigma2 = spec.sigma2
    rho2 = _positive_vector(mult.variances, spec.n, 'ρ²')
    low = min(float(sigma2.min()), float(rho2.min()))
    high = float(np.max(sigma2 + rho2))
    if not (0 < low <= high < math.inf):
        raise DomainError("高斯方差不满足 0 < min(inf σ², inf ρ²) <= sup(σ²+ρ²) < ∞")


def block_generator(seed: int, stream: int, block: int) -> np.random.Generator:
    """按 (种子, 子流, 块) 派生的计数器型随机数生成器"""
    key = (int(seed) << 64) | (int(stream) << 48) | int(block)
    return np.random.Generator(np.random.Philox(key=key))


def _blocks(reps: int, block_size: int) -> List[Tuple[int, int, int]]:
    return [(b, start, min(start + block_size, reps))
            for b, start in enumerate(range(0, reps, block_size))]


def _draw_differences(spec: GeneratorSpec, block: int, rows: int) -> Tuple[np.ndarray, np.ndarray]:
    """生成一个块的鞅差与条件方差 E[ξ(i)² | F(i-1)]"""
    rng = block_generator(spec.seed, STREAM_DIFFERENCES, block)
    n = spec.n

    if spec.family == 'rademacher':
        xi = rng.integers(0, 2, size=(rows, n)).astype(np.float64) * 2.0 - 1.0
        return xi, np.ones((rows, n))

    if spec.family == 'gaussian':
        sigma = np.sqrt(spec.sigma2)
        xi = rng.standard_normal((rows, n)) * sigma
        return xi, np.broadcast_to(spec.sigma2, (rows, n)).copy()

    if spec.family == 'two_point_asymmetric':
        a, b = spec.asymmetry
        up = rng.random((rows, n)) < b / (a + b)
        xi = np.where(up, a, -b)
        return xi, np.full((rows, n), a * b)

    if spec.family == 'predictable_variance':
        kappa = spec.feedback
        z = rng.standard_normal((rows, n))
        xi = np.empty((rows, n))
        cond = np.empty((rows, n))
        cond[:, 0] = 1.0
        xi[:, 0] = z[:, 0]
        for i in range(1, n):
            cond[:, i] = (1 - kappa) + kappa * xi[:, i - 1] ** 2
            xi[:, i] = np.sqrt(cond[:, i]) * z[:, i]
        return xi, cond

    # dyadic_embedded: ξ(m) = S(m+1)(x) - S(m)(x), x ~ U(0,1)
    p = int(spec.dyadic_p)
    x = rng.random(rows)
    xi = np.empty((rows, n))
    cond = np.empty((rows, n))
    offsets = np.arange(1 << p, dtype=float)
    h = 1.0
    current = np.zeros(rows)
    for m in range(n):
        child_h = h / (1 << p)
        parent_a = np.floor(x / h) * h
        children = cell_average(parent_a[:, None] + offsets[None, :] * child_h, child_h)
        nxt = cell_average(np.floor(x / child_h) * child_h, child_h)
        xi[:, m] = nxt - current
        cond[:, m] = np.mean(children ** 2, axis=1) - current ** 2
        current = nxt
        h = child_h
    return xi, np.maximum(cond, 0.0)


def _draw_multipliers(mult: MultiplierSpec, xi: np.ndarray, seed: int, block: int) -> np.ndarray:
    """由严格前缀计算乘子, b(i) 只依赖 ξ(1..i-1)"""
    rows, n = xi.shape
    if mult.family == 'constant':
        return np.full((rows, n), float(mult.V))
    if mult.family == 'deterministic_sequence':
        seq = np.asarray(mult.sequence, dtype=float)
        if seq.size < n:
            raise DomainError(f"确定性乘子序列长度 {seq.size} < n={n}")
        return np.broadcast_to(seq[:n], (rows, n)).copy()
    if mult.family == 'gaussian_predictable':
        rho = np.sqrt(_positive_vector(mult.variances, n, 'ρ²'))
        rng = block_generator(seed, STREAM_MULTIPLIERS, block)
        return rng.standard_normal((rows, n)) * rho

    previous = np.zeros((rows, n))
    if n > 1:
        previous[:, 1:] = np.cumsum(xi[:, :-1], axis=1)
    if mult.family == 'sign_of_past':
        return np.where(previous >= 0, 1.0, -1.0)
    return np.clip(previous, -mult.V, mult.V)


@dataclass(eq=False)
class PathBatch:
    """模拟路径批: reps × n 的鞅差、乘子与条件方差"""
    xi: np.ndarray
    cond_var: np.ndarray
    spec: GeneratorSpec
    b: Optional[np.ndarray] = None
    multiplier: Optional[MultiplierSpec] = None
    block_size: int = Settings.BLOCK_SIZE

    @property
    def reps(self) -> int:
        return int(self.xi.shape[0])

    @property
    def n(self) -> int:
        return int(self.xi.shape[1])

    @property
    def S(self) -> np.ndarray:
        return np.cumsum(self.xi, axis=1)

    @property
    def W(self) -> np.ndarray:
        if self.b is None:
            return self.S
        return np.cumsum(self.b * self.xi, axis=1)

    def terminal(self, target: str = 'S') -> np.ndarray:
        """n^{-1/2} S(n) 或 n^{-1/2} W(n)"""
        if target not in ('S', 'W'):
            raise DomainError(f"目标必须是 S 或 W, 当前 {target}")
        path = self.S if target == 'S' else self.W
        return path[:, -1] / math.sqrt(self.n)

    @property
    def lineage(self) -> Dict[str, Any]:
        return {
            'seed': self.spec.seed,
            'generator': self.spec.family,
            'n': self.n,
            'reps': self.reps,
            'block_size': self.block_size,
            'multiplier': self.multiplier.label if self.multiplier else None,
        }

    def to_sample_matrix(self, kind: str = 'xi') -> SampleMatrix:
        data = {'xi': self.xi, 'b': self.b, 'cond_var': self.cond_var}.get(kind)
        if data is None:
            raise DomainError(f"路径批中没有 {kind}")
        return SampleMatrix(data, seed=self.spec.seed, generator=f"{self.spec.family}:{kind}")


def generate(spec: GeneratorSpec, threads: int = 1, block_size: int = Settings.BLOCK_SIZE) -> PathBatch:
    """按固定块生成, 结果与线程数无关"""
    blocks = _blocks(spec.reps, block_size)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        parts = list(executor.map(lambda blk: _draw_differences(spec, blk[0], blk[2] - blk[1]), blocks))
    xi = np.vstack([p[0] for p in parts])
    cond = np.vstack([p[1] for p in parts])
    logger.debug(f"🎲 生成 {spec.family}: n={spec.n}, reps={spec.reps}, 块数={len(blocks)}")
    return PathBatch(xi=xi, cond_var=cond, spec=spec, block_size=block_size)


def attach_multipliers(batch: PathBatch, mult: MultiplierSpec, threads: int = 1) -> PathBatch:
    """附加可料乘子并得到 W(n)"""
    validate_gaussian_pair(batch.spec, mult)
    blocks = _blocks(batch.reps, batch.block_size)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        parts = list(executor.map(
            lambda blk: _draw_multipliers(mult, batch.xi[blk[1]:blk[2]], batch.spec.seed, blk[0]), blocks))
    return replace(batch, b=np.vstack(parts), multiplier=mult)


def _bootstrap_halfwidths(values: np.ndarray, p_grid: np.ndarray, seed: int, resamples: int,
                          z: float) -> np.ndarray:
    rng = block_generator(seed, STREAM_BOOTSTRAP, 0)
    x = np.abs(values)
    estimates = np.empty((resamples, p_grid.size))
    for r in range(resamples):
        sample = x[rng.integers(0, x.size, x.size)]
        top = float(np.max(sample)) or 1.0
        estimates[r] = top * np.mean((sample[:, None] / top) ** p_grid[None, :], axis=0) ** (1.0 / p_grid)
    return z * np.std(estimates, axis=0, ddof=1)


def empirical_norms(batch: PathBatch, p_grid, bootstrap: int = Settings.BOOTSTRAP_RESAMPLES,
                    z: float = Settings.CONFIDENCE_Z) -> Dict[str, MomentCurve]:
    """n^{-1/2} S(n) 与 n^{-1/2} W(n) 的经验矩曲线"""
    p_grid = np.asarray(p_grid, dtype=float)
    curves = {}
    for target in ('S', 'W'):
        values = batch.terminal(target)
        curve = empirical_moment_curve(values, p_grid, z=z)
        if bootstrap > 0 and curve.halfwidths is not None:
            boot = _bootstrap_halfwidths(values, p_grid, batch.spec.seed, bootstrap, z)
            curve.halfwidths = np.maximum(curve.halfwidths, boot)
        curves[target] = curve
    return curves


@dataclass(eq=False)
class TailEstimate:
    """P(|X| > u) 的经验估计与 Wilson 区间"""
    u: np.ndarray
    survival: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    reps: int
    null_atom: float
    resolvable: np.ndarray
    target: str = 'W'

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'u': self.u, 'survival': self.survival, 'lower': self.lower,
            'upper': self.upper, 'resolvable': self.resolvable,
        })


def wilson_interval(successes: np.ndarray, trials: int, z: float = Settings.CONFIDENCE_Z):
    """Wilson 得分区间"""
    phat = np.asarray(successes, dtype=float) / trials
    denom = 1 + z ** 2 / trials
    center = (phat + z ** 2 / (2 * trials)) / denom
    half = z * np.sqrt(phat * (1 - phat) / trials + z ** 2 / (4 * trials ** 2)) / denom
    return np.clip(center - half, 0.0, 1.0), np.clip(center + half, 0.0, 1.0)


def tail_from_values(values: np.ndarray, u_grid, target: str = 'W',
                     z: float = Settings.CONFIDENCE_Z) -> TailEstimate:
    """由终值样本估计尾部"""
    x = np.sort(np.abs(np.asarray(values, dtype=float)))
    u = np.asarray(u_grid, dtype=float)
    reps = x.size
    if reps < Settings.MIN_REPS_FOR_TAIL:
        logger.warning(f"⚠️ 尾部估计只有 {reps} 个重复, 少于 {Settings.MIN_REPS_FOR_TAIL}")

    exceed = reps - np.searchsorted(x, u, side='right')
    survival = exceed / reps
    lower, upper = wilson_interval(exceed, reps, z)
    null_atom = float(np.mean(x == 0.0))
    resolvable = survival >= 10.0 / reps
    if not np.all(resolvable):
        logger.warning(f"⚠️ u 网格超出可分辨分位数, {int(np.sum(~resolvable))} 个点的生存概率 < 10/reps")
    return TailEstimate(u, survival, lower, upper, reps, null_atom, resolvable, target)


def empirical_tail(batch: PathBatch, u_grid, target: str = 'W') -> TailEstimate:
    """P̂(|n^{-1/2} W(n)| > u) 及其 Wilson 区间"""
    return tail_from_values(batch.terminal(target), u_grid, target)


def fit_tail_decay(tail: TailEstimate) -> Dict[str, Any]:
    """-log 尾部对 u 与 √u 的最小二乘拟合, 附 R²"""
    keep = tail.resolvable & (tail.survival > 0) & (tail.u > 0)
    if int(np.sum(keep)) < 3:
        raise DomainError("可分辨的尾部点少于 3 个, 无法拟合")
    u = tail.u[keep]
    y = -np.log(tail.survival[keep])
    fits = {}
    for name, x in (('linear', u), ('sqrt', np.sqrt(u))):
        result = stats.linregress(x, y)
        fits[name] = {'rate': float(result.slope), 'intercept': float(result.intercept),
                      'r2': float(result.rvalue ** 2)}
    fits['points'] = int(np.sum(keep))
    return fits


def adjudicate_terminal(values: np.ndarray, bound_value: float, p: float, n: int,
                        generator: str = '', seed: Optional[int] = None, target: str = 'S',
                        multiplier: str = '', quadruple=None) -> BoundReport:
    """用终值样本判定一个界"""
    curve = empirical_moment_curve(values, [p])
    empirical = float(curve.values[0])
    halfwidth = float(curve.halfwidths[0]) if curve.halfwidths is not None else float('nan')
    verdict = adjudicate_values(bound_value, empirical, halfwidth)
    return BoundReport(bound=float(bound_value), empirical=empirical, halfwidth=halfwidth,
                       verdict=verdict, p=float(p), n=int(n), generator=generator, seed=seed,
                       target=target, multiplier=multiplier, quadruple=quadruple)


def adjudicate(batch: PathBatch, bound_value: float, p: float, target: str = 'S',
               quadruple=None) -> BoundReport:
    """比较经验 p-范数与理论界, 超出 3 个半宽才算违反"""
    return adjudicate_terminal(batch.terminal(target), bound_value, p, batch.n,
                               generator=batch.spec.family, seed=batch.spec.seed, target=target,
                               multiplier=batch.multiplier.label if batch.multiplier else '',
                               quadruple=quadruple)


def conditional_square_table(batch: PathBatch, p_grid) -> MomentTable:
    """|E(ξ²(i) | F(i-1))|_p 逐指标的矩表"""
    curves = [empirical_moment_curve(batch.cond_var[:, i], p_grid) for i in range(batch.n)]
    return MomentTable.from_curves(curves, provenance='mc')


def martingale_check(batch: PathBatch, index: int, z: float = Settings.CONFIDENCE_Z) -> pd.DataFrame:
    """按过去的粗特征 (S(i-1) 的符号与大小) 分箱, 计算 ξ(i) 的条件均值"""
    if not 0 <= index < batch.n:
        raise DomainError(f"指标 {index} 超出 0..{batch.n - 1}")
    current = batch.xi[:, index]
    if index == 0:
        bins = np.full(batch.reps, 'all', dtype=object)
    else:
        previous = batch.S[:, index - 1]
        sign = np.where(previous > 0, 'pos', np.where(previous < 0, 'neg', 'zero'))
        size = np.where(np.abs(previous) > np.median(np.abs(previous)), 'large', 'small')
        bins = np.char.add(np.char.add(sign.astype(str), ':'), size.astype(str))

    frame = pd.DataFrame({'bin': bins, 'xi': current})
    grouped = frame.groupby('bin')['xi'].agg(['count', 'mean', 'std']).reset_index()
    grouped['std'] = grouped['std'].fillna(0.0)
    grouped['halfwidth'] = z * grouped['std'] / np.sqrt(grouped['count'])
    return grouped


def lag_correlation(batch: PathBatch, lag: int = 1, squared: bool = False) -> float:
    """ξ (或 ξ²) 的滞后相关系数, 在所有重复与指标上汇总"""
    x = batch.xi ** 2 if squared else batch.xi
    if lag < 1 or lag >= batch.n:
        raise DomainError(f"滞后 {lag} 超出范围")
    return float(np.corrcoef(x[:, :-lag].ravel(), x[:, lag:].ravel())[0, 1])


# ---- 精确矩表 ----

def exact_xi_table(spec: GeneratorSpec, p_grid) -> Optional[MomentTable]:
    """分布已知的生成器的精确 |ξ(i)|_p 表, 未知时返回 None"""
    p_grid = np.asarray(p_grid, dtype=float)
    n = spec.n
    if spec.family == 'rademacher':
        return MomentTable.constant(n, p_grid, 1.0)
    if spec.family == 'gaussian':
        unit = np.exp(gaussian_log_abs_moment(p_grid) / p_grid)
        return MomentTable(p_grid, np.sqrt(spec.sigma2)[:, None] * unit[None, :])
    if spec.family == 'two_point_asymmetric':
        a, b = spec.asymmetry
        row = ((a ** p_grid) * b / (a + b) + (b ** p_grid) * a / (a + b)) ** (1.0 / p_grid)
        return MomentTable(p_grid, np.tile(row, (n, 1)), sup_norms=np.full(n, max(a, b)))
    return None


def exact_b_table(mult: MultiplierSpec, n: int, p_grid) -> Optional[MomentTable]:
    """分布已知的乘子族的精确 |b(i)|_p 表, 未知时返回 None"""
    p_grid = np.asarray(p_grid, dtype=float)
    if mult.family == 'constant':
        return MomentTable.constant(n, p_grid, mult.V)
    if mult.family == 'sign_of_past':
        return MomentTable.constant(n, p_grid, 1.0)
    if mult.family == 'deterministic_sequence':
        seq = np.abs(np.asarray(mult.sequence, dtype=float)[:n])
        return MomentTable(p_grid, np.tile(seq[:, None], (1, p_grid.size)), sup_norms=seq)
    if mult.family == 'gaussian_predictable':
        rho = np.sqrt(_positive_vector(mult.variances, n, 'ρ²'))
        unit = np.exp(gaussian_log_abs_moment(p_grid) / p_grid)
        return MomentTable(p_grid, rho[:, None] * unit[None, :])
    return None


# ---- 流式汇总 ----

@dataclass(eq=False)
class BatchSummary:
    """大批量模拟的流式汇总: 终值样本与逐指标的经验矩表"""
    spec: GeneratorSpec
    p_grid: np.ndarray
    s_terminal: np.ndarray
    w_terminal: Dict[str, np.ndarray] = field(default_factory=dict)
    xi_table: Optional[MomentTable] = None
    b_tables: Dict[str, Optional[MomentTable]] = field(default_factory=dict)
    multipliers: Dict[str, MultiplierSpec] = field(default_factory=dict)


def _summarize_block(spec: GeneratorSpec, mults: Sequence[MultiplierSpec], blk: Tuple[int, int, int],
                     p_grid: np.ndarray, need_xi: bool, need_b: Sequence[bool]) -> Dict[str, Any]:
    block, start, stop = blk
    xi, _ = _draw_differences(spec, block, stop - start)
    root = math.sqrt(spec.n)
    out: Dict[str, Any] = {'s': np.cumsum(xi, axis=1)[:, -1] / root, 'w': [], 'b_sums': []}
    abs_xi = np.abs(xi)
    out['xi_sums'] = np.vstack([np.sum(abs_xi ** p, axis=0) for p in p_grid]) if need_xi else None
    for mult, need in zip(mults, need_b):
        b = _draw_multipliers(mult, xi, spec.seed, block)
        out['w'].append(np.cumsum(b * xi, axis=1)[:, -1] / root)
        if need:
            abs_b = np.abs(b)
            out['b_sums'].append(np.vstack([np.sum(abs_b ** p, axis=0) for p in p_grid]))
        else:
            out['b_sums'].append(None)
    return out


def summarize(spec: GeneratorSpec, mults: Sequence[MultiplierSpec], p_grid,
              threads: int = 1, block_size: int = Settings.BLOCK_SIZE) -> BatchSummary:
    """逐块生成并按块顺序归并, 不保留完整的 reps × n 矩阵"""
    p_grid = np.asarray(p_grid, dtype=float)
    for mult in mults:
        validate_gaussian_pair(spec, mult)
    need_xi = exact_xi_table(spec, p_grid) is None
    need_b = [exact_b_table(m, spec.n, p_grid) is None for m in mults]

    blocks = _blocks(spec.reps, block_size)
    s_parts: List[np.ndarray] = []
    w_parts: List[List[np.ndarray]] = [[] for _ in mults]
    xi_sums = np.zeros((p_grid.size, spec.n)) if need_xi else None
    b_sums = [np.zeros((p_grid.size, spec.n)) if need else None for need in need_b]

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        results = executor.map(lambda blk: _summarize_block(spec, mults, blk, p_grid, need_xi, need_b), blocks)
        for result in results:
            s_parts.append(result['s'])
            if need_xi:
                xi_sums += result['xi_sums']
            for k in range(len(mults)):
                w_parts[k].append(result['w'][k])
                if need_b[k]:
                    b_sums[k] += result['b_sums'][k]

    summary = BatchSummary(spec=spec, p_grid=p_grid, s_terminal=np.concatenate(s_parts))
    summary.xi_table = exact_xi_table(spec, p_grid)
    if need_xi:
        summary.xi_table = table_from_power_sums(p_grid, xi_sums, spec.reps)
    for k, mult in enumerate(mults):
        summary.multipliers[mult.label] = mult
        summary.w_terminal[mult.label] = np.concatenate(w_parts[k])
        table = exact_b_table(mult, spec.n, p_grid)
        if need_b[k]:
            # 截断乘子的本性上确界以 V 为上界
            sup = np.full(spec.n, float(mult.V)) if mult.family == 'clamped_running_sum' else None
            table = table_from_power_sums(p_grid, b_sums[k], spec.reps, sup_norms=sup)
        summary.b_tables[mult.label] = table

    logger.info(f"📊 汇总完成 {spec.family}: n={spec.n}, reps={spec.reps}, 乘子族={len(mults)}")
    return summary
