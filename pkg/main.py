#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
鞅矩界工具包 (MTB) - 命令行入口
鞅与鞅变换的矩界、尾部界、精确性常数、熵积分判别与蒙特卡洛验证
"""

import argparse
import asyncio
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from config.settings import Settings
from core.bounds import (HolderQuadruple, bound_conditional_uniform, bound_martingale,
                         bound_quadratic_characteristic, bound_transform, legacy_coefficient, mp_bracket,
                         optimize_quadruple, tau_function, theta_function)
from core.entropy import (DistanceMatrix, EntropyModel, EntropyProfile, covering_entropy, criterion_report,
                          fit_entropy_model, integral_dudley, integral_gls, integral_pisier, rho_distance)
from core.errors import DomainError, ToolkitError
from core.gls import PsiFunction, tail_bound
from core.mixed_norms import MomentTable
from core.sharpness import constant_C, lower_bound_ratio, zeta
from core.verification_engine import VerificationEngine, run_tail_pipeline
from data.simulate import (GeneratorSpec, MultiplierSpec, adjudicate, attach_multipliers,
                           empirical_norms, exact_xi_table, generate)
from utils.logger import get_audit_logger, setup_logging
from utils.storage import ArtifactStore, dumps, read_psi, read_table

EXIT_OK = 0
EXIT_VIOLATED = 1
EXIT_DOMAIN = 2
EXIT_USAGE = 64

STOCHASTIC_COMMANDS = ('simulate', 'verify')
SHARPNESS_COLUMNS = ['p', 'M', 'numerator', 'denominator', 'ratio', 'limit_formula',
                     'series_prefix', 'series_tail_bound']


class ToolkitArgumentParser(argparse.ArgumentParser):
    """用法错误以退出码 64 结束"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    """一次运行的配置: 配置文件与命令行参数合并后的结果"""
    subcommand: str
    output_dir: str
    overwrite: bool = False
    seed: Optional[int] = None
    threads: int = Settings.DEFAULT_THREADS
    log_level: str = Settings.LOG_LEVEL
    options: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> 'RunConfig':
        flags = {k: v for k, v in vars(args).items() if k not in ('command', 'config', 'handler')}
        file_config = Settings.load_run_config(args.config) if args.config else {}
        merged = Settings.merge(file_config, flags)
        return cls(
            subcommand=args.command,
            output_dir=merged.pop('output_dir', None) or Settings.OUTPUT_DIR,
            overwrite=bool(merged.pop('overwrite', False)),
            seed=merged.pop('seed', None),
            threads=int(merged.pop('threads', None) or Settings.DEFAULT_THREADS),
            log_level=merged.pop('log_level', None) or Settings.LOG_LEVEL,
            options=merged,
        )

    def get(self, key: str, default: Any = None) -> Any:
        value = self.options.get(key)
        return default if value is None else value

    def require_seed(self) -> int:
        if self.seed is None:
            raise DomainError(f"{self.subcommand} 是随机子命令, 必须给出 --seed")
        return int(self.seed)

    def store(self) -> ArtifactStore:
        return ArtifactStore(self.output_dir, overwrite=self.overwrite)

    def to_dict(self) -> Dict[str, Any]:
        return {'subcommand': self.subcommand, 'output_dir': self.output_dir,
                'overwrite': self.overwrite, 'seed': self.seed, 'threads': self.threads,
                'options': self.options}


def _number(text) -> float:
    """解析数值, 允许 inf"""
    if isinstance(text, (int, float)):
        return float(text)
    return math.inf if str(text).lower() in ('inf', '+inf', 'infinity') else float(text)


def _emit(payload: Any):
    sys.stdout.write(dumps(payload))


def _xi_table(cfg: RunConfig, key: str = 'xi_table') -> MomentTable:
    """从 CSV 读入矩表, 或由已知生成器给出精确矩表"""
    path = cfg.get(key)
    if path:
        return read_table(path)
    family = cfg.get('generator')
    if family is None:
        raise DomainError(f"需要 --{key.replace('_', '-')} 或 --generator")
    spec = GeneratorSpec(family, n=int(cfg.get('n', 16)), reps=2, seed=0)
    table = exact_xi_table(spec, Settings.default_p_grid())
    if table is None:
        raise DomainError(f"生成器 {family} 没有精确矩表, 请提供 CSV")
    return table


def _n(cfg: RunConfig, table: MomentTable) -> int:
    return int(cfg.get('n', table.n))


# ---- 子命令 ----

def cmd_bound_martingale(cfg: RunConfig) -> int:
    """鞅的矩界; 可附加条件一致有界与二次特征两种界"""
    has_xi = bool(cfg.get('xi_table') or cfg.get('generator'))
    q = cfg.get('conditional_q')
    cond = read_table(cfg.get('cond_table')) if cfg.get('cond_table') else None
    if not has_xi and q is None and cond is None:
        raise DomainError("需要 --xi-table / --generator, 或 --conditional-q / --cond-table")
    table = _xi_table(cfg) if has_xi else None
    c3 = float(cfg.get('c3', Settings.DEFAULT_C3))

    rows = []
    for p in cfg.get('p', [2.0]):
        low, high, ordered = mp_bracket(p)
        row = {'p': p, 'mp_bracket': [low, high], 'mp_bracket_ordered': ordered}
        if table is not None:
            n = _n(cfg, table)
            bound = bound_martingale(table, p, n)
            row.update({'n': n, 'bound': bound, 'legacy_bound': legacy_coefficient(p) * bound / (p - 1),
                        'provenance': table.provenance, 'tolerance': Settings.FORMULA_TOLERANCE})
        if q is not None:
            row['conditional_uniform'] = {'Q': float(q), 'bound': bound_conditional_uniform(float(q), p),
                                          'provenance': 'formula', 'tolerance': Settings.FORMULA_TOLERANCE}
        if cond is not None:
            n_cond = int(cfg.get('n', cond.n))
            row['quadratic_characteristic'] = {
                'c3': c3, 'n': n_cond, 'bound': bound_quadratic_characteristic(cond, p, c3, n_cond),
                'provenance': cond.provenance, 'tolerance': Settings.FORMULA_TOLERANCE}
        rows.append(row)
    cfg.store().write_json('bound_martingale.json', {'results': rows})
    _emit({'results': rows})
    return EXIT_OK


def _quadruple(values: List[str]) -> HolderQuadruple:
    return HolderQuadruple(*[_number(v) for v in values])


def cmd_bound_transform(cfg: RunConfig) -> int:
    b_table = read_table(cfg.get('b_table'))
    xi_table = _xi_table(cfg)
    n = _n(cfg, xi_table)
    quad = _quadruple(cfg.get('quad', ['inf', '1', 'inf', '1']))
    rows = [{'p': p, 'n': n, 'bound': bound_transform(b_table, xi_table, p, n, quad),
             'quadruple': quad.to_dict(), 'provenance': 'formula', 'tolerance': Settings.FORMULA_TOLERANCE}
            for p in cfg.get('p', [2.0])]
    cfg.store().write_json('bound_transform.json', {'results': rows})
    _emit({'results': rows})
    return EXIT_OK


def cmd_optimize_quad(cfg: RunConfig) -> int:
    b_table = read_table(cfg.get('b_table'))
    xi_table = _xi_table(cfg)
    n = _n(cfg, xi_table)
    rows = []
    for p in cfg.get('p', [2.0]):
        quad, value = optimize_quadruple(b_table, xi_table, p, n,
                                         grid_points=int(cfg.get('grid_points', Settings.QUADRUPLE_COARSE_GRID)),
                                         threads=cfg.threads)
        rows.append({'p': p, 'n': n, 'bound': value, 'quadruple': quad.to_dict(), 'provenance': 'formula',
                     'tolerance': Settings.QUADRUPLE_TIE_RTOL})
    cfg.store().write_json('optimize_quad.json', {'results': rows})
    _emit({'results': rows})
    return EXIT_OK


def cmd_theta(cfg: RunConfig) -> int:
    b_table = read_table(cfg.get('b_table'))
    xi_table = _xi_table(cfg)
    theta = theta_function(b_table, xi_table, _n(cfg, xi_table), threads=cfg.threads)
    cfg.store().write_psi('theta.json', theta)
    _emit({'psi': theta.to_dict(), 'provenance': 'formula', 'tolerance': Settings.QUADRUPLE_TIE_RTOL})
    return EXIT_OK


def cmd_tail(cfg: RunConfig) -> int:
    store = cfg.store()
    if cfg.get('pipeline'):
        seed = cfg.require_seed()
        result = run_tail_pipeline(seed, n=int(cfg.get('n', 16)), reps=int(cfg.get('reps', 1_000_000)),
                                   threads=cfg.threads)
        store.write_frame('tail_pipeline.csv', result['frame'])
        store.write_psi('theta.json', result['theta'])
        payload = {'dominated': result['dominated'], 'decay_fit': result['decay'],
                   'lineage': result['lineage'], 'provenance': {'bound': 'formula', 'empirical': 'mc'},
                   'tolerance': {'bound': Settings.TRANSFORM_TOLERANCE, 'confidence_z': Settings.CONFIDENCE_Z}}
        store.write_json('tail_pipeline.json', payload)
        _emit(payload)
        return EXIT_OK if result['dominated'] else EXIT_VIOLATED

    psi = read_psi(cfg.get('psi')) if cfg.get('psi') else PsiFunction.psi_sub2()
    norm = float(cfg.get('norm', 1.0))
    u_grid = cfg.get('u', [1.0, 2.0, 3.0, 4.0])
    frame = pd.DataFrame({'u': u_grid, 'bound': [tail_bound(psi, norm, float(u)) for u in u_grid]})
    store.write_frame('tail.csv', frame)
    _emit({'u': list(frame['u']), 'bound': list(frame['bound']), 'provenance': 'formula',
           'tolerance': Settings.TRANSFORM_TOLERANCE})
    return EXIT_OK


def cmd_sharpness(cfg: RunConfig) -> int:
    if cfg.get('constant_c'):
        print(f"{constant_C():.7f}")
        return EXIT_OK
    rows = []
    for p in cfg.get('p', [2, 3, 4]):
        ratio = lower_bound_ratio(int(p), M=cfg.get('M'), cell_budget=int(cfg.get('cell_budget', Settings.CELL_BUDGET)))
        rows.append({**ratio.to_dict(), 'provenance': 'quadrature', 'tolerance': Settings.QUADRATURE_TOLERANCE})
    frame = pd.DataFrame(rows)
    cfg.store().write_frame('sharpness.csv', frame[SHARPNESS_COLUMNS])
    _emit({'results': rows})
    return EXIT_OK


def cmd_zeta(cfg: RunConfig) -> int:
    print(f"{zeta(float(cfg.get('p', 2.0))):.7f}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    seed = cfg.require_seed()
    spec = GeneratorSpec(cfg.get('generator', 'rademacher'), n=int(cfg.get('n', 16)),
                         reps=int(cfg.get('reps', 10_000)), seed=seed)
    batch = generate(spec, threads=cfg.threads)
    if cfg.get('multiplier'):
        batch = attach_multipliers(batch, MultiplierSpec(cfg.get('multiplier'), V=float(cfg.get('V', 1.0))),
                                   threads=cfg.threads)
    p_values = [float(p) for p in cfg.get('p', [2.0, 4.0])]
    store = cfg.store()
    store.write_samples('xi.bin', batch.to_sample_matrix('xi'))
    curves = empirical_norms(batch, p_values)
    store.write_curve('norms_S.csv', curves['S'])
    store.write_curve('norms_W.csv', curves['W'])

    xi_table = exact_xi_table(spec, p_values)
    reports = []
    if xi_table is not None:
        for p in p_values:
            reports.append(adjudicate(batch, bound_martingale(xi_table, p, spec.n), p, 'S').to_dict())
    payload = {'lineage': batch.lineage, 'reports': reports}
    store.write_json('simulate.json', payload)
    _emit(payload)
    violated = any(r['verdict'] == 'violated' for r in reports)
    return EXIT_VIOLATED if violated else EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    seed = cfg.require_seed()
    preset = cfg.get('preset', 'default')
    overrides = {k: cfg.get(k) for k in ('reps', 'p_values', 'n_values')}
    engine = VerificationEngine(preset, seed=seed, threads=cfg.threads, overrides=overrides)
    report = asyncio.run(engine.run_matrix())
    cfg.store().write_report(f"verify_{preset}.json", report)
    _emit({**report.counts, 'errors': len(report.errors)})
    if report.any_violated:
        return EXIT_VIOLATED
    if report.incomplete:
        raise DomainError(f"验证矩阵不完整: {len(report.errors)} 个配置失败, "
                          f"{report.counts['total']} 项判定")
    return EXIT_OK


def _grouped_tables(path: str, keys: List[str]) -> Dict[Any, MomentTable]:
    """长格式 CSV (keys..., i, p, value) 按 keys 分组为矩表"""
    frame = pd.read_csv(path)
    missing = set(keys) - set(frame.columns)
    if missing:
        raise DomainError(f"{path} 缺少列: {sorted(missing)}")
    frame[keys] = frame[keys].astype(str)
    tables = {}
    for key, group in frame.groupby(keys):
        label = tuple(key) if len(keys) > 1 else (key[0] if isinstance(key, tuple) else key)
        tables[label] = MomentTable.from_frame(group[['i', 'p', 'value']])
    return tables


def _rho_distance(cfg: RunConfig) -> Tuple[DistanceMatrix, PsiFunction]:
    """参数鞅场: 各点的差分矩表给出 τ(p), 点对差分矩表给出 ρ 距离"""
    if not cfg.get('diff_table'):
        raise DomainError("--field-table 需要配合 --diff-table")
    fields = _grouped_tables(cfg.get('field_table'), ['v'])
    labels = list(fields)
    tau = tau_function([fields[v] for v in labels])
    diffs = _grouped_tables(cfg.get('diff_table'), ['a', 'b'])
    return rho_distance(labels, diffs, tau), tau


def _entropy_source(cfg: RunConfig) -> Tuple[EntropyProfile, Optional[DistanceMatrix], Optional[PsiFunction]]:
    eps_min = float(cfg.get('eps_min', 1e-3))
    eps_points = int(cfg.get('eps_points', 31))
    if cfg.get('field_table'):
        dmat, tau = _rho_distance(cfg)
        top = max(1.0, float(dmat.matrix.max()))
        profile = covering_entropy(dmat, np.geomspace(top, eps_min, eps_points))
        return profile.with_model(fit_entropy_model(profile)), dmat, tau
    if cfg.get('points'):
        points = pd.read_csv(cfg.get('points')).select_dtypes('number').to_numpy(dtype=float)
        profile = covering_entropy(points, np.geomspace(1.0, eps_min, eps_points))
        return profile.with_model(fit_entropy_model(profile)), None, None
    model = EntropyModel(cfg.get('family', 'log'), c=float(cfg.get('c', 0.0)),
                         k=float(cfg.get('k', 0.0)), s=float(cfg.get('s', 0.0)))
    return EntropyProfile.from_model(model), None, None


def cmd_entropy(cfg: RunConfig) -> int:
    source, dmat, tau = _entropy_source(cfg)
    criterion = cfg.get('criterion', 'dudley')
    if criterion == 'gls':
        # 鞅场的默认 ψ 是 τ
        psi = read_psi(cfg.get('psi')) if cfg.get('psi') else (tau or PsiFunction.psi_sub2())
        result = integral_gls(psi, source)
    elif criterion == 'pisier':
        result = integral_pisier(source, float(cfg.get('r', 2.0)))
    else:
        result = integral_dudley(source)

    store = cfg.store()
    store.write_frame('entropy_profile.csv', source.to_frame())
    if dmat is not None:
        frame = pd.DataFrame(dmat.matrix, columns=dmat.labels)
        frame.insert(0, 'label', dmat.labels)
        store.write_frame('rho_distance.csv', frame)
        store.write_psi('tau.json', tau)
    verdict = criterion_report(result, weak_compactness=bool(cfg.get('weak_compactness', False)))
    store.write_json('entropy_verdict.json', verdict)
    _emit(verdict)
    return EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    path = cfg.store().collect_summary()
    _emit({'summary': str(path)})
    return EXIT_OK


COMMANDS = {
    'bound-martingale': cmd_bound_martingale,
    'bound-transform': cmd_bound_transform,
    'optimize-quad': cmd_optimize_quad,
    'theta': cmd_theta,
    'tail': cmd_tail,
    'sharpness': cmd_sharpness,
    'zeta': cmd_zeta,
    'simulate': cmd_simulate,
    'verify': cmd_verify,
    'entropy': cmd_entropy,
    'report': cmd_report,
}


def build_argument_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', default=None, help='运行配置文件 (JSON 或 YAML 扁平映射)')
    common.add_argument('--output-dir', default=None, help='产物输出目录 (默认 MTB_OUTPUT_DIR 或 reports)')
    common.add_argument('--overwrite', action='store_true', default=None, help='允许覆盖已有产物')
    common.add_argument('--seed', type=int, default=None, help='随机种子 (随机子命令必需)')
    common.add_argument('--threads', type=int, default=None, help='工作线程上限, 不影响结果')
    common.add_argument('--log-level', default=None, help='日志级别')

    parser = ToolkitArgumentParser(prog='main.py', description='鞅矩界工具包')
    sub = parser.add_subparsers(dest='command', required=True)

    def table_args(p, b_table: bool):
        p.add_argument('--xi-table', default=None, help='|ξ(i)|_p 矩表 CSV (i,p,value)')
        p.add_argument('--generator', default=None, help='使用已知生成器的精确矩表')
        if b_table:
            p.add_argument('--b-table', required=True, help='|b(i)|_p 矩表 CSV (i,p,value)')
        p.add_argument('--n', type=int, default=None, help='使用前 n 个指标')

    p = sub.add_parser('bound-martingale', parents=[common], help='鞅的矩界')
    table_args(p, b_table=False)
    p.add_argument('--p', type=float, nargs='+', default=None)
    p.add_argument('--conditional-q', type=float, default=None, help='条件一致有界常数 Q')
    p.add_argument('--cond-table', default=None, help='|E(ξ²(i)|F(i-1))|_p 矩表 CSV (i,p,value)')
    p.add_argument('--c3', type=float, default=None, help='二次特征界的常数 c3')

    p = sub.add_parser('bound-transform', parents=[common], help='给定Hölder四元组的鞅变换界')
    table_args(p, b_table=True)
    p.add_argument('--p', type=float, nargs='+', default=None)
    p.add_argument('--quad', nargs=4, metavar=('ALPHA', 'BETA', 'LAMBDA', 'MU'), default=None)

    p = sub.add_parser('optimize-quad', parents=[common], help='最优Hölder四元组')
    table_args(p, b_table=True)
    p.add_argument('--p', type=float, nargs='+', default=None)
    p.add_argument('--grid-points', type=int, default=None)

    p = sub.add_parser('theta', parents=[common], help='θ(p) 生成函数')
    table_args(p, b_table=True)

    p = sub.add_parser('tail', parents=[common], help='指数尾部界')
    p.add_argument('--psi', default=None, help='ψ函数 JSON (默认 √p)')
    p.add_argument('--norm', type=float, default=None)
    p.add_argument('--u', type=float, nargs='+', default=None)
    p.add_argument('--pipeline', action='store_true', default=None, help='高斯差分 + 高斯乘子的尾部对比')
    p.add_argument('--n', type=int, default=None)
    p.add_argument('--reps', type=int, default=None)

    p = sub.add_parser('sharpness', parents=[common], help='精确性构造与常数 C')
    p.add_argument('--constant-c', action='store_true', default=None)
    p.add_argument('--p', type=int, nargs='+', default=None)
    p.add_argument('--M', type=int, default=None)
    p.add_argument('--cell-budget', type=int, default=None)

    p = sub.add_parser('zeta', parents=[common], help='Riemann ζ(p)')
    p.add_argument('--p', type=float, default=None)

    p = sub.add_parser('simulate', parents=[common], help='蒙特卡洛模拟')
    p.add_argument('--generator', default=None)
    p.add_argument('--multiplier', default=None)
    p.add_argument('--V', type=float, default=None)
    p.add_argument('--n', type=int, default=None)
    p.add_argument('--reps', type=int, default=None)
    p.add_argument('--p', type=float, nargs='+', default=None)

    p = sub.add_parser('verify', parents=[common], help='完整验证矩阵')
    p.add_argument('--preset', default=None, choices=sorted(Settings.VERIFY_PRESETS))
    p.add_argument('--reps', type=int, default=None)

    p = sub.add_parser('entropy', parents=[common], help='熵积分判别')
    p.add_argument('--criterion', default=None, choices=['gls', 'pisier', 'dudley'])
    p.add_argument('--points', default=None, help='点坐标 CSV')
    p.add_argument('--field-table', default=None, help='参数鞅场各点的差分矩表 CSV (v,i,p,value)')
    p.add_argument('--diff-table', default=None, help='点对差分矩表 CSV (a,b,i,p,value)')
    p.add_argument('--eps-min', type=float, default=None)
    p.add_argument('--eps-points', type=int, default=None)
    p.add_argument('--family', default=None, choices=['constant', 'log', 'power'])
    p.add_argument('--c', type=float, default=None)
    p.add_argument('--k', type=float, default=None)
    p.add_argument('--s', type=float, default=None)
    p.add_argument('--r', type=float, default=None)
    p.add_argument('--psi', default=None)
    p.add_argument('--weak-compactness', action='store_true', default=None)

    sub.add_parser('report', parents=[common], help='汇总输出目录中的产物')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """主函数, 返回退出码"""
    parser = build_argument_parser()
    args = parser.parse_args(argv)

    try:
        cfg = RunConfig.from_args(args)
    except (FileNotFoundError, ValueError) as e:
        sys.stderr.write(json.dumps({'error': type(e).__name__, 'message': str(e)}, ensure_ascii=False) + '\n')
        return EXIT_DOMAIN

    # 文件日志落在本次运行的输出目录下
    setup_logging(cfg.log_level, log_dir=str(Path(cfg.output_dir) / Settings.LOG_DIR),
                  file_sinks=cfg.subcommand in STOCHASTIC_COMMANDS)
    audit = get_audit_logger()
    audit.run_start(cfg.subcommand, cfg.to_dict())

    try:
        code = COMMANDS[cfg.subcommand](cfg)
    except ToolkitError as e:
        logger.error(f"❌ {cfg.subcommand} 失败: {e}")
        sys.stderr.write(json.dumps(e.to_dict(), ensure_ascii=False, default=str) + '\n')
        code = EXIT_DOMAIN
    except Exception:
        logger.exception(f"❌ {cfg.subcommand} 出现未预期的错误")
        raise

    audit.run_stop(cfg.subcommand, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
