#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
产物存储模块
CSV / JSON / 二进制+JSON附属文件, 输出目录下默认不覆盖已有文件
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
from loguru import logger

from config.settings import Settings
from core.errors import ArtifactExistsError, DomainError
from core.gls import MomentCurve, PsiFunction
from core.mixed_norms import MomentTable, SampleMatrix
from utils.logger import get_audit_logger

FLOAT_FORMAT = '%.15g'


def to_jsonable(value: Any) -> Any:
    """递归转换为可确定性序列化的对象, 非有限浮点写成字符串"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    return value


def dumps(payload: Any) -> str:
    """确定性JSON文本 (键排序)"""
    return json.dumps(to_jsonable(payload), sort_keys=True, indent=2, ensure_ascii=False) + '\n'


class ArtifactStore:
    """输出目录上的产物存储"""

    def __init__(self, output_dir: Optional[str] = None, overwrite: bool = False):
        self.output_dir = Path(output_dir or Settings.OUTPUT_DIR)
        self.overwrite = overwrite
        self.audit = get_audit_logger()
        self.written: List[Path] = []

    def _target(self, name: str) -> Path:
        path = self.output_dir / name
        if path.exists() and not self.overwrite:
            raise ArtifactExistsError(str(path))
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def _record(self, path: Path) -> Path:
        self.written.append(path)
        self.audit.artifact_written(str(path))
        return path

    # ---- 写出 ----

    def write_json(self, name: str, payload: Any) -> Path:
        path = self._target(name)
        path.write_text(dumps(payload), encoding='utf-8')
        return self._record(path)

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        path = self._target(name)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        return self._record(path)

    def write_curve(self, name: str, curve: MomentCurve) -> Path:
        """MomentCurve CSV: p,value 按 p 升序"""
        frame = pd.DataFrame({'p': curve.p_grid, 'value': curve.values}).sort_values('p')
        return self.write_frame(name, frame)

    def write_table(self, name: str, table: MomentTable) -> Path:
        """MomentTable CSV: i,p,value; 本性上确界写成 p=inf 的行"""
        frame = table.to_frame()
        if table.sup_norms is not None:
            sup = pd.DataFrame({'i': np.arange(1, table.n + 1), 'p': math.inf,
                                'value': table.sup_norms})
            frame = pd.concat([frame, sup], ignore_index=True)
        return self.write_frame(name, frame)

    def write_psi(self, name: str, psi: PsiFunction) -> Path:
        return self.write_json(name, psi.to_dict())

    def write_samples(self, name: str, matrix: SampleMatrix) -> Path:
        """行主序 64 位浮点二进制 + JSON 附属文件"""
        path = self._target(name)
        sidecar = self._target(name + '.json')
        path.write_bytes(np.ascontiguousarray(matrix.samples, dtype='<f8').tobytes(order='C'))
        sidecar.write_text(dumps(matrix.sidecar()), encoding='utf-8')
        self._record(sidecar)
        return self._record(path)

    def write_report(self, name: str, report: Union[Dict[str, Any], Any]) -> Path:
        payload = report.to_dict() if hasattr(report, 'to_dict') else report
        return self.write_json(name, payload)

    # ---- 清单 ----

    def collect_summary(self, name: str = 'summary.json') -> Path:
        """汇总输出目录中的 JSON/CSV 产物为一个清单"""
        if not self.output_dir.is_dir():
            raise DomainError(f"输出目录不存在: {self.output_dir}")
        entries = []
        for path in sorted(self.output_dir.rglob('*')):
            if not path.is_file() or path.name == name:
                continue
            rel = path.relative_to(self.output_dir).as_posix()
            if path.suffix == '.json':
                entries.append({'path': rel, 'kind': 'json', 'content': read_json(path)})
            elif path.suffix == '.csv':
                frame = pd.read_csv(path)
                entries.append({'path': rel, 'kind': 'csv', 'rows': int(len(frame)),
                                'columns': list(frame.columns)})
        logger.info(f"📊 汇总 {len(entries)} 个产物")
        return self.write_json(name, {'artifacts': entries})


# ---- 读入 ----

def read_json(path: Union[str, Path]) -> Any:
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def read_curve(path: Union[str, Path], provenance: str = 'file') -> MomentCurve:
    frame = pd.read_csv(path)
    missing = {'p', 'value'} - set(frame.columns)
    if missing:
        raise DomainError(f"矩曲线缺少列: {sorted(missing)}")
    frame = frame.sort_values('p')
    return MomentCurve(frame['p'].to_numpy(dtype=float), frame['value'].to_numpy(dtype=float),
                       provenance=provenance)


def read_table(path: Union[str, Path]) -> MomentTable:
    frame = pd.read_csv(path)
    if 'p' not in frame.columns:
        raise DomainError("矩表缺少列: ['p']")
    sup_rows = frame[np.isinf(frame['p'].to_numpy(dtype=float))]
    table = MomentTable.from_frame(frame.drop(sup_rows.index))
    sup = sup_rows.sort_values('i')['value'].to_numpy(dtype=float) if len(sup_rows) else None
    return MomentTable(table.p_grid, table.values, sup_norms=sup, provenance='file')


def read_psi(path: Union[str, Path]) -> PsiFunction:
    return PsiFunction.from_dict(read_json(path))


def read_samples(path: Union[str, Path]) -> SampleMatrix:
    meta = read_json(str(path) + '.json')
    flat = np.fromfile(path, dtype='<f8')
    expected = int(meta['n']) * int(meta['reps'])
    if flat.size != expected:
        raise DomainError(f"样本文件长度 {flat.size} 与附属文件声明的 {expected} 不一致")
    return SampleMatrix(flat.reshape(int(meta['reps']), int(meta['n'])),
                        seed=meta.get('seed'), generator=meta.get('generator', ''))
