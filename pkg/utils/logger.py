#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
日志系统配置
"""

import sys
from pathlib import Path
from typing import Optional

from loguru import logger

from config.settings import Settings


class LoggerConfig:
    """日志配置类"""

    def __init__(self, level: Optional[str] = None, log_dir: Optional[str] = None,
                 file_sinks: bool = True):
        self.level = (level or Settings.LOG_LEVEL).upper()
        self.log_dir = Path(log_dir or Settings.LOG_DIR)

        # 移除默认处理器
        logger.remove()

        self._setup_console_logger()
        if file_sinks:
            self.log_dir.mkdir(parents=True, exist_ok=True)
            self._setup_file_logger()
            self._setup_error_logger()
            self._setup_verification_logger()

    def _setup_console_logger(self):
        """配置控制台日志 (输出到stderr, stdout留给结果)"""
        logger.add(
            sys.stderr,
            format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> | <level>{message}</level>",
            level=self.level,
            colorize=True,
            backtrace=True,
            diagnose=False
        )

    def _setup_file_logger(self):
        """配置文件日志"""
        logger.add(
            self.log_dir / "mtb_{time:YYYY-MM-DD}.log",
            format="{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {name}:{function}:{line} | {message}",
            level="DEBUG",
            rotation="1 day",
            retention="30 days",
            encoding="utf-8"
        )

    def _setup_error_logger(self):
        """配置错误日志"""
        logger.add(
            self.log_dir / "error_{time:YYYY-MM-DD}.log",
            format="{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {name}:{function}:{line} | {message}\n{exception}",
            level="ERROR",
            rotation="1 day",
            retention="90 days",
            encoding="utf-8",
            backtrace=True,
            diagnose=False
        )

    def _setup_verification_logger(self):
        """配置验证日志"""
        logger.add(
            self.log_dir / "verification_{time:YYYY-MM-DD}.log",
            format="{time:YYYY-MM-DD HH:mm:ss.SSS} | {message}",
            level="INFO",
            rotation="1 day",
            retention="365 days",
            encoding="utf-8",
            filter=lambda record: "VERIFY" in record["extra"]
        )


class VerificationLogger:
    """验证专用日志器"""

    def __init__(self, run_name: str = ""):
        self.run_name = run_name
        self.logger = logger.bind(VERIFY=True, run=run_name)

    def adjudication(self, generator: str, target: str, p: float, n: int, bound: float,
                     empirical: float, halfwidth: float, verdict: str):
        """记录一次判定"""
        log = self.logger.warning if verdict == 'violated' else self.logger.info
        log(
            f"ADJUDICATION | {generator} | {target} | p={p:g} | n={n} | bound={bound:.6g} | "
            f"empirical={empirical:.6g} | halfwidth={halfwidth:.3g} | {verdict.upper()}"
        )

    def matrix_summary(self, total: int, holds: int, violated: int, inconclusive: int):
        """记录验证矩阵汇总"""
        self.logger.info(
            f"MATRIX_SUMMARY | {self.run_name} | total={total} | holds={holds} | "
            f"violated={violated} | inconclusive={inconclusive}"
        )


class AuditLogger:
    """审计日志器"""

    def __init__(self):
        self.logger = logger.bind(AUDIT=True)

    def run_start(self, subcommand: str, config: dict):
        """记录运行开始"""
        self.logger.info(f"RUN_START | {subcommand} | Config: {config}")

    def run_stop(self, subcommand: str, exit_code: int):
        """记录运行结束"""
        self.logger.info(f"RUN_STOP | {subcommand} | Exit: {exit_code}")

    def artifact_written(self, path: str):
        """记录写出的产物"""
        self.logger.info(f"ARTIFACT | {path}")


def setup_logging(level: Optional[str] = None, log_dir: Optional[str] = None,
                  file_sinks: bool = True) -> LoggerConfig:
    """初始化日志配置"""
    return LoggerConfig(level=level, log_dir=log_dir, file_sinks=file_sinks)


def get_verification_logger(run_name: str = "") -> VerificationLogger:
    """获取验证日志器"""
    return VerificationLogger(run_name)


def get_audit_logger() -> AuditLogger:
    """获取审计日志器"""
    return AuditLogger()
