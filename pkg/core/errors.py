#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
异常定义
"""


class ToolkitError(Exception):
    """工具包基础异常"""

    def to_dict(self) -> dict:
        """转换为可序列化的错误描述"""
        return {'error': type(self).__name__, 'message': str(self)}


class DomainError(ToolkitError, ValueError):
    """参数超出定义域或前置条件不满足"""


class ResourceLimitError(ToolkitError):
    """超出配置的资源预算"""

    def __init__(self, message: str, limit_name: str = "", limit_value=None):
        super().__init__(message)
        self.limit_name = limit_name
        self.limit_value = limit_value

    def to_dict(self) -> dict:
        payload = super().to_dict()
        payload['limit'] = self.limit_name
        payload['limit_value'] = self.limit_value
        return payload


class ArtifactExistsError(ToolkitError):
    """产物已存在且未允许覆盖"""

    def __init__(self, path: str):
        super().__init__(f"产物已存在, 使用 --overwrite 覆盖: {path}")
        self.path = path

    def to_dict(self) -> dict:
        payload = super().to_dict()
        payload['path'] = self.path
        return payload
