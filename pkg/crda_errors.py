#!/usr/bin/env python3
"""
CRDA 异常类型 - 模块内抛出，工作流统一捕获并映射为退出码
"""

from numpy.linalg import LinAlgError


class CrdaError(Exception):
    """所有CRDA错误的基类"""

    exit_code = 1


class UsageError(CrdaError, ValueError):
    """参数或配置组合不合法"""

    exit_code = 2


class DataError(CrdaError, ValueError):
    """数据文件、维度或超参数取值错误"""

    exit_code = 3


class NumericError(CrdaError, ArithmeticError):
    """数值计算失败：秩为零、非有限值、非正定块"""

    exit_code = 4


def exit_code_for(error: BaseException) -> int:
    """根据异常类型返回进程退出码"""
    if isinstance(error, CrdaError):
        return error.exit_code
    if isinstance(error, OSError):
        # 缺失文件、不可写的输出目录
        return DataError.exit_code
    if isinstance(error, LinAlgError):
        return NumericError.exit_code
    return 1
