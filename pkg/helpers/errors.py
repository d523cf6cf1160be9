"""
异常类型

每个异常携带 CLI 退出码:
    2 = 配置/校验错误, 3 = 共振 (谱不可分离), 4 = 不收敛, 5 = 硬界违反
"""

from typing import Optional


class PolyharmonicError(RuntimeError):
    """所有求解错误的基类"""

    exit_code: int = 1


class ValidationError(PolyharmonicError, ValueError):
    """参数或配置不满足约束"""

    exit_code = 2


class ParseError(PolyharmonicError):
    """配置文件语法错误 (带行列号)"""

    exit_code = 2

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (第 {line} 行"
            where += f", 第 {column} 列)" if column is not None else ")"
        super().__init__(f"{message}{where}")


class BoxTooSmall(PolyharmonicError):
    """扫描盒无法覆盖全部候选格点"""

    exit_code = 2


class Resonant(PolyharmonicError):
    """准动量不在非共振集内"""

    exit_code = 3


class QuadratureIll(PolyharmonicError):
    """本征值过于靠近积分围道"""

    exit_code = 3


class NoEigenvalueInWindow(PolyharmonicError):
    exit_code = 3


class MultipleInWindow(PolyharmonicError):
    exit_code = 3


class NeighborhoodExit(PolyharmonicError):
    """差分模板点离开非共振邻域"""

    exit_code = 3


class SeriesDiverging(PolyharmonicError):
    """微扰级数项连续增长"""

    exit_code = 4


class NoConvergence(PolyharmonicError):
    exit_code = 4


class NoRootInInterval(PolyharmonicError):
    """区间端点同号, 无法夹逼根"""

    exit_code = 4


class BoundViolation(PolyharmonicError):
    """硬模式下的不等式检查失败"""

    exit_code = 5
