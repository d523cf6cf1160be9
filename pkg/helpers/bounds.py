"""
不等式检查账本

所有理论估计 (级数项界, Cauchy 界, 解的界, 等值面偏差界) 都在这里登记。
hard 模式下失败的检查可由 enforce() 统一抛出 BoundViolation;
soft 模式只记录和告警。
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List

from helpers.errors import BoundViolation

logger = logging.getLogger("polyharmonic.bounds")

HARD = "hard"
SOFT = "soft"


@dataclass(frozen=True)
class BoundCheck:
    name: str
    lhs: float
    rhs: float
    mode: str
    passed: bool

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "mode": self.mode,
            "pass": self.passed,
        }


@dataclass
class BoundLedger:
    """按顺序记录的检查结果"""

    mode: str = SOFT
    checks: List[BoundCheck] = field(default_factory=list)
    prefix: str = ""

    def check(self, name: str, lhs: float, rhs: float, strict: bool = False) -> BoundCheck:
        """记录 lhs ≤ rhs (strict=True 时为 <), 不抛异常"""
        name = self.prefix + name
        lhs = float(lhs)
        rhs = float(rhs)
        if math.isnan(lhs) or math.isnan(rhs):
            passed = False
        else:
            passed = lhs < rhs if strict else lhs <= rhs
        item = BoundCheck(name=name, lhs=lhs, rhs=rhs, mode=self.mode, passed=passed)
        self.checks.append(item)
        if passed:
            logger.debug(f"[{self.mode}] {name}: {lhs:.3e} ≤ {rhs:.3e}")
        else:
            logger.warning(f"[{self.mode}] 界检查失败 {name}: lhs={lhs:.6e} > rhs={rhs:.6e}")
        return item

    def scoped(self, prefix: str) -> "BoundLedger":
        """共享同一检查列表, 名称加前缀 (如逐步迭代的 m3_g_2)"""
        return BoundLedger(mode=self.mode, checks=self.checks, prefix=self.prefix + prefix)

    def extend(self, other: "BoundLedger"):
        self.checks.extend(other.checks)

    @property
    def failures(self) -> List[BoundCheck]:
        return [c for c in self.checks if not c.passed]

    @property
    def hard_failures(self) -> List[BoundCheck]:
        return [c for c in self.checks if not c.passed and c.mode == HARD]

    def enforce(self):
        """存在 hard 失败时抛出 BoundViolation"""
        bad = self.hard_failures
        if bad:
            names = ", ".join(c.name for c in bad)
            raise BoundViolation(f"硬模式界检查失败 {len(bad)} 项: {names}")

    def to_list(self) -> List[Dict]:
        return [c.to_dict() for c in self.checks]


def ledger_for(bounds_mode: str, k: float, k1: float) -> BoundLedger:
    """k > k₁ 且配置为 hard 时才启用硬模式"""
    mode = HARD if (bounds_mode == HARD and k > k1) else SOFT
    return BoundLedger(mode=mode)
