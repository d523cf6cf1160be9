"""
B(λ) 的 Monte Carlo 测度估计

在单位球面上均匀采样方向, 统计非共振比例, 给出二项标准误。
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from helpers.errors import ValidationError
from lattice.params import ProblemParams
from nonres.scan import NonResonanceReport, decompose_report, sample_direction

logger = logging.getLogger("polyharmonic.measure")

MIN_SAMPLES = 1000


class MeasureAccumulator:
    """通过/失败计数, 维护比例与标准误"""

    def __init__(self, label: str = "B"):
        self.label = label
        self._total = 0
        self._passed = 0
        self._margin_min: Optional[float] = None

    def update(self, passed: bool, margin: Optional[float] = None):
        self._total += 1
        if passed:
            self._passed += 1
        if margin is not None:
            if self._margin_min is None or margin < self._margin_min:
                self._margin_min = margin

    def add_report(self, report: NonResonanceReport):
        self.update(report.passed, report.margin)

    @property
    def total(self) -> int:
        return self._total

    @property
    def fraction(self) -> float:
        return self._passed / self._total if self._total else 0.0

    @property
    def stderr(self) -> float:
        if not self._total:
            return 0.0
        f = self.fraction
        return math.sqrt(f * (1.0 - f) / self._total)

    def estimate(self, k: float) -> "MeasureEstimate":
        return MeasureEstimate(k=float(k), fraction=self.fraction, stderr=self.stderr, N=self._total)

    def get_stats(self) -> Dict:
        return {
            "label": self.label,
            "N": self._total,
            "passed": self._passed,
            "fraction": self.fraction,
            "stderr": self.stderr,
            "margin_min": self._margin_min,
        }


@dataclass(frozen=True)
class MeasureEstimate:
    k: float
    fraction: float
    stderr: float
    N: int

    def to_dict(self) -> Dict:
        return {"k": self.k, "fraction": self.fraction, "stderr": self.stderr, "N": self.N}


def sample_report(params: ProblemParams, k: float, seed: int, index: int) -> Tuple[np.ndarray, NonResonanceReport]:
    """第 index 个样本方向及其在 k 处的非共振报告"""
    nu = sample_direction(seed, index, params.n)
    return nu, decompose_report(params, k, nu)


def estimate_B_measure(params: ProblemParams, k: float, N_samples: int, seed: int) -> MeasureEstimate:
    if N_samples < MIN_SAMPLES:
        raise ValidationError(f"测度估计至少需要 {MIN_SAMPLES} 个样本, 当前 {N_samples}")
    acc = MeasureAccumulator()
    for i in range(N_samples):
        _, report = sample_report(params, k, seed, i)
        acc.add_report(report)
    stats = acc.get_stats()
    logger.info(
        f"B 测度估计 k={k}: {stats['passed']}/{stats['N']} = {acc.fraction:.6f} ± {acc.stderr:.2e}"
    )
    return acc.estimate(k)
