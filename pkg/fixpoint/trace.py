"""
不动点迭代轨迹

逐步记录 W_m 序列: 星范数增量、理论界 q^m (q = |σ||A|²k^{−γ₀})、λ_m、ψ 增量,
并在迭代结束后做收敛性检查。
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from helpers.bounds import BoundLedger
from lattice.field import FourierField
from lattice.params import ProblemParams

logger = logging.getLogger("polyharmonic.trace")

# 比较 λ 时允许的舍入量: NOISE_ULPS·eps·|λ|
NOISE_ULPS = 16.0
FIELD_NOISE = 1e-13


@dataclass
class StepRecord:
    m: int
    star_delta: float
    bound: float
    lambda_m: float
    psi_delta: float

    def to_row(self) -> List:
        lam = self.lambda_m.real if isinstance(self.lambda_m, complex) else self.lambda_m
        return [self.m, self.star_delta, self.bound, lam, self.psi_delta]


class IterationTrace:
    """W_m 序列的逐步记录"""

    CSV_HEADER = ["m", "star_delta", "bound", "lambda_m", "psi_delta"]

    def __init__(self, params: ProblemParams, k: float, k1: float, keep_psi: bool = False):
        self.params = params
        self.k = k
        self.k1 = k1
        self.keep_psi = keep_psi
        self.q = abs(params.coupling) * k ** (-params.gamma0)

        self.steps: List[StepRecord] = []
        self.psi: List[FourierField] = []
        self.W: List[FourierField] = []
        self.converged = False
        self.truncation = 0.0

    def record(
        self,
        m: int,
        lambda_m,
        psi: FourierField,
        W: FourierField,
        star_delta: float = math.nan,
        psi_delta: float = math.nan,
    ):
        bound = self.q ** m
        self.steps.append(StepRecord(m, star_delta, bound, lambda_m, psi_delta))
        if self.keep_psi:
            self.psi.append(psi)
            self.W.append(W)
        logger.info(
            f"迭代 m={m}: ‖W_m−W_(m−1)‖_*={star_delta:.3e} (界 {bound:.3e}), "
            f"λ_m={lambda_m!r}, ‖ψ_m−ψ_(m−1)‖_*={psi_delta:.3e}"
        )

    @property
    def last(self) -> Optional[StepRecord]:
        return self.steps[-1] if self.steps else None

    @property
    def iterations(self) -> int:
        return self.last.m if self.steps else 0

    def to_rows(self) -> List[List]:
        return [s.to_row() for s in self.steps]

    def get_stats(self) -> Dict:
        deltas = [s.star_delta for s in self.steps if not math.isnan(s.star_delta)]
        ratio = None
        if len(deltas) >= 2 and deltas[-2] > 0:
            ratio = deltas[-1] / deltas[-2]
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "k1": self.k1,
            "q": self.q,
            "last_star_delta": deltas[-1] if deltas else None,
            "last_ratio": ratio,
            "truncation": self.truncation,
        }

    # ---------- 收敛检查 ----------

    def check_cauchy(self, ledger: BoundLedger):
        """‖W_m − W_{m−1}‖_* ≤ q^m"""
        for s in self.steps:
            if s.m >= 1:
                ledger.check(f"cauchy_step_{s.m}", s.star_delta, s.bound + FIELD_NOISE)

    def check_cauchy_chain(self, ledger: BoundLedger):
        """‖W − W_m‖_* ≤ 2q^{m+1}, W 为收敛极限"""
        if not self.W:
            logger.warning("未保留 W_m, 跳过 Cauchy 链检查 (需要 keep_psi)")
            return
        W_fix = self.W[-1]
        for m, W_m in enumerate(self.W[:-1]):
            ledger.check(
                f"cauchy_chain_{m}", (W_fix - W_m).star_norm(), 2.0 * self.q ** (m + 1) + FIELD_NOISE
            )


def psi_convergence_check(trace: IterationTrace, params: ProblemParams, ledger: BoundLedger) -> List[Dict]:
    """‖ψ_m − ψ_fixed‖_* ≤ 4|A|k^{−(2l−n−δ)} q^{m+1}"""
    if not trace.psi:
        logger.warning("未保留 ψ_m, 无法做 ψ 收敛检查 (需要 keep_psi)")
        return []
    psi_fix = trace.psi[-1]
    pref = 4.0 * abs(params.A) * trace.k ** (-(2 * params.l - params.n - params.delta))
    out = []
    for m, psi_m in enumerate(trace.psi):
        lhs = (psi_m - psi_fix).star_norm()
        item = ledger.check(f"psi_conv_{m}", lhs, pref * trace.q ** (m + 1) + FIELD_NOISE)
        out.append(item.to_dict())
    return out


def lambda_convergence_check(trace: IterationTrace, params: ProblemParams, ledger: BoundLedger) -> List[Dict]:
    """|λ_m − λ_fixed| ≤ k^{n−γ₀} q^m"""
    if not trace.steps:
        return []
    lam_fix = trace.steps[-1].lambda_m
    pref = trace.k ** (params.n - params.gamma0)
    noise = NOISE_ULPS * np.finfo(float).eps * abs(lam_fix)
    out = []
    for s in trace.steps:
        item = ledger.check(
            f"lambda_conv_{s.m}", abs(s.lambda_m - lam_fix), pref * trace.q ** s.m + noise
        )
        out.append(item.to_dict())
    return out
