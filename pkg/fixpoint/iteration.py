"""
映射 M 与不动点迭代

    M(W) = V + σ|ψ_{W̃}|²,  W̃ = W − w₀
    W₀ = V + σ|A|²,  W_{m+1} = M(W_m)

线性求解有三种模式:
    strict     只用级数
    fallback   级数发散时改用稠密分解 (记日志)
    crosscheck 级数为主, 矩阵规模允许时每步与稠密分解比对 (默认)
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

from bloch.base import SpectralPair
from bloch.operator import assemble_at, locate_carrier
from bloch.oracle import DEFAULT_DENSE_LIMIT, DenseOracleSolver
from bloch.series import SeriesSolver
from fixpoint.threshold import k1_threshold
from fixpoint.trace import IterationTrace
from helpers.bounds import BoundLedger, ledger_for
from helpers.errors import NoConvergence, SeriesDiverging, ValidationError
from lattice.field import FourierField
from lattice.params import ProblemParams

logger = logging.getLogger("polyharmonic.fixpoint")

STRICT = "strict"
FALLBACK = "fallback"
CROSSCHECK = "crosscheck"
MODES = (STRICT, FALLBACK, CROSSCHECK)

CROSSCHECK_LAMBDA_RTOL = 1e-8
CROSSCHECK_COLUMN_TOL = 1e-6


class LinearStage:
    """固定 (t, j) 下的线性 Bloch 求解: W ↦ (λ_{W̃}, ψ_{W̃})"""

    def __init__(
        self,
        params: ProblemParams,
        t,
        j,
        mode: str = CROSSCHECK,
        dense_limit: int = DEFAULT_DENSE_LIMIT,
        ledger: Optional[BoundLedger] = None,
    ):
        if mode not in MODES:
            raise ValidationError(f"未知的线性求解模式 {mode}, 可选 {MODES}")
        self.params = params
        self.t = tuple(float(x) for x in t)
        self.j = tuple(j)
        self.mode = mode
        self.dense_limit = dense_limit
        self.ledger = ledger if ledger is not None else BoundLedger()
        self.series = SeriesSolver()
        self.oracle = DenseOracleSolver(dense_limit)
        self.fallbacks = 0

    def solve(
        self, W: FourierField, ledger: Optional[BoundLedger] = None, step: Optional[int] = None
    ) -> SpectralPair:
        """级数界记入 ledger; 未给出时记入本阶段账本, step 给出时名称加 m{step}_ 前缀"""
        W_tilde = W.remove_mean().resized(self.params.R)
        op = assemble_at(self.params, W_tilde, self.t, self.j)
        if ledger is None:
            ledger = self.ledger if step is None else self.ledger.scoped(f"m{step}_")
        try:
            pair = self.series.solve(op, self.params.A, ledger)
        except SeriesDiverging as e:
            if self.mode == STRICT:
                raise
            logger.warning(f"级数发散, 改用稠密分解: {e}")
            self.fallbacks += 1
            return self.oracle.solve(op, self.params.A)

        if self.mode == CROSSCHECK and op.size <= self.dense_limit:
            self._crosscheck(op, pair, ledger)
        return pair

    def _crosscheck(self, op, pair: SpectralPair, ledger: BoundLedger):
        ref = self.oracle.solve(op, self.params.A)
        rel = abs(pair.lam - ref.lam) / abs(ref.lam)
        col_diff = (pair.normalized_column() - ref.normalized_column()).star_norm()
        logger.debug(f"级数 vs 稠密: Δλ/λ={rel:.3e}, 列差={col_diff:.3e}")
        ledger.check("crosscheck_lambda", rel, CROSSCHECK_LAMBDA_RTOL)
        ledger.check("crosscheck_column", col_diff, CROSSCHECK_COLUMN_TOL)


def update_potential(V: FourierField, psi: FourierField, params: ProblemParams) -> FourierField:
    """V + σ|ψ|² (裁回 R)"""
    return V.resized(params.R) + psi.squared_modulus().scale(params.sigma)


def apply_M(
    W: FourierField,
    V: FourierField,
    params: ProblemParams,
    t=None,
    j=None,
    mode: str = CROSSCHECK,
    stage: Optional[LinearStage] = None,
) -> FourierField:
    if stage is None:
        t = params.t if t is None else t
        if j is None:
            j, _, _ = locate_carrier(params, t)
        stage = LinearStage(params, t, j, mode)
    pair = stage.solve(W)
    return update_potential(V, pair.psi, params)


@dataclass
class IterationResult:
    trace: IterationTrace
    W_fixed: FourierField
    pair: SpectralPair
    stage: LinearStage
    k: float
    fixed_point_delta: float
    ledger: BoundLedger


def iterate(
    V: FourierField,
    params: ProblemParams,
    max_iter: Optional[int] = None,
    t=None,
    mode: str = CROSSCHECK,
    keep_psi: bool = False,
    dense_limit: int = DEFAULT_DENSE_LIMIT,
    ledger: Optional[BoundLedger] = None,
    bounds: str = "hard",
) -> IterationResult:
    if V.mean != 0:
        raise ValidationError(f"输入势需满足 v₀ = 0, 当前 v₀={V.mean}")
    max_iter = params.max_iter if max_iter is None else max_iter
    t = params.t if t is None else tuple(t)
    j, k, _ = locate_carrier(params, t)
    params.check_amplitude(k ** (2 * params.l))

    k1 = k1_threshold(V.star_norm(), params)
    ledger = ledger if ledger is not None else ledger_for(bounds, k, k1)
    stage = LinearStage(params, t, j, mode, dense_limit, ledger)
    trace = IterationTrace(params, k, k1, keep_psi)

    logger.info("=" * 60)
    logger.info(
        f"不动点迭代: k={k:.6f}, j={j}, σ|A|²={params.coupling}, q={trace.q:.3e}, "
        f"k₁={k1:.4f}, 模式={mode}"
    )
    logger.info("=" * 60)

    W_prev = V.resized(params.R).add_constant(params.coupling)
    pair = stage.solve(W_prev, step=0)
    trace.record(0, pair.lam, pair.psi, W_prev)

    for m in range(1, max_iter + 1):
        W = update_potential(V, pair.psi, params)
        trace.truncation += W.clipped
        star_delta = (W - W_prev).star_norm()
        new_pair = stage.solve(W, step=m)
        psi_delta = (new_pair.psi - pair.psi).star_norm()
        trace.record(m, new_pair.lam, new_pair.psi, W, star_delta, psi_delta)
        W_prev, pair = W, new_pair
        if star_delta < params.tol_fix:
            trace.converged = True
            break

    if not trace.converged:
        raise NoConvergence(
            f"{max_iter} 步内未收敛: 末步 ‖W_m − W_(m−1)‖_* = {trace.last.star_delta:.3e} "
            f"> tol_fix={params.tol_fix}"
        )

    # 不动点性质: ‖M W − W‖_*
    W_next = update_potential(V, pair.psi, params)
    fixed_delta = (W_next - W_prev).star_norm()
    logger.info(
        f"迭代收敛: m={trace.iterations}, ‖MW−W‖_*={fixed_delta:.3e}, 截断质量={trace.truncation:.3e}"
    )
    return IterationResult(
        trace=trace, W_fixed=W_prev, pair=pair, stage=stage, k=k,
        fixed_point_delta=fixed_delta, ledger=ledger,
    )


def fixed_point_check(result: IterationResult, params: ProblemParams, ledger: BoundLedger):
    ledger.check("fixed_point", result.fixed_point_delta, 2.0 * params.tol_fix)


def coupling_sequence(sigma: float, count: int = 3, factor: float = 0.1) -> Tuple[float, ...]:
    """σ 连续性检查用的递减耦合序列"""
    return tuple(sigma * factor ** i for i in range(1, count + 1))

