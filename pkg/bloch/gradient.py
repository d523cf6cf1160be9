"""
∇_t λ 的有限差分估计

固定 j, 在 t ± h e_s 处重新组装算子 (围道以 |p_j(t')|^{2l} 为中心) 求 λ,
中心差分; 步长减半后做 Richardson 外推 (4g(h/2) − g(h))/3, 并以 g(h) 相对外推值的偏差作为光滑性指标。
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from bloch.operator import assemble_at, carrier_radius, free_gradient
from bloch.series import SeriesSolver
from helpers.bounds import BoundLedger
from helpers.errors import NeighborhoodExit
from lattice.field import FourierField
from lattice.params import ProblemParams
from nonres.scan import is_nonresonant

logger = logging.getLogger("polyharmonic.gradient")

DEFAULT_REL_STEP = 1e-6
RICHARDSON_RTOL = 1e-5


@dataclass
class GradientEstimate:
    grad: np.ndarray
    grad_half: np.ndarray
    extrapolated: np.ndarray
    free: np.ndarray
    rel_change: float

    @property
    def deviation(self) -> float:
        """|∇(λ − p_j^{2l})|"""
        return float(np.linalg.norm(self.extrapolated - self.free))

    def to_dict(self) -> Dict:
        return {
            "grad": [float(np.real(x)) for x in self.grad],
            "grad_half": [float(np.real(x)) for x in self.grad_half],
            "extrapolated": [float(np.real(x)) for x in self.extrapolated],
            "free": [float(x) for x in self.free],
            "rel_change": self.rel_change,
            "deviation": self.deviation,
        }


def _lambda_at(params: ProblemParams, potential: FourierField, t, j, solver: SeriesSolver):
    k = carrier_radius(t, j)
    report = is_nonresonant(params, t, k)
    if not report.passed or report.j != tuple(j):
        raise NeighborhoodExit(
            f"差分模板点 t={tuple(t)} 离开非共振邻域 (pass={report.passed}, j={report.j}, "
            f"margin={report.margin:.3e})"
        )
    op = assemble_at(params, potential, t, j)
    lam, _ = solver.eigenvalue_series(op)
    return lam


def _central(params, potential, t, j, h, solver) -> np.ndarray:
    grad = np.zeros(params.n, dtype=complex)
    for s in range(params.n):
        e = np.zeros(params.n)
        e[s] = h
        lam_p = _lambda_at(params, potential, t + e, j, solver)
        lam_m = _lambda_at(params, potential, t - e, j, solver)
        grad[s] = (lam_p - lam_m) / (2.0 * h)
    return grad


def grad_lambda_fd(
    params: ProblemParams,
    potential: FourierField,
    t=None,
    j=None,
    h: Optional[float] = None,
    ledger: Optional[BoundLedger] = None,
) -> GradientEstimate:
    t = np.asarray(params.t if t is None else t, dtype=float)
    if j is None:
        j = is_nonresonant(params, t, params.k, raise_on_fail=True).j
    k = carrier_radius(t, j)
    h = DEFAULT_REL_STEP * k if h is None else h
    solver = SeriesSolver()

    g_h = _central(params, potential, t, j, h, solver)
    g_half = _central(params, potential, t, j, 0.5 * h, solver)
    if potential.hermitian:
        g_h, g_half = g_h.real, g_half.real
    extrapolated = (4.0 * g_half - g_h) / 3.0
    scale = max(float(np.linalg.norm(extrapolated)), np.finfo(float).tiny)
    rel_change = float(np.linalg.norm(extrapolated - g_h)) / scale

    est = GradientEstimate(
        grad=g_h, grad_half=g_half, extrapolated=extrapolated,
        free=free_gradient(params, t, j), rel_change=rel_change,
    )
    if ledger is not None:
        l, delta, g0 = params.l, params.delta, params.gamma0
        ledger.check("grad_richardson", rel_change, RICHARDSON_RTOL)
        ledger.check("grad_deviation", est.deviation, 2.0 * k ** (2 * l - 1 - 2 * g0))
        soft = BoundLedger(mode="soft")
        soft.check("grad_deviation_iso", est.deviation, 2.0 * k ** (2 * l - 1 + delta - g0))
        ledger.extend(soft)

    logger.info(
        f"∇λ (h={h:.3e}): {np.real(extrapolated)}, 相对变化 {rel_change:.3e}, "
        f"偏离自由梯度 {est.deviation:.3e}"
    )
    return est
