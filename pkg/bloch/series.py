"""
围道积分微扰级数

围道 C₀: z = k^{2l} + ρe^{iθ}, ρ = k^{2l−n−δ}, 用 N 点梯形公式:
    (1/2πi)∮ φ(z) dz ≈ (1/N) Σ_k φ(z_k)(z_k − c)

    λ = p_j^{2l} + Σ_{r≥2} g_r,   g_r = (−1)^r/(2πi r) ∮ Tr[(W̃(H₀−z)⁻¹)^r] dz
    E = E₀ + Σ_{r≥1} G_r,        G_r = (−1)^{r+1}/(2πi) ∮ (H₀−z)⁻¹[W̃(H₀−z)⁻¹]^r dz

contour_terms 是稠密参考实现 (整矩阵, 每节点每阶一次矩阵乘法)。
eigenvalue_series / projection_series 只追踪第 j 列:
    det(I + W̃R₀) = det(I + W̃_QQ R₀_QQ)·(1 + F),  Q = 基去掉 j
第一个因子在围道内解析, 对积分无贡献, 所以 g_r = −(1/2πi)∮ [log(1+F)]_r dz,
F 的第 r 阶为 (−1)^{r−1} W̃_jQ R₀(W̃_QQ R₀)^{r−2} W̃_Qj / (d_j − z)。
"""

import logging
from dataclasses import replace
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from bloch.base import BaseSpectralSolver, SpectralPair
from bloch.operator import BlochOperator, op_norm_1
from helpers.bounds import BoundLedger
from helpers.errors import QuadratureIll, SeriesDiverging, ValidationError

logger = logging.getLogger("polyharmonic.series")

QUAD_SAFETY = 1.0
IMAG_RTOL = 1e-9
IMAG_ATOL = 1e-12
GROWTH_LIMIT = 3
# 投影列的停止阈值 = COLUMN_TOL_FACTOR · tol_fix
COLUMN_TOL_FACTOR = 1e-2
RESOLVENT_RTOL = 1e-12
# 中心模式处该界取等号; d_j 与 k^{2l} 各自的舍入误差约为 eps·k^{2l}
RESOLVENT_ROUNDING = 64.0


def check_nodes(op: BlochOperator, z: np.ndarray) -> float:
    """节点处 ‖(H₀−z)⁻¹‖₁ 的最大值; 超过 10/ρ 说明有本征值贴近围道"""
    dist = float(np.min(np.abs(op.d[:, None] - z[None, :])))
    worst = np.inf if dist == 0 else 1.0 / dist
    limit = 10.0 / op.rho * QUAD_SAFETY
    if worst > limit:
        raise QuadratureIll(
            f"节点处预解式范数 {worst:.6e} 超过 {limit:.6e} (k={op.k:.6f}, ρ={op.rho:.6e})"
        )
    return worst


def quadrature(op: BlochOperator, n_quad: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """节点与权重 (z_k − c)/N"""
    offsets = op.offsets(n_quad)
    z = op.contour_center + offsets
    check_nodes(op, z)
    return z, offsets / z.shape[0]


def realify(g: complex, hermitian: bool, label: str = "g") -> Union[float, complex]:
    """数值积分得到的 g_r 去掉虚部残差"""
    g = complex(g)
    if abs(g.imag) <= IMAG_RTOL * abs(g) + IMAG_ATOL:
        if g.imag != 0:
            logger.debug(f"{label} 虚部残差 {g.imag:.3e} 已丢弃")
        return g.real
    if hermitian:
        logger.warning(f"{label} 虚部残差偏大 {g.imag:.3e} (|g|={abs(g):.3e}), 按实对称势丢弃")
        return g.real
    return g


class _TermMonitor:
    """停止判据: 连续两项低于阈值; 包络连续增长 GROWTH_LIMIT 阶则判发散"""

    def __init__(self, threshold: float, label: str):
        self.threshold = threshold
        self.label = label
        self._prev: Optional[float] = None
        self._prev_env: Optional[float] = None
        self._growth = 0

    def update(self, r: int, mag: float) -> bool:
        env = mag if self._prev is None else max(mag, self._prev)
        if self._prev_env is not None and env > self._prev_env and env > self.threshold:
            self._growth += 1
            if self._growth >= GROWTH_LIMIT:
                raise SeriesDiverging(
                    f"{self.label} 级数在 r={r} 处连续 {self._growth} 阶增长 (|term|={mag:.3e})"
                )
        else:
            self._growth = 0
        small = self._prev is not None and mag < self.threshold and self._prev < self.threshold
        self._prev = mag
        self._prev_env = env
        return small


# ---------- 稠密参考实现 ----------

def contour_terms(
    op: BlochOperator, r_max: int, n_quad: Optional[int] = None
) -> Tuple[List[Union[float, complex]], List[np.ndarray]]:
    """全部 1..r_max 阶的 g_r 与整矩阵 G_r"""
    z, w = quadrature(op, n_quad)
    D = op.size
    g = np.zeros(r_max, dtype=complex)
    G = [np.zeros((D, D), dtype=complex) for _ in range(r_max)]
    WT = op.W.T
    for zk, wk in zip(z, w):
        r0 = 1.0 / (op.d - zk)
        B = r0[:, None] * op.W
        P = np.diag(r0)
        for r in range(1, r_max + 1):
            # Tr((R₀W)^r) = Tr(P_{r−1} W), P_r = (R₀W)^r R₀
            tr = np.sum(P * WT)
            P = B @ P
            g[r - 1] += (-1) ** r / r * tr * wk
            G[r - 1] += (-1) ** (r + 1) * wk * P
    values = [realify(g[r - 1], op.hermitian, f"g_{r}") for r in range(1, r_max + 1)]
    return values, G


def contour_term(
    op: BlochOperator, k: Optional[float] = None, j=None, r: int = 1
) -> Tuple[Union[float, complex], np.ndarray]:
    """单阶 (g_r, G_r)"""
    if r < 1:
        raise ValidationError(f"级数阶数 r 必须 ≥ 1, 当前 r={r}")
    if j is not None and tuple(j) != op.j:
        raise ValidationError(f"算子中心 {op.j} 与请求的 j={tuple(j)} 不一致")
    if k is not None and k != op.k:
        op = replace(op, k=float(k))
    g, G = contour_terms(op, r)
    return g[-1], G[-1]


def check_term_bounds(op: BlochOperator, r_max: int, ledger: BoundLedger, r_min: int = 2):
    """|g_r| ≤ ρ k^{−γ₀r}, ‖G_r‖₁ ≤ k^{−γ₀r} (整矩阵)"""
    params = op.params
    g, G = contour_terms(op, r_max)
    for r in range(r_min, r_max + 1):
        decay = op.k ** (-params.gamma0 * r)
        ledger.check(f"g_{r}", abs(g[r - 1]), op.rho * decay)
        ledger.check(f"G_{r}_norm1", op_norm_1(G[r - 1]), decay)
    return g, G


# ---------- 单列快速实现 ----------

def _eigenvalue_terms(op: BlochOperator, z: np.ndarray, w: np.ndarray, r_max: int):
    jj = op.center
    R0 = 1.0 / (op.d[:, None] - z[None, :])
    dj = op.d[jj] - z
    mask = np.ones(op.size, dtype=bool)
    mask[jj] = False
    QR0 = R0 * mask[:, None]

    y = np.repeat(op.W[:, jj][:, None], z.shape[0], axis=1)
    F: List[np.ndarray] = []
    L: List[np.ndarray] = []
    for r in range(1, r_max + 1):
        if r > 1:
            y = op.W @ (QR0 * y)
        F.append((-1) ** (r - 1) * y[jj] / dj)
        # log(1+F) 的幂级数系数
        acc = np.zeros_like(dj)
        for i in range(1, r):
            acc += i * L[i - 1] * F[r - i - 1]
        L.append(F[r - 1] - acc / r)
        yield r, -np.sum(L[r - 1] * w)


def _projection_terms(op: BlochOperator, z: np.ndarray, w: np.ndarray, r_max: int):
    jj = op.center
    R0 = 1.0 / (op.d[:, None] - z[None, :])
    X = np.zeros((op.size, z.shape[0]), dtype=complex)
    X[jj] = R0[jj]
    for r in range(1, r_max + 1):
        X = (op.W @ X) * R0
        yield r, (-1) ** (r + 1) * (X @ w)


def resolvent_rtol(op: BlochOperator) -> float:
    return max(RESOLVENT_RTOL, RESOLVENT_ROUNDING * np.finfo(float).eps * op.contour_center / op.rho)


def _check_resolvent(op: BlochOperator, n_quad: Optional[int], ledger: BoundLedger):
    worst = max(op.resolvent_norm_offset(w) for w in op.offsets(n_quad))
    rhs = op.k ** (-(2 * op.params.l) + op.params.n + op.params.delta)
    ledger.check("resolvent_H0", worst, rhs * (1.0 + resolvent_rtol(op)))


class SeriesSolver(BaseSpectralSolver):
    """按级数求本征值与投影列"""

    def __init__(self, r_max: Optional[int] = None, n_quad: Optional[int] = None):
        super().__init__("series")
        self.r_max = r_max
        self.n_quad = n_quad

    def eigenvalue_series(
        self, op: BlochOperator, ledger: Optional[BoundLedger] = None
    ) -> Tuple[Union[float, complex], List[Dict]]:
        params = op.params
        ledger = ledger if ledger is not None else BoundLedger()
        r_max = self.r_max or params.r_max
        z, w = quadrature(op, self.n_quad)
        _check_resolvent(op, self.n_quad, ledger)

        monitor = _TermMonitor(params.tol_fix * op.rho, "本征值")
        d_j = float(op.d[op.center])
        total: Union[float, complex] = 0.0
        log: List[Dict] = []
        for r, raw in _eigenvalue_terms(op, z, w, r_max):
            g = realify(raw, op.hermitian, f"g_{r}")
            total += g
            log.append({"r": r, "g_abs": abs(g)})
            logger.debug(f"g_{r} = {g!r}")
            if r >= 2:
                ledger.check(f"g_{r}", abs(g), op.rho * op.k ** (-params.gamma0 * r))
            if monitor.update(r, abs(g)):
                break
        else:
            logger.warning(f"本征值级数达到 r_max={r_max} 仍未满足停止判据, 末项 {log[-1]['g_abs']:.3e}")

        lam = d_j + total
        ledger.check(
            "lambda_shift",
            abs(lam - d_j),
            op.k ** (2 * params.l - params.n - params.delta - 2 * params.gamma0),
        )
        return lam, log

    def projection_series(
        self, op: BlochOperator, ledger: Optional[BoundLedger] = None
    ) -> Tuple[np.ndarray, List[Dict]]:
        params = op.params
        ledger = ledger if ledger is not None else BoundLedger()
        r_max = self.r_max or params.r_max
        z, w = quadrature(op, self.n_quad)

        monitor = _TermMonitor(COLUMN_TOL_FACTOR * params.tol_fix, "投影")
        col = np.zeros(op.size, dtype=complex)
        col[op.center] = 1.0
        log: List[Dict] = []
        for r, term in _projection_terms(op, z, w, r_max):
            norm = float(np.sum(np.abs(term)))
            col += term
            log.append({"r": r, "G_col_norm": norm})
            ledger.check(f"G_{r}_col", norm, op.k ** (-params.gamma0 * r))
            if monitor.update(r, norm):
                break
        else:
            logger.warning(f"投影级数达到 r_max={r_max} 仍未满足停止判据, 末项 {log[-1]['G_col_norm']:.3e}")

        e0 = np.zeros_like(col)
        e0[op.center] = 1.0
        ledger.check("E_minus_E0_col", float(np.sum(np.abs(col - e0))), op.k ** (-params.gamma0))
        return col, log

    def solve(
        self, op: BlochOperator, A: complex = 1.0, ledger: Optional[BoundLedger] = None
    ) -> SpectralPair:
        lam, eig_log = self.eigenvalue_series(op, ledger)
        col, proj_log = self.projection_series(op, ledger)
        return pair_from_column(op, lam, col, A, "series", merge_logs(eig_log, proj_log))


def merge_logs(*logs: List[Dict]) -> List[Dict]:
    merged: Dict[int, Dict] = {}
    for log in logs:
        for item in log:
            merged.setdefault(item["r"], {"r": item["r"]}).update(item)
    return [merged[r] for r in sorted(merged)]


def pair_from_column(
    op: BlochOperator, lam, col: np.ndarray, A: complex, method: str, log: List[Dict]
) -> SpectralPair:
    proj = op.column_field(col)
    return SpectralPair(
        lam=lam, j=op.j, k=op.k, projCol=proj, psi=proj.scale(A),
        method=method, termLog=log,
    )


def eigenvalue_series(op: BlochOperator, k: Optional[float] = None, j=None,
                      ledger: Optional[BoundLedger] = None):
    if j is not None and tuple(j) != op.j:
        raise ValidationError(f"算子中心 {op.j} 与请求的 j={tuple(j)} 不一致")
    if k is not None and k != op.k:
        op = replace(op, k=float(k))
    return SeriesSolver().eigenvalue_series(op, ledger)[0]


def projection_series(op: BlochOperator, k: Optional[float] = None, j=None,
                      A: complex = 1.0, ledger: Optional[BoundLedger] = None) -> SpectralPair:
    if j is not None and tuple(j) != op.j:
        raise ValidationError(f"算子中心 {op.j} 与请求的 j={tuple(j)} 不一致")
    if k is not None and k != op.k:
        op = replace(op, k=float(k))
    solver = SeriesSolver()
    col, log = solver.projection_series(op, ledger)
    return pair_from_column(op, None, col, A, "series", log)
