"""
截断 Bloch 算子

H(t) = (−Δ)ˡ + W̃ 在以 j 为中心的 Fourier 基 m = j + q (‖q‖∞ ≤ R) 上:
    H[a,b] = |t + 2π(j+q_a)|^{2l} δ_ab + w_{q_a − q_b}
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import svdvals

from helpers.errors import Resonant, ValidationError
from lattice.field import FourierField, LatticeIndex, box_indices
from lattice.params import TWO_PI, ProblemParams
from nonres.scan import NonResonanceReport, is_nonresonant

logger = logging.getLogger("polyharmonic.bloch")


def p_vec(t, j) -> np.ndarray:
    """p_j(t) = t + 2πj"""
    t = np.asarray(t, dtype=float)
    j = np.asarray(j, dtype=float)
    if t.shape != j.shape:
        raise ValidationError(f"t 与 j 维数不一致: {t.shape} vs {j.shape}")
    return t + TWO_PI * j


def symbol(p: np.ndarray, l: int) -> np.ndarray:
    """|p|^{2l}, 最后一维为向量分量"""
    return np.sum(np.square(p), axis=-1) ** l


@lru_cache(maxsize=16)
def _basis(n: int, R: int) -> np.ndarray:
    arr = np.array(box_indices(n, R), dtype=np.int64)
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=8)
def _diff_index(n: int, R: int) -> Tuple[np.ndarray, ...]:
    """q_a − q_b 在半径 2R 的 dense 数组中的下标"""
    Q = _basis(n, R)
    diff = Q[:, None, :] - Q[None, :, :] + 2 * R
    return tuple(diff[..., s] for s in range(n))


def op_norm_1(M: np.ndarray) -> float:
    """‖M‖₁ = 列绝对值和的最大值"""
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(M), axis=0)))


def trace_norm(M: np.ndarray) -> float:
    """奇异值之和"""
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    return float(np.sum(svdvals(M)))


def find_center_index(
    params: ProblemParams,
    k: Optional[float] = None,
    t=None,
    with_report: bool = False,
):
    """唯一的 j: p_j^{2l}(t) ∈ ε(k,δ) 且与其余格点分离 2k^{2l−n−δ}"""
    k = params.k if k is None else k
    t = params.t if t is None else t
    report: NonResonanceReport = is_nonresonant(params, t, k, raise_on_fail=True)
    logger.debug(f"中心格点 j={report.j}, margin={report.margin:.6e}")
    if with_report:
        return report.j, report
    return report.j


@dataclass(frozen=True, eq=False)
class BlochOperator:
    params: ProblemParams
    potential: FourierField
    j: LatticeIndex
    t: Tuple[float, ...]
    k: float
    basis: np.ndarray
    d: np.ndarray
    W: np.ndarray

    @classmethod
    def assemble(
        cls,
        params: ProblemParams,
        potential: FourierField,
        j: LatticeIndex,
        t=None,
        k: Optional[float] = None,
    ) -> "BlochOperator":
        n, R = params.n, params.R
        if potential.n != n:
            raise ValidationError(f"势函数维数 {potential.n} 与 n={n} 不符")
        if potential.mean != 0:
            raise ValidationError(f"算子势必须零均值, 当前 w₀={potential.mean}")
        if len(j) != n:
            raise ValidationError(f"中心格点 j={j} 维数应为 {n}")
        t = tuple(float(x) for x in (params.t if t is None else t))
        k = params.k if k is None else float(k)

        basis = _basis(n, R)
        p = p_vec(t, j)[None, :] + TWO_PI * basis
        d = symbol(p, params.l)

        # 势系数放进半径 2R 的数组, 按差分下标取出 Toeplitz 结构
        big = np.zeros((4 * R + 1,) * n, dtype=complex)
        for q, c in potential.coeffs.items():
            if max(abs(x) for x in q) <= 2 * R:
                big[tuple(x + 2 * R for x in q)] = c
        W = big[_diff_index(n, R)]

        return cls(
            params=params, potential=potential, j=tuple(int(x) for x in j),
            t=t, k=k, basis=basis, d=d, W=W,
        )

    # ---------- 访问器 ----------

    @property
    def size(self) -> int:
        return self.d.shape[0]

    @property
    def center(self) -> int:
        """q = 0 在基中的位置"""
        return self.size // 2

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.d).astype(complex) + self.W

    @property
    def hermitian(self) -> bool:
        return self.potential.hermitian

    @property
    def contour_center(self) -> float:
        return self.k ** (2 * self.params.l)

    @property
    def rho(self) -> float:
        return self.params.rho(self.k)

    def offsets(self, n_quad: Optional[int] = None) -> np.ndarray:
        """节点相对围道中心的位移 ρe^{2πik/N}"""
        N = self.params.n_quad if n_quad is None else n_quad
        theta = TWO_PI * np.arange(N) / N
        return self.rho * np.exp(1j * theta)

    def nodes(self, n_quad: Optional[int] = None) -> np.ndarray:
        """围道 C₀ 上的梯形节点 z_k = k^{2l} + ρe^{2πik/N}"""
        return self.contour_center + self.offsets(n_quad)

    def resolvent_norm(self, z: complex) -> float:
        """‖(H₀ − z)⁻¹‖₁ (对角, 直接可算)"""
        return float(np.max(1.0 / np.abs(self.d - z)))

    def resolvent_norm_offset(self, w: complex) -> float:
        """同上, 但节点以 z = k^{2l} + w 给出; 距离按 (d − k^{2l}) − w 计算, 不受 k^{2l} 量级的舍入影响"""
        return float(np.max(1.0 / np.abs((self.d - self.contour_center) - w)))

    def column_field(self, vec: np.ndarray, hermitian: bool = False) -> FourierField:
        """基上的向量 → 以 q 为下标的场"""
        R = self.params.R
        return FourierField.from_dense(
            np.asarray(vec, dtype=complex).reshape((2 * R + 1,) * self.params.n), R,
            hermitian=hermitian,
        )

    def dump(self, path: str):
        """稠密矩阵按行写出, 表头给出基的顺序"""
        header = "basis order (q = m - j): " + " ".join(
            "(" + ",".join(str(int(x)) for x in q) + ")" for q in self.basis
        )
        np.savetxt(path, self.matrix, header=header, fmt="%.17g")
        logger.info(f"矩阵已写出: {path} ({self.size}×{self.size})")


def carrier_radius(t, j) -> float:
    """载波半径 |p_j(t)|"""
    return float(np.linalg.norm(p_vec(t, j)))


def locate_carrier(params: ProblemParams, t=None, k: Optional[float] = None):
    """(t, k) → (j, 载波半径 |p_j(t)|, 在载波半径处的非共振报告)"""
    t = tuple(float(x) for x in (params.t if t is None else t))
    j = find_center_index(params, k, t)
    k_c = carrier_radius(t, j)
    report = is_nonresonant(params, t, k_c, raise_on_fail=True)
    if report.j != j:
        raise Resonant(f"载波半径 k={k_c:.6f} 处中心格点变为 {report.j} (原 {j})")
    return j, k_c, report


def assemble_at(
    params: ProblemParams, potential: FourierField, t, j: LatticeIndex
) -> BlochOperator:
    """在 (t, j) 处组装, 围道以 |p_j(t)|^{2l} 为中心"""
    return BlochOperator.assemble(params, potential, j, t=t, k=carrier_radius(t, j))


def free_eigenvalue(params: ProblemParams, t, j) -> float:
    return float(symbol(p_vec(t, j), params.l))


def free_gradient(params: ProblemParams, t, j) -> np.ndarray:
    """∇|p|^{2l} = 2l|p|^{2l−2}p"""
    p = p_vec(t, j)
    return 2 * params.l * float(np.dot(p, p)) ** (params.l - 1) * p


def log_operator(op: BlochOperator):
    logger.info(
        f"Bloch 算子: n={op.params.n}, l={op.params.l}, 维数={op.size}, "
        f"j={op.j}, k={op.k:.6f}, ρ={op.rho:.6e}, ‖W̃‖_*={op.potential.star_norm():.6g}"
    )

