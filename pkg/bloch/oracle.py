"""
稠密本征分解 (独立参照)

对截断矩阵做完整分解, 取窗口 |λ − k^{2l}| < ρ 内唯一的本征值。
"""

import logging
from dataclasses import replace

import numpy as np
from scipy.linalg import eig, eigh

from bloch.base import BaseSpectralSolver, SpectralPair
from bloch.operator import BlochOperator
from bloch.series import pair_from_column
from helpers.errors import MultipleInWindow, NoEigenvalueInWindow, ValidationError

logger = logging.getLogger("polyharmonic.oracle")

DEFAULT_DENSE_LIMIT = 8000


class DenseOracleSolver(BaseSpectralSolver):
    def __init__(self, dense_limit: int = DEFAULT_DENSE_LIMIT):
        super().__init__("dense")
        self.dense_limit = dense_limit

    def solve(self, op: BlochOperator, A: complex = 1.0, ledger=None) -> SpectralPair:
        if op.size > self.dense_limit:
            raise ValidationError(f"矩阵维数 {op.size} 超过稠密上限 {self.dense_limit}")
        H = op.matrix
        c, rho, jj = op.contour_center, op.rho, op.center

        if op.hermitian:
            evals, evecs = eigh(H)
            inside = np.flatnonzero(np.abs(evals - c) < rho)
            self._check_count(inside, evals, c, rho)
            i = int(inside[0])
            u = evecs[:, i]
            lam = float(evals[i])
            col = u * np.conj(u[jj]) / np.vdot(u, u)
        else:
            evals, vl, vr = eig(H, left=True, right=True)
            inside = np.flatnonzero(np.abs(evals - c) < rho)
            self._check_count(inside, evals, c, rho)
            i = int(inside[0])
            u = vr[:, i]
            w = vl[:, i]
            lam = complex(evals[i])
            col = u * np.conj(w[jj]) / np.vdot(w, u)

        if u[jj] == 0:
            raise NoEigenvalueInWindow(f"窗口内本征向量在 j={op.j} 处分量为 0")
        eigvec = u * (abs(u[jj]) / u[jj])
        residual = float(np.linalg.norm(H @ u - lam * u))

        pair = pair_from_column(op, lam, col, A, "dense", [])
        pair.diagnostics.update({
            "eigvec": eigvec,
            "residual_2": residual,
            "matrix_norm_2": float(np.linalg.norm(H, 2)),
        })
        logger.debug(f"稠密参照: λ={lam!r}, ‖Hv−λv‖₂={residual:.3e}")
        return pair

    @staticmethod
    def _check_count(inside: np.ndarray, evals: np.ndarray, c: float, rho: float):
        if inside.size == 0:
            nearest = evals[np.argmin(np.abs(evals - c))]
            raise NoEigenvalueInWindow(
                f"窗口 ({c - rho:.6f}, {c + rho:.6f}) 内无本征值, 最近的为 {nearest!r}"
            )
        if inside.size > 1:
            raise MultipleInWindow(
                f"窗口 ({c - rho:.6f}, {c + rho:.6f}) 内有 {inside.size} 个本征值: {evals[inside]}"
            )


def dense_oracle(op: BlochOperator, k=None, A: complex = 1.0, dense_limit: int = DEFAULT_DENSE_LIMIT) -> SpectralPair:
    if k is not None and k != op.k:
        op = replace(op, k=float(k))
    return DenseOracleSolver(dense_limit).solve(op, A)
