"""
问题参数

收纳方程 (−Δ)ˡu + Vu + σ|u|²u = λu 的全部标量符号, 构造时校验:
    n ≥ 2, 2l > n, 0 < 2δ < 2l − n
并提供派生量 γ₀, ρ(k), ε(k,δ) 窗口。
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from helpers.errors import ValidationError

logger = logging.getLogger("polyharmonic.params")

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ProblemParams:
    n: int
    l: int
    delta: float
    sigma: float = 0.0
    A: complex = 1.0 + 0.0j
    t: Tuple[float, ...] = field(default_factory=tuple)
    k: float = 30.0
    R: int = 12
    r_max: int = 12
    n_quad: int = 64
    tol_fix: float = 1e-10
    tol_root: float = 1e-10
    k0_override: float = 1.0
    gamma1: Optional[float] = None
    gamma: Optional[float] = None
    scan_radius: Optional[int] = None
    max_iter: int = 50
    bound_const: float = 10.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValidationError(f"维数 n 必须是 ≥ 2 的整数, 当前 n={self.n}")
        if int(self.l) != self.l or self.l < 1:
            raise ValidationError(f"l 必须是正整数, 当前 l={self.l}")
        if 2 * self.l <= self.n:
            raise ValidationError(f"需要 2l > n, 当前 2l={2 * self.l}, n={self.n}")
        if not (0.0 < 2.0 * self.delta < 2 * self.l - self.n):
            raise ValidationError(
                f"δ 约束 0 < 2δ < 2l − n 不满足: 2δ={2.0 * self.delta}, 2l−n={2 * self.l - self.n}"
            )
        t = tuple(float(x) for x in self.t) if len(self.t) else (0.0,) * self.n
        if len(t) != self.n:
            raise ValidationError(f"准动量 t 维数 {len(t)} 与 n={self.n} 不符")
        if not all(math.isfinite(x) for x in t):
            raise ValidationError(f"准动量 t 含非有限值: {t}")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "A", complex(self.A))
        object.__setattr__(self, "sigma", float(self.sigma))
        if not (self.k > 0 and math.isfinite(self.k)):
            raise ValidationError(f"载波半径 k 必须为正, 当前 k={self.k}")
        if self.R < 1:
            raise ValidationError(f"截断半径 R 必须 ≥ 1, 当前 R={self.R}")
        if self.r_max < 2:
            raise ValidationError(f"级数阶数上限 r_max 必须 ≥ 2, 当前 r_max={self.r_max}")
        if self.n_quad < 8:
            raise ValidationError(f"围道节点数 n_quad 至少为 8, 当前 {self.n_quad}")
        if self.tol_fix <= 0 or self.tol_root <= 0:
            raise ValidationError("容差 tol_fix / tol_root 必须为正")
        if self.max_iter < 1:
            raise ValidationError(f"max_iter 必须 ≥ 1, 当前 {self.max_iter}")
        if self.scan_radius is not None and self.scan_radius < 1:
            raise ValidationError(f"scan_radius 必须 ≥ 1, 当前 {self.scan_radius}")
        if self.gamma1 is not None and not (0.0 < self.gamma1 < self.gamma0):
            raise ValidationError(f"需要 0 < γ₁ < γ₀={self.gamma0}, 当前 γ₁={self.gamma1}")
        gmax = (2 * self.l - self.n) / (2 * self.l)
        if self.gamma is not None and not (0.0 < self.gamma < gmax):
            raise ValidationError(f"需要 0 < γ < (2l−n)/2l={gmax}, 当前 γ={self.gamma}")

    # ---------- 派生量 ----------

    @property
    def gamma0(self) -> float:
        """γ₀ = 2l − n − 2δ"""
        return 2 * self.l - self.n - 2.0 * self.delta

    @property
    def gamma1_eff(self) -> float:
        return self.gamma1 if self.gamma1 is not None else 0.95 * self.gamma0

    @property
    def gamma_eff(self) -> float:
        if self.gamma is not None:
            return self.gamma
        return 0.95 * (2 * self.l - self.n) / (2 * self.l)

    @property
    def t_vec(self) -> np.ndarray:
        return np.asarray(self.t, dtype=float)

    @property
    def coupling(self) -> float:
        """σ|A|²"""
        return self.sigma * abs(self.A) ** 2

    @property
    def basis_size(self) -> int:
        return (2 * self.R + 1) ** self.n

    def rho(self, k: Optional[float] = None) -> float:
        """围道半径 ρ = k^{2l−n−δ}"""
        k = self.k if k is None else k
        return k ** (2 * self.l - self.n - self.delta)

    def window(self, k: Optional[float] = None) -> Tuple[float, float]:
        """ε(k,δ) 窗口"""
        k = self.k if k is None else k
        c = k ** (2 * self.l)
        r = self.rho(k)
        return c - r, c + r

    def with_(self, **changes) -> "ProblemParams":
        return replace(self, **changes)

    def check_amplitude(self, lam: Optional[float] = None):
        """振幅容许性: |σ||A|² < k^{γ₁}, σ|A|² < λ^γ"""
        lam = self.k ** (2 * self.l) if lam is None else lam
        g = abs(self.coupling)
        if g >= self.k ** self.gamma1_eff:
            raise ValidationError(
                f"振幅条件 |σ||A|² < k^γ₁ 不满足: |σ||A|²={g}, k^γ₁={self.k ** self.gamma1_eff}"
            )
        if self.coupling >= lam ** self.gamma_eff:
            raise ValidationError(
                f"振幅条件 σ|A|² < λ^γ 不满足: σ|A|²={self.coupling}, λ^γ={lam ** self.gamma_eff}"
            )
