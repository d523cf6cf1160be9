"""
非共振集 χ₀(k,δ) 的成员检测

判据: 窗口 ε(k,δ) 内恰好一个 p_q^{2l}(t), 且
    min_{q≠j} |p_q^{2l}(t) − k^{2l}| > 2k^{2l−n−δ}
另含方向分解 kν = t + 2πj 与 B(λ) 判定、单位球面方向采样。
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Dict, Optional, Tuple

import numpy as np

from helpers.errors import BoxTooSmall, Resonant, ValidationError
from lattice.params import TWO_PI, ProblemParams

logger = logging.getLogger("polyharmonic.nonres")

NORM_TOL = 1e-12


@dataclass(frozen=True)
class NonResonanceReport:
    passed: bool
    j: Optional[Tuple[int, ...]]
    window_count: int
    margin: float
    k: float
    t: Tuple[float, ...] = field(default_factory=tuple)
    scan_radius: int = 0

    def to_dict(self) -> Dict:
        return {
            "pass": self.passed,
            "j": list(self.j) if self.j is not None else None,
            "window_count": self.window_count,
            "margin": self.margin,
            "k": self.k,
            "t": list(self.t),
        }


@lru_cache(maxsize=32)
def _scan_box(n: int, radius: int) -> np.ndarray:
    arr = np.array(list(product(range(-radius, radius + 1), repeat=n)), dtype=np.int64)
    arr.setflags(write=False)
    return arr


def required_scan_radius(params: ProblemParams, t, k: float) -> int:
    """覆盖 |p_q^{2l} − k^{2l}| < 4ρ 的全部格点所需的盒半径"""
    c = k ** (2 * params.l)
    k_hi = (c + 4.0 * params.rho(k)) ** (1.0 / (2 * params.l))
    t_inf = float(np.max(np.abs(np.asarray(t, dtype=float))))
    return int(math.floor((k_hi + t_inf) / TWO_PI))


def is_nonresonant(
    params: ProblemParams,
    t,
    k: Optional[float] = None,
    raise_on_fail: bool = False,
) -> NonResonanceReport:
    k = params.k if k is None else float(k)
    t = tuple(float(x) for x in t)
    if len(t) != params.n:
        raise ValidationError(f"准动量维数 {len(t)} 与 n={params.n} 不符")

    needed = required_scan_radius(params, t, k)
    if params.scan_radius is not None:
        if params.scan_radius < needed:
            raise BoxTooSmall(
                f"scan_radius={params.scan_radius} 不足以覆盖候选格点 (至少需要 {needed}), k={k}"
            )
        radius = params.scan_radius
    else:
        radius = needed + 1

    box = _scan_box(params.n, radius)
    p = np.asarray(t)[None, :] + TWO_PI * box
    d = np.sum(p * p, axis=1) ** params.l
    c = k ** (2 * params.l)
    rho = params.rho(k)
    gap = np.abs(d - c)

    window_count = int(np.count_nonzero(gap < rho))
    order = np.argsort(gap, kind="stable")
    best = int(order[0])
    margin = float(gap[order[1]] - 2.0 * rho)
    passed = window_count == 1 and margin > 0
    j = tuple(int(x) for x in box[best]) if passed else None

    report = NonResonanceReport(
        passed=passed, j=j, window_count=window_count, margin=margin,
        k=k, t=t, scan_radius=radius,
    )
    if not passed and raise_on_fail:
        raise Resonant(
            f"t={t} 在 k={k:.6f} 处共振: 窗口内 {window_count} 个格点, margin={margin:.6e}"
        )
    return report


def direction_decompose(params: ProblemParams, k: float, nu) -> Tuple[Tuple[float, ...], Tuple[int, ...]]:
    """kν = t + 2πj, t ∈ [0, 2π)ⁿ"""
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (params.n,):
        raise ValidationError(f"方向 ν 维数应为 {params.n}, 当前 {nu.shape}")
    norm = float(np.linalg.norm(nu))
    if abs(norm - 1.0) > NORM_TOL:
        raise ValidationError(f"方向 ν 必须是单位向量, ‖ν‖ = {norm!r}")
    x = k * nu
    j = np.floor(x / TWO_PI).astype(np.int64)
    t = x - TWO_PI * j
    # 舍入可能得到 t = 2π
    wrap = t >= TWO_PI
    j[wrap] += 1
    t[wrap] -= TWO_PI
    t[t < 0] = 0.0
    return tuple(float(v) for v in t), tuple(int(v) for v in j)


def decompose_report(params: ProblemParams, k: float, nu) -> NonResonanceReport:
    t, _ = direction_decompose(params, k, nu)
    return is_nonresonant(params, t, k)


def in_B(params: ProblemParams, k: float, nu) -> bool:
    return decompose_report(params, k, nu).passed


# ---------- 方向采样 ----------

def sample_direction(seed: int, index: int, n: int) -> np.ndarray:
    """第 index 个样本的方向, 来自 seed 派生的独立子流"""
    child = np.random.SeedSequence(seed, spawn_key=(index,))
    g = np.random.default_rng(child).standard_normal(n)
    return g / np.linalg.norm(g)
