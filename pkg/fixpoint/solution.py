"""
解的组装与 PDE 残差

    u(x) = A e^{i⟨p_j(t),x⟩}(1 + ũ(x)),  ũ = E 列 − δ₀
    λ = λ_{W̃} + σ|A|² Σ_q |E_{j+q,j}|²   (埃尔米特时等于 E_jj)

残差在平移格点 p_{j+q}(t) 上按 Fourier 系数计算:
    r_q = |p_{j+q}|^{2l} c_q + (V*c)_q + σ(|c|²*c)_q − λc_q
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from bloch.base import SpectralPair
from bloch.operator import free_eigenvalue, p_vec, symbol
from helpers.bounds import BoundLedger
from lattice.field import FourierField, LatticeIndex
from lattice.params import TWO_PI, ProblemParams

logger = logging.getLogger("polyharmonic.solution")


@dataclass
class SolutionRecord:
    lam: Any
    lam_linear: Any
    E_jj: complex
    mass: float
    j: LatticeIndex
    t: Tuple[float, ...]
    k: float
    A: complex
    sigma: float
    u_tilde: FourierField
    psi: FourierField
    W_fixed: FourierField
    residual_star: float = float("nan")
    truncation: float = 0.0
    bound_checks: List[Dict] = field(default_factory=list)
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        def num(x):
            if isinstance(x, complex):
                return {"re": x.real, "im": x.imag}
            return x

        return {
            "lambda": num(self.lam),
            "lambda_linear": num(self.lam_linear),
            "E_jj": num(complex(self.E_jj)),
            "column_mass": self.mass,
            "j": list(self.j),
            "t": list(self.t),
            "k": self.k,
            "A": num(complex(self.A)),
            "sigma": self.sigma,
            "u_tilde_star": self.u_tilde.star_norm(),
            "u_tilde": self.u_tilde.to_records(),
            "W_fixed": self.W_fixed.to_records(),
            "residual_star": self.residual_star,
            "truncation": self.truncation,
            "bound_checks": self.bound_checks,
            "diagnostics": self.diagnostics,
        }


def assemble_solution(
    W_fixed: FourierField,
    V: FourierField,
    params: ProblemParams,
    stage,
    ledger: Optional[BoundLedger] = None,
    truncation: float = 0.0,
) -> SolutionRecord:
    """在 W_fixed 上重新做一次线性求解 (记录级数界), 组装 λ 与 ũ

    λ 用列质量 Σ_q|E_{j+q,j}|² 而非 E_jj: 二者在埃尔米特势下相同,
    非埃尔米特时 E_jj 可为复数, 只作为诊断量 lambda_via_E_jj 输出。
    """
    ledger = ledger if ledger is not None else BoundLedger()
    pair: SpectralPair = stage.solve(W_fixed, ledger=ledger)
    k = pair.k
    col = pair.projCol
    mass = float(np.sum(np.abs(col.dense) ** 2))
    g = params.coupling

    lam = pair.lam + g * mass
    u_tilde = col.add_constant(-1.0)

    rec = SolutionRecord(
        lam=lam, lam_linear=pair.lam, E_jj=pair.E_jj, mass=mass,
        j=pair.j, t=stage.t, k=k, A=params.A, sigma=params.sigma,
        u_tilde=u_tilde, psi=pair.psi, W_fixed=W_fixed, truncation=truncation,
    )
    rec.diagnostics.update({
        "lambda_via_E_jj": num_real(pair.lam + g * pair.E_jj),
        "w0": num_real(W_fixed.mean),
        "method": pair.method,
    })

    gamma0, delta = params.gamma0, params.delta
    ledger.check(
        "solution_lambda",
        abs(lam - free_eigenvalue(params, stage.t, pair.j) - g),
        (1.0 + abs(g)) * k ** (-gamma0 + delta),
    )
    ledger.check("solution_u_tilde", u_tilde.star_norm(), k ** (-gamma0), strict=True)

    value, clipped = residual_terms(rec, V, params)
    rec.residual_star = value
    rec.truncation += clipped
    logger.info(
        f"解组装: λ={lam!r} (线性 {pair.lam!r}), ‖ũ‖_*={u_tilde.star_norm():.3e}, "
        f"残差={value:.3e}"
    )
    return rec


def num_real(x):
    x = complex(x)
    return x.real if x.imag == 0 else {"re": x.real, "im": x.imag}


def _shifted_symbol(rec: SolutionRecord, params: ProblemParams) -> np.ndarray:
    """|p_{j+q}(t)|^{2l} 排成 (2R+1)ⁿ 数组"""
    R, n = params.R, params.n
    axes = np.meshgrid(*([np.arange(-R, R + 1)] * n), indexing="ij")
    q = np.stack(axes, axis=-1)
    p = p_vec(rec.t, rec.j) + TWO_PI * q
    return symbol(p, params.l)


def residual_terms(rec: SolutionRecord, V: FourierField, params: ProblemParams) -> Tuple[float, float]:
    """(尺度化残差, 卷积裁剪质量)"""
    if rec.A == 0:
        return 0.0, 0.0
    R = params.R
    c = rec.psi.resized(R)
    Vc = V.resized(R).convolve(c, R)
    cubic = c.squared_modulus().convolve(c, R)
    clipped = Vc.clipped + abs(params.sigma) * (cubic.clipped + c.squared_modulus().clipped)

    r = (
        _shifted_symbol(rec, params) * c.dense
        + Vc.dense
        + params.sigma * cubic.dense
        - rec.lam * c.dense
    )
    value = float(np.sum(np.abs(r))) / (abs(rec.A) * rec.k ** (2 * params.l))
    return value, clipped


def residual(rec: SolutionRecord, V: FourierField, params: ProblemParams) -> float:
    return residual_terms(rec, V, params)[0]


def grid_residual(rec: SolutionRecord, V: FourierField, params: ProblemParams) -> float:
    """(4R)ⁿ 网格上取样 u, 逐点算非线性项, 再用 FFT 回到 Fourier 侧作用符号"""
    if rec.A == 0:
        return 0.0
    R, n = params.R, params.n
    M = 4 * R
    shape = (M,) * n

    def to_grid(F: FourierField) -> np.ndarray:
        C = np.zeros(shape, dtype=complex)
        for q, v in F.coeffs.items():
            C[tuple(x % M for x in q)] = v
        return np.fft.ifftn(C) * M ** n

    def box(values: np.ndarray) -> np.ndarray:
        coeffs = np.fft.fftn(values) / M ** n
        idx = np.ix_(*([np.arange(-R, R + 1) % M] * n))
        return coeffs[idx]

    u = to_grid(rec.psi.resized(R))
    v = to_grid(V.resized(R))
    nonlinear = box(v * u + params.sigma * np.abs(u) ** 2 * u)
    c = rec.psi.resized(R).dense
    r = _shifted_symbol(rec, params) * c + nonlinear - rec.lam * c
    return float(np.sum(np.abs(r))) / (abs(rec.A) * rec.k ** (2 * params.l))
