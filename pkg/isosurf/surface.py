"""
等能面 D(λ, A)

对方向 ν 求 κ 使非线性本征值 λ(κν, A) = λ:
    k = λ^{1/2l},  I = [k − k^{−2l+1+γ₀}, k + k^{−2l+1+γ₀}]
    k̃ = (λ − σ|A|²)^{1/2l},  h = κ − k̃
求根用带二分保护的 Newton, 导数模型 ∂λ/∂κ ≈ 2lκ^{2l−1}。
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gamma as gamma_fn

from fixpoint.iteration import FALLBACK, iterate
from fixpoint.solution import assemble_solution
from fixpoint.threshold import k1_threshold
from helpers.bounds import BoundLedger, ledger_for
from helpers.errors import (
    NeighborhoodExit,
    NoConvergence,
    NoRootInInterval,
    PolyharmonicError,
    Resonant,
    ValidationError,
)
from lattice.field import FourierField
from lattice.params import ProblemParams
from nonres.scan import decompose_report, direction_decompose, sample_direction

logger = logging.getLogger("polyharmonic.isosurf")

MAX_ROOT_ITER = 60
GRAD_ROOT_RTOL = 1e-14
DEFAULT_ANGLE_STEP = 5e-5
GRAD_RICHARDSON_RTOL = 1e-3

STATUS_OK = "ok"


@dataclass
class IsoPoint:
    nu: Tuple[float, ...]
    kappa: Optional[float]
    h: Optional[float]
    iterations: int
    resid: Optional[float]
    status: str = STATUS_OK
    k_tilde: Optional[float] = None
    index: int = -1

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    def to_row(self) -> List:
        return list(self.nu) + [self.kappa, self.h, self.resid, self.iterations, self.status]


@dataclass
class IsoSetup:
    """一次等能面计算共用的标量"""

    lam: float
    k: float
    k_tilde: float
    lo: float
    hi: float
    k1: float
    h_bound: float
    grad_bound: float
    extra: Dict = field(default_factory=dict)


def iso_setup(lam: float, A: complex, params: ProblemParams, V: FourierField) -> IsoSetup:
    l, g0, delta, n = params.l, params.gamma0, params.delta, params.n
    if lam <= 0:
        raise ValidationError(f"能量 λ 必须为正, 当前 {lam}")
    g = params.sigma * abs(A) ** 2
    if lam - g <= 0:
        raise ValidationError(f"需要 λ > σ|A|², 当前 λ={lam}, σ|A|²={g}")
    k = lam ** (1.0 / (2 * l))
    w = k ** (-2 * l + 1 + g0)
    c = params.bound_const
    return IsoSetup(
        lam=lam,
        k=k,
        k_tilde=(lam - g) ** (1.0 / (2 * l)),
        lo=k - w,
        hi=k + w,
        k1=k1_threshold(V.star_norm(), params),
        h_bound=c * (1.0 + abs(g)) * k ** (-2 * l + 1 - g0 + delta),
        grad_bound=c * (1.0 + abs(g)) * k ** (-2 * l + n - g0 + 2 * delta),
    )


def lambda_of_kappa(
    kappa: float,
    nu,
    A: complex,
    params: ProblemParams,
    V: FourierField,
    mode: str = FALLBACK,
    dense_limit: int = 8000,
):
    """载波向量 κν 处完整非线性流程给出的 λ"""
    p = params.with_(A=complex(A), k=float(kappa))
    t, _ = direction_decompose(p, kappa, nu)
    report = decompose_report(p, kappa, nu)
    if not report.passed:
        raise Resonant(
            f"κν 不在非共振集内 (κ={kappa!r}, 窗口 {report.window_count}, margin={report.margin:.3e})"
        )
    result = iterate(V, p, t=t, mode=mode, dense_limit=dense_limit, ledger=BoundLedger())
    rec = assemble_solution(result.W_fixed, V, p, result.stage, BoundLedger())
    lam = rec.lam
    if isinstance(lam, complex) and V.hermitian:
        lam = lam.real
    return lam


def safeguarded_newton(
    f: Callable[[float], float],
    x0: float,
    lo: float,
    hi: float,
    slope: Callable[[float], float],
    tol: float,
) -> Tuple[float, float, int]:
    """带二分保护的 Newton; 假定 f 在 [lo, hi] 上单增。返回 (x, f(x), 求值次数)"""
    a, b = lo, hi
    x = min(max(x0, lo), hi)
    fx = f(x)
    evals = 1
    for _ in range(MAX_ROOT_ITER):
        if abs(fx) <= tol:
            return x, fx, evals
        if fx < 0:
            a = x
        else:
            b = x
        if b - a <= 4.0 * np.finfo(float).eps * max(abs(a), abs(b)):
            break
        x_new = x - fx / slope(x)
        if not (a < x_new < b):
            x_new = 0.5 * (a + b)
        x = x_new
        fx = f(x)
        evals += 1

    # 失败时检查端点符号
    f_lo, f_hi = f(lo), f(hi)
    evals += 2
    if f_lo * f_hi > 0:
        raise NoRootInInterval(
            f"区间 [{lo!r}, {hi!r}] 端点同号: f(lo)={f_lo:.3e}, f(hi)={f_hi:.3e}"
        )
    raise NoConvergence(f"{MAX_ROOT_ITER} 步内未达到求根容差 {tol:.3e}, 末值 |f|={abs(fx):.3e}")


def kappa_solve(
    lam_target: float,
    A: complex,
    nu,
    params: ProblemParams,
    V: FourierField,
    mode: str = FALLBACK,
    ledger: Optional[BoundLedger] = None,
    tol_rel: Optional[float] = None,
    setup: Optional[IsoSetup] = None,
) -> IsoPoint:
    s = setup or iso_setup(lam_target, A, params, V)
    nu = tuple(float(x) for x in nu)
    report = decompose_report(params, s.k, nu)
    if not report.passed:
        raise Resonant(f"方向 ν={nu} 不在 B(λ) 内 (margin={report.margin:.3e})")

    l = params.l
    tol = (params.tol_root if tol_rel is None else tol_rel) * lam_target

    def f(kappa: float) -> float:
        return float(np.real(lambda_of_kappa(kappa, nu, A, params, V, mode))) - lam_target

    kappa, fk, evals = safeguarded_newton(
        f, s.k_tilde, s.lo, s.hi, lambda x: 2 * l * x ** (2 * l - 1), tol,
    )
    point = IsoPoint(
        nu=nu, kappa=kappa, h=kappa - s.k_tilde, iterations=evals, resid=abs(fk), k_tilde=s.k_tilde,
    )
    if ledger is not None:
        ledger.check("kappa_in_I", abs(kappa - s.k), s.hi - s.k)
        ledger.check("kappa_h", abs(point.h), s.h_bound)
    logger.debug(f"ν={nu}: κ={kappa!r}, h={point.h:.3e}, 求值 {evals} 次")
    return point


def solve_direction(
    index: int,
    lam: float,
    A: complex,
    params: ProblemParams,
    V: FourierField,
    seed: int,
    mode: str = FALLBACK,
    setup: Optional[IsoSetup] = None,
) -> IsoPoint:
    """单个样本方向; 失败 (洞) 作为数据返回"""
    nu = tuple(float(x) for x in sample_direction(seed, index, params.n))
    try:
        point = kappa_solve(lam, A, nu, params, V, mode, setup=setup)
    except PolyharmonicError as e:
        return IsoPoint(
            nu=nu, kappa=None, h=None, iterations=0, resid=None,
            status=f"{type(e).__name__}: {e}", index=index,
        )
    point.index = index
    return point


def surface_sample(
    lam: float,
    A: complex,
    params: ProblemParams,
    V: FourierField,
    N: int,
    seed: int,
    mode: str = FALLBACK,
) -> List[IsoPoint]:
    if N < 1:
        raise ValidationError(f"采样数 N 必须 ≥ 1, 当前 {N}")
    setup = iso_setup(lam, A, params, V)
    points = [solve_direction(i, lam, A, params, V, seed, mode, setup) for i in range(N)]
    holes = sum(1 for p in points if not p.ok)
    logger.info(f"等能面采样: {N} 个方向, 洞 {holes} 个")
    return points


def check_surface(points: Sequence[IsoPoint], setup: IsoSetup, ledger: BoundLedger):
    for p in points:
        if p.ok:
            ledger.check(f"kappa_h_{p.index}", abs(p.h), setup.h_bound)


# ---------- 切向梯度 ----------

def tangent_basis(nu) -> List[np.ndarray]:
    """n−1 个与 ν 正交的单位向量, 由标准基 Gram–Schmidt 得到"""
    nu = np.asarray(nu, dtype=float)
    n = nu.shape[0]
    drop = int(np.argmax(np.abs(nu)))
    basis: List[np.ndarray] = [nu / np.linalg.norm(nu)]
    out: List[np.ndarray] = []
    for s in range(n):
        if s == drop:
            continue
        v = np.zeros(n)
        v[s] = 1.0
        for b in basis:
            v = v - np.dot(b, v) * b
        v = v / np.linalg.norm(v)
        basis.append(v)
        out.append(v)
    return out


@dataclass
class TangentGradient:
    components: np.ndarray
    components_half: np.ndarray
    rel_change: float

    @property
    def magnitude(self) -> float:
        return float(np.linalg.norm(self.components_half))

    def to_dict(self) -> Dict:
        return {
            "components": [float(x) for x in self.components],
            "components_half": [float(x) for x in self.components_half],
            "magnitude": self.magnitude,
            "rel_change": self.rel_change,
        }


def _h_along(point, tau, step, lam, A, params, V, mode, setup) -> float:
    nu = np.asarray(point.nu) + step * tau
    nu = nu / np.linalg.norm(nu)
    report = decompose_report(params, setup.k, nu)
    if not report.passed:
        raise NeighborhoodExit(f"切向模板方向 {tuple(nu)} 不在 B(λ) 内 (margin={report.margin:.3e})")
    p = kappa_solve(lam, A, nu, params, V, mode, tol_rel=GRAD_ROOT_RTOL, setup=setup)
    return p.h


def grad_h_fd(
    point: IsoPoint,
    lam: float,
    A: complex,
    params: ProblemParams,
    V: FourierField,
    step: Optional[float] = None,
    mode: str = FALLBACK,
    ledger: Optional[BoundLedger] = None,
) -> TangentGradient:
    """∇_ν h 沿切向的中心差分, 步长减半做比较"""
    if not point.ok:
        raise ValidationError(f"洞上的点无法求梯度: {point.status}")
    step = DEFAULT_ANGLE_STEP if step is None else step
    setup = iso_setup(lam, A, params, V)
    taus = tangent_basis(point.nu)

    def diff(s: float) -> np.ndarray:
        out = []
        for tau in taus:
            hp = _h_along(point, tau, s, lam, A, params, V, mode, setup)
            hm = _h_along(point, tau, -s, lam, A, params, V, mode, setup)
            out.append((hp - hm) / (2.0 * s))
        return np.array(out)

    g_full = diff(step)
    g_half = diff(0.5 * step)
    scale = max(float(np.linalg.norm(g_half)), setup.grad_bound * 1e-9)
    rel = float(np.linalg.norm(g_half - g_full)) / scale
    grad = TangentGradient(components=g_full, components_half=g_half, rel_change=rel)

    if ledger is not None:
        ledger.check("grad_h", grad.magnitude, setup.grad_bound)
        soft = BoundLedger(mode="soft")
        soft.check("grad_h_richardson", rel, GRAD_RICHARDSON_RTOL)
        ledger.extend(soft)
    logger.info(f"∇_ν h at ν={point.nu}: |∇h|={grad.magnitude:.3e} (界 {setup.grad_bound:.3e})")
    return grad


# ---------- 测度 ----------

def sphere_area(n: int) -> float:
    """ω_{n−1} = 2π^{n/2}/Γ(n/2)"""
    return 2.0 * math.pi ** (n / 2.0) / float(gamma_fn(n / 2.0))


def surface_measure_report(points: Sequence[IsoPoint], lam: float, params: ProblemParams) -> Dict:
    n = params.n
    k = lam ** (1.0 / (2 * params.l))
    N = len(points)
    kept = [p for p in points if p.ok]
    fraction = len(kept) / N if N else 0.0
    jac = float(np.mean([(p.kappa / k) ** (n - 1) for p in kept])) if kept else 1.0
    ratio = fraction * jac
    stderr = math.sqrt(fraction * (1.0 - fraction) / N) * jac if N else 0.0
    whole = sphere_area(n) * k ** (n - 1)
    return {
        "k": k,
        "N": N,
        "kept": len(kept),
        "fraction": fraction,
        "jacobian": jac,
        "ratio": ratio,
        "stderr": stderr,
        "measure": whole * ratio,
        "sphere_measure": whole,
    }


def polar_rows(points: Sequence[IsoPoint]) -> List[Tuple[float, float]]:
    """n = 2 时的 (θ, κ) 绘图数据"""
    rows = []
    for p in points:
        if p.ok and len(p.nu) == 2:
            rows.append((math.atan2(p.nu[1], p.nu[0]), p.kappa))
    return sorted(rows)


def setup_ledger(setup: IsoSetup, bounds: str) -> BoundLedger:
    return ledger_for(bounds, setup.k, setup.k1)


def sign_changes_on_I(
    lam: float,
    A: complex,
    nu,
    params: ProblemParams,
    V: FourierField,
    points: int = 9,
    mode: str = FALLBACK,
) -> int:
    """在 I 上等距取点, 统计 λ(κν) − λ 的变号次数"""
    s = iso_setup(lam, A, params, V)
    grid = np.linspace(s.lo, s.hi, points)
    vals = [float(np.real(lambda_of_kappa(x, nu, A, params, V, mode))) - lam for x in grid]
    signs = np.sign(vals)
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def empirical_constant(points: Sequence[IsoPoint], setup: IsoSetup, params: ProblemParams) -> float:
    """使 |h| ≤ c(1+|σ||A|²)k^{−2l+1−γ₀+δ} 成立的最小 c"""
    if not points:
        return 0.0
    unit = setup.h_bound / params.bound_const
    return max((abs(p.h) / unit for p in points if p.ok), default=0.0)
