"""
verify: 在配置点上跑完整不等式检查

    1. 线性问题: 级数 vs 稠密分解, 级数项界, 预解式界
    2. 非线性迭代: Cauchy 界与链, ψ/λ 收敛, 不动点性质, 解的界
    3. 残差 (Fourier 侧) 与网格残差比对
    4. ∇_t λ 有限差分 (Richardson, 偏离自由梯度)
    5. 以解的 λ 反求 κ, 检查 h 界与 κ 回到载波半径
    6. 规范 A → Ae^{iφ} 与缩放 (σ, A) → (σ/4, 2A) 不变性
    7. σ 依次缩小十倍时 (λ, ũ) 回到 σ = 0 的线性解
"""

import cmath
import logging
from typing import Any, Dict, Tuple

from bloch.gradient import grad_lambda_fd
from bloch.operator import assemble_at, locate_carrier, p_vec
from bloch.oracle import DenseOracleSolver
from bloch.series import SeriesSolver, check_term_bounds
from fixpoint.iteration import CROSSCHECK, FALLBACK, coupling_sequence
from helpers.bounds import BoundLedger
from helpers.config import RunConfig
from isosurf.surface import iso_setup, kappa_solve
from runner.pipeline import TERM_BOUND_ORDERS, RunOutcome, residual_checks, solve_nonlinear

logger = logging.getLogger("polyharmonic.verify")

INVARIANCE_RTOL = 1e-10
GAUGE_PHASE = 0.7
CONTINUITY_FACTOR = 2.0
CONTINUITY_ATOL = 1e-12


def _linear_checks(cfg: RunConfig, ledger: BoundLedger) -> Dict[str, Any]:
    p = cfg.params
    j, _, _ = locate_carrier(p)
    op = assemble_at(p, cfg.potential, p.t, j)
    pair = SeriesSolver().solve(op, p.A, ledger)
    check_term_bounds(op, min(TERM_BOUND_ORDERS, p.r_max), ledger)
    out: Dict[str, Any] = {"lambda_series": pair.lam, "size": op.size}
    if op.size <= cfg.dense_limit:
        ref = DenseOracleSolver(cfg.dense_limit).solve(op, p.A)
        rel = abs(pair.lam - ref.lam) / abs(ref.lam)
        col = (pair.normalized_column() - ref.normalized_column()).star_norm()
        ledger.check("series_vs_dense_lambda", rel, 1e-8)
        ledger.check("series_vs_dense_column", col, 1e-6)
        out.update({"lambda_dense": ref.lam, "rel_lambda_diff": rel, "column_diff": col})
    else:
        logger.warning(f"矩阵维数 {op.size} 超过稠密上限 {cfg.dense_limit}, 跳过级数/稠密比对")
    return out


def _rel(a, b) -> float:
    scale = max(abs(b), 1e-300)
    return abs(a - b) / scale


def _invariance_checks(cfg: RunConfig, rec, ledger: BoundLedger) -> Dict[str, Any]:
    p = cfg.params
    variants = {
        "gauge": p.with_(A=p.A * cmath.exp(1j * GAUGE_PHASE)),
        "scaling": p.with_(sigma=p.sigma / 4.0, A=2.0 * p.A),
    }
    out = {}
    for name, q in variants.items():
        _, other = solve_nonlinear(cfg, params=q)
        d_lam = _rel(other.lam, rec.lam)
        d_u = (other.u_tilde - rec.u_tilde).star_norm()
        ledger.check(f"{name}_lambda", d_lam, INVARIANCE_RTOL)
        ledger.check(f"{name}_u_tilde", d_u, INVARIANCE_RTOL)
        out[name] = {"rel_lambda_diff": d_lam, "u_tilde_diff": d_u}
    return out


def _continuity_checks(cfg: RunConfig, rec, ledger: BoundLedger) -> Dict[str, Any]:
    """σ → 0 时 (λ, ũ) 连续地回到线性解"""
    p = cfg.params
    if p.sigma == 0:
        return {}
    _, linear = solve_nonlinear(cfg, params=p.with_(sigma=0.0))
    A2 = abs(p.A) ** 2
    prev = (rec.u_tilde - linear.u_tilde).star_norm()
    rows = []
    for i, s in enumerate(coupling_sequence(p.sigma)):
        _, other = solve_nonlinear(cfg, params=p.with_(sigma=s))
        d_lam = abs(other.lam - linear.lam)
        d_u = (other.u_tilde - linear.u_tilde).star_norm()
        ledger.check(f"sigma_continuity_lambda_{i}", d_lam, CONTINUITY_FACTOR * s * A2)
        ledger.check(f"sigma_continuity_u_tilde_{i}", d_u, prev + CONTINUITY_ATOL)
        rows.append({"sigma": s, "lambda_diff": d_lam, "u_tilde_diff": d_u})
        prev = d_u
    return {"lambda_linear": linear.lam, "sequence": rows}


def _kappa_checks(cfg: RunConfig, rec, ledger: BoundLedger) -> Dict[str, Any]:
    """以解的 λ 沿载波方向反求 κ"""
    p = cfg.params
    lam = rec.lam.real if isinstance(rec.lam, complex) else rec.lam
    carrier = p_vec(rec.t, rec.j)
    k_c = float((carrier @ carrier) ** 0.5)
    nu = carrier / k_c
    mode = FALLBACK if cfg.mode == CROSSCHECK else cfg.mode
    setup = iso_setup(lam, p.A, p, cfg.potential)
    point = kappa_solve(lam, p.A, nu, p, cfg.potential, mode, ledger, setup=setup)
    ledger.check("kappa_root_certificate", point.resid, p.tol_root * lam)
    # 根容差换算成半径容差
    tol_k = 10.0 * p.tol_root * lam / (2 * p.l * k_c ** (2 * p.l - 1))
    ledger.check("kappa_carrier_roundtrip", abs(point.kappa - k_c), tol_k)
    return {"kappa": point.kappa, "h": point.h, "carrier_radius": k_c, "h_bound": setup.h_bound}


def run_verify(cfg: RunConfig) -> Tuple[int, RunOutcome]:
    """返回 (退出码, 报告); hard 模式失败 → 5"""
    p = cfg.params
    logger.info("=" * 60)
    logger.info(f"verify: {cfg.source}")
    logger.info("=" * 60)

    result, rec = solve_nonlinear(cfg)
    ledger = result.ledger
    report: Dict[str, Any] = {"subcommand": "verify", "config": cfg.source}

    report["linear"] = _linear_checks(cfg, ledger)
    report["residuals"] = residual_checks(rec, cfg.potential, p, ledger)
    report["solution"] = {
        "lambda": rec.lam,
        "lambda_linear": rec.lam_linear,
        "u_tilde_star": rec.u_tilde.star_norm(),
        "iterations": result.trace.iterations,
        "fixed_point_delta": result.fixed_point_delta,
    }
    report["gradient"] = grad_lambda_fd(p, result.W_fixed.remove_mean().resized(p.R), rec.t, rec.j,
                                        cfg.fd_step, ledger).to_dict()
    report["kappa"] = _kappa_checks(cfg, rec, ledger)
    report["invariance"] = _invariance_checks(cfg, rec, ledger)
    report["continuity"] = _continuity_checks(cfg, rec, ledger)

    report["checks"] = ledger.to_list()
    failed = ledger.hard_failures
    report["status"] = "ok" if not failed else "bound_violation"
    report["summary"] = {
        "mode": ledger.mode,
        "total": len(ledger.checks),
        "failed": len(ledger.failures),
        "hard_failed": len(failed),
    }
    logger.info(
        f"verify 完成: {len(ledger.checks)} 项检查, 失败 {len(ledger.failures)} 项 (hard {len(failed)})"
    )
    code = 5 if failed else 0
    return code, RunOutcome(report, ledger)
