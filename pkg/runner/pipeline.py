"""
子命令编排

linear / solve 为单次求解, 顺序执行;
nonres / isosurface 在样本点之间并行 (asyncio.to_thread + Semaphore),
结果按样本序号排回, 与并发数无关。
"""

import asyncio
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

from bloch.operator import assemble_at, locate_carrier, log_operator
from bloch.oracle import DenseOracleSolver
from bloch.series import SeriesSolver, check_term_bounds
from fixpoint.iteration import CROSSCHECK, FALLBACK, STRICT, fixed_point_check, iterate
from fixpoint.solution import assemble_solution, grid_residual
from fixpoint.threshold import k1_threshold
from fixpoint.trace import IterationTrace, lambda_convergence_check, psi_convergence_check
from helpers.bounds import BoundLedger, ledger_for
from helpers.config import RunConfig
from helpers.data_logger import write_csv
from isosurf.surface import (
    IsoPoint,
    check_surface,
    empirical_constant,
    grad_h_fd,
    iso_setup,
    polar_rows,
    setup_ledger,
    solve_direction,
    surface_measure_report,
)
from nonres.measure import MeasureAccumulator, sample_report
from nonres.scan import required_scan_radius, sample_direction

logger = logging.getLogger("polyharmonic.pipeline")

TERM_BOUND_ORDERS = 6
RESIDUAL_TOL = 1e-7
RESIDUAL_FLOOR = 1e-13
GRID_FACTOR = 10.0


@dataclass
class RunOutcome:
    """子命令结果: JSON 报告 + 账本 (由入口决定退出码)"""

    report: Dict[str, Any]
    ledger: BoundLedger = field(default_factory=BoundLedger)


def dry_run_summary(cfg: RunConfig) -> Dict[str, Any]:
    p = cfg.params
    lo, hi = p.window()
    return {
        "n": p.n,
        "l": p.l,
        "delta": p.delta,
        "gamma0": p.gamma0,
        "k": p.k,
        "k1": k1_threshold(cfg.potential.star_norm(), p),
        "window": [lo, hi],
        "rho": p.rho(),
        "lattice_size": p.basis_size,
        "scan_radius": p.scan_radius or required_scan_radius(p, p.t, p.k) + 1,
        "t": list(p.t),
        "mode": cfg.mode,
        "bounds": cfg.bounds,
    }


# ---------- linear ----------

def run_linear(cfg: RunConfig, oracle: bool = False, dump: Optional[str] = None) -> RunOutcome:
    p = cfg.params
    j, k, report = locate_carrier(p)
    V = cfg.potential.remove_mean().resized(p.R)
    ledger = ledger_for(cfg.bounds, k, k1_threshold(V.star_norm(), p))
    op = assemble_at(p, V, p.t, j)
    log_operator(op)
    if dump:
        op.dump(dump)

    pair = SeriesSolver().solve(op, p.A, ledger)
    check_term_bounds(op, min(TERM_BOUND_ORDERS, p.r_max), ledger)

    out: Dict[str, Any] = {
        "subcommand": "linear",
        "nonresonance": report.to_dict(),
        "series": pair.to_dict(),
    }
    if oracle:
        ref = DenseOracleSolver(cfg.dense_limit).solve(op, p.A)
        rel = abs(pair.lam - ref.lam) / abs(ref.lam)
        col = (pair.normalized_column() - ref.normalized_column()).star_norm()
        ledger.check("series_vs_dense_lambda", rel, 1e-8)
        ledger.check("series_vs_dense_column", col, 1e-6)
        out["dense"] = {
            "lambda": ref.lam,
            "residual_2": ref.diagnostics["residual_2"],
            "rel_lambda_diff": rel,
            "column_diff": col,
        }
    out["bound_checks"] = ledger.to_list()

    if cfg.csv:
        write_csv(cfg.csv, ["r", "g_abs", "G_col_norm"],
                  ([t.get("r"), t.get("g_abs"), t.get("G_col_norm")] for t in pair.termLog))
    return RunOutcome(out, ledger)


# ---------- solve ----------

def trace_checks(trace: IterationTrace, params, ledger: BoundLedger):
    trace.check_cauchy(ledger)
    trace.check_cauchy_chain(ledger)
    psi_convergence_check(trace, params, ledger)
    lambda_convergence_check(trace, params, ledger)


def residual_checks(rec, V, params, ledger: BoundLedger) -> Dict[str, float]:
    grid = grid_residual(rec, V, params)
    ledger.check("residual", rec.residual_star, RESIDUAL_TOL)
    hi, lo = max(rec.residual_star, grid), min(rec.residual_star, grid)
    ledger.check("residual_vs_grid", (hi + RESIDUAL_FLOOR) / (lo + RESIDUAL_FLOOR), GRID_FACTOR)
    return {"residual": rec.residual_star, "grid_residual": grid}


def solve_nonlinear(cfg: RunConfig, params=None, strict: bool = False):
    """iterate + assemble_solution, 全部检查记入同一账本"""
    p = params or cfg.params
    mode = STRICT if strict else cfg.mode
    result = iterate(
        cfg.potential, p, mode=mode, keep_psi=cfg.keep_psi,
        dense_limit=cfg.dense_limit, bounds=cfg.bounds,
    )
    ledger = result.ledger
    trace_checks(result.trace, p, ledger)
    fixed_point_check(result, p, ledger)
    rec = assemble_solution(
        result.W_fixed, cfg.potential, p, result.stage, ledger, truncation=result.trace.truncation
    )
    return result, rec


def run_solve(cfg: RunConfig, strict: bool = False) -> RunOutcome:
    p = cfg.params
    result, rec = solve_nonlinear(cfg, strict=strict)
    ledger = result.ledger
    residuals = residual_checks(rec, cfg.potential, p, ledger)
    rec.bound_checks = ledger.to_list()

    out = {
        "subcommand": "solve",
        "solution": rec.to_dict(),
        "residuals": residuals,
        "trace": result.trace.get_stats(),
        "fixed_point_delta": result.fixed_point_delta,
        "fallbacks": result.stage.fallbacks,
    }
    if cfg.csv:
        write_csv(cfg.csv, IterationTrace.CSV_HEADER, result.trace.to_rows())
    return RunOutcome(out, ledger)


# ---------- 样本并行 ----------

async def gather_indexed(
    fn: Callable[[int], Any],
    count: int,
    workers: int,
    stop: Optional[asyncio.Event] = None,
    cancelled: Optional[Callable[[int], Any]] = None,
) -> List[Any]:
    """fn(0..count−1) 在线程中执行, 并发上限 workers, 结果按序号返回"""
    sem = asyncio.Semaphore(max(1, workers))

    async def one(i: int):
        async with sem:
            if stop is not None and stop.is_set():
                return cancelled(i) if cancelled else None
            return await asyncio.to_thread(fn, i)

    return list(await asyncio.gather(*(one(i) for i in range(count))))


# ---------- nonres ----------

async def run_nonres(
    cfg: RunConfig,
    samples: int,
    seed: int,
    workers: int = 1,
    stop: Optional[asyncio.Event] = None,
) -> RunOutcome:
    p = cfg.params
    k = p.k

    def one(i: int):
        return sample_report(p, k, seed, i)

    results = await gather_indexed(one, samples, workers, stop)
    acc = MeasureAccumulator()
    rows = []
    for item in results:
        if item is None:
            continue
        nu, rep = item
        acc.add_report(rep)
        j = list(rep.j) if rep.j is not None else [""] * p.n
        rows.append(list(nu) + [rep.passed, rep.margin] + j)

    est = acc.estimate(k)
    logger.info(f"非共振采样: {acc.get_stats()}")
    if cfg.csv:
        header = [f"nu{s}" for s in range(p.n)] + ["pass", "margin"] + [f"j{s}" for s in range(p.n)]
        write_csv(cfg.csv, header, rows)
    return RunOutcome({"subcommand": "nonres", "seed": seed, "measure": est.to_dict()})


# ---------- isosurface ----------

async def run_isosurface(
    cfg: RunConfig,
    lam: float,
    samples: int,
    polar: Optional[str] = None,
    grad_points: int = 0,
    workers: int = 1,
    stop: Optional[asyncio.Event] = None,
) -> RunOutcome:
    p, V, A = cfg.params, cfg.potential, cfg.params.A
    # 等能面每点要多次完整求解, 不做逐步稠密比对
    mode = FALLBACK if cfg.mode == CROSSCHECK else cfg.mode
    setup = iso_setup(lam, A, p, V)
    ledger = setup_ledger(setup, cfg.bounds)
    logger.info("=" * 60)
    logger.info(
        f"等能面: λ={lam!r}, k={setup.k:.9f}, k̃={setup.k_tilde:.9f}, "
        f"I=[{setup.lo:.9f}, {setup.hi:.9f}], 样本 {samples}"
    )
    logger.info("=" * 60)

    def one(i: int) -> IsoPoint:
        return solve_direction(i, lam, A, p, V, cfg.seed, mode, setup)

    def cancelled(i: int) -> IsoPoint:
        nu = tuple(float(x) for x in sample_direction(cfg.seed, i, p.n))
        return IsoPoint(nu=nu, kappa=None, h=None, iterations=0, resid=None, status="cancelled", index=i)

    points: List[IsoPoint] = await gather_indexed(one, samples, workers, stop, cancelled)
    check_surface(points, setup, ledger)
    for pt in points:
        if pt.ok:
            ledger.check(f"root_certificate_{pt.index}", pt.resid, p.tol_root * lam)

    grads = []
    for pt in [q for q in points if q.ok][:grad_points]:
        grads.append({"index": pt.index, **grad_h_fd(pt, lam, A, p, V, None, mode, ledger).to_dict()})

    measure = surface_measure_report(points, lam, p)
    out = {
        "subcommand": "isosurface",
        "lambda": lam,
        "seed": cfg.seed,
        "k": setup.k,
        "k_tilde": setup.k_tilde,
        "interval": [setup.lo, setup.hi],
        "h_bound": setup.h_bound,
        "empirical_c": empirical_constant(points, setup, p),
        "holes": [{"index": q.index, "status": q.status} for q in points if not q.ok],
        "measure": measure,
        "gradients": grads,
        "bound_checks": ledger.to_list(),
    }
    if cfg.csv:
        header = [f"nu{s}" for s in range(p.n)] + ["kappa", "h", "resid", "iterations", "status"]
        write_csv(cfg.csv, header, (q.to_row() for q in points))
    if polar:
        if p.n != 2:
            logger.warning(f"极坐标数据只对 n=2 有意义, 当前 n={p.n}, 跳过")
        else:
            write_csv(polar, ["theta", "kappa"], polar_rows(points))
    return RunOutcome(out, ledger)
