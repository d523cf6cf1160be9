#!/usr/bin/env python3
"""
非线性多重调和方程 (−Δ)ˡu + Vu + σ|u|²u = λu 的拟周期解

Usage:
    python polyharmonic.py linear --config configs/reference.env --oracle
    python polyharmonic.py solve --config configs/reference.env
    python polyharmonic.py nonres --config configs/reference.env --samples 10000 --seed 7
    python polyharmonic.py isosurface --config configs/reference.env --lambda 810000 --samples 20
    python polyharmonic.py verify --config configs/reference.env
"""

import argparse
import asyncio
import os
import signal
import sys
from typing import Optional

from dotenv import load_dotenv

from helpers.config import load_config
from helpers.data_logger import write_json
from helpers.errors import PolyharmonicError
from helpers.logger import setup_logger
from runner.pipeline import dry_run_summary, run_isosurface, run_linear, run_nonres, run_solve
from runner.verify import run_verify


def parse_args(argv=None):
    parser = argparse.ArgumentParser(
        description="多重调和方程拟周期解: 级数、不动点迭代、非共振集与等能面"
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="配置文件 (dotenv 格式)")
    common.add_argument("--out", default=None, help="JSON 输出路径 (默认: stdout)")
    common.add_argument("--csv", default=None, help="CSV 侧文件路径")
    common.add_argument(
        "--dry-run", action="store_true",
        help="只校验配置并打印派生量 (γ₀, k₁, 窗口, 格点数), 不计算",
    )
    common.add_argument(
        "--log-level", default=None,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="日志级别 (默认: POLYHARMONIC_LOG_LEVEL 或 INFO)",
    )
    common.add_argument(
        "--workers", default=None, type=int,
        help="样本并行线程数 (默认: POLYHARMONIC_WORKERS 或 1)",
    )

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("linear", parents=[common], help="线性 Bloch 问题的级数解")
    p.add_argument("--oracle", action="store_true", help="同时做稠密分解比对")
    p.add_argument("--dump", default=None, help="把截断矩阵写到该路径 (文本, 首行注释给出基的顺序)")

    p = sub.add_parser("solve", parents=[common], help="非线性不动点迭代")
    p.add_argument("--strict", action="store_true", help="只用级数, 发散即报错")

    p = sub.add_parser("nonres", parents=[common], help="非共振集采样与测度估计")
    p.add_argument("--samples", required=True, type=int, help="方向样本数")
    p.add_argument("--seed", default=None, type=int, help="随机种子 (默认: 配置中的 seed)")

    p = sub.add_parser("isosurface", parents=[common], help="等能面 D(λ, A) 采样")
    p.add_argument("--lambda", dest="lam", required=True, type=float, help="目标能量 λ")
    p.add_argument("--samples", required=True, type=int, help="方向样本数")
    p.add_argument("--polar", default=None, help="n=2 时输出 (θ, κ) 绘图数据的路径")
    p.add_argument("--grad", default=0, type=int, help="对前若干个点做 ∇_ν h 差分检查 (默认: 0)")

    sub.add_parser("verify", parents=[common], help="在配置点上跑完整不等式检查")
    return parser.parse_args(argv)


async def main(argv=None) -> int:
    args = parse_args(argv)

    # 加载环境变量
    load_dotenv()
    level = args.log_level or os.getenv("POLYHARMONIC_LOG_LEVEL", "INFO")
    workers = args.workers or int(os.getenv("POLYHARMONIC_WORKERS", "1"))
    logger = setup_logger(level=level)

    stop = asyncio.Event()
    loop = asyncio.get_running_loop()

    def signal_handler(sig, frame):
        logger.info(f"收到信号 {sig}, 未开始的样本将标记为 cancelled...")
        loop.call_soon_threadsafe(stop.set)

    signal.signal(signal.SIGINT, signal_handler)
    signal.signal(signal.SIGTERM, signal_handler)

    try:
        cfg = load_config(args.config)
        if args.out:
            cfg.out = args.out
        if args.csv:
            cfg.csv = args.csv

        if args.dry_run:
            write_json({"subcommand": args.command, "dry_run": dry_run_summary(cfg)}, cfg.out)
            return 0

        logger.info("=" * 60)
        logger.info(f"{args.command}: 配置 {cfg.source}, n={cfg.params.n}, l={cfg.params.l}, k={cfg.params.k}")
        logger.info("=" * 60)

        code = 0
        if args.command == "linear":
            outcome = run_linear(cfg, oracle=args.oracle, dump=args.dump)
        elif args.command == "solve":
            outcome = run_solve(cfg, strict=args.strict)
        elif args.command == "nonres":
            seed = cfg.seed if args.seed is None else args.seed
            outcome = await run_nonres(cfg, args.samples, seed, workers, stop)
        elif args.command == "isosurface":
            outcome = await run_isosurface(
                cfg, args.lam, args.samples, args.polar, args.grad, workers, stop
            )
        else:
            code, outcome = run_verify(cfg)

        write_json(outcome.report, cfg.out)
        outcome.ledger.enforce()
        return code
    except PolyharmonicError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        logger.info("KeyboardInterrupt 收到")
        return 130
    except Exception as e:
        logger.error(f"致命错误: {e}", exc_info=True)
        return 1
    finally:
        signal.signal(signal.SIGINT, signal.SIG_DFL)
        signal.signal(signal.SIGTERM, signal.SIG_DFL)


def run(argv: Optional[list] = None) -> int:
    return asyncio.run(main(argv))


if __name__ == "__main__":
    sys.exit(run())
