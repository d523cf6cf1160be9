"""
结果输出

JSON 写到 stdout 或 --out 文件; 浮点数用 repr (最短可往返表示), 复数写成 {re, im}。
CSV 侧文件用 csv.writer, 浮点数 .17g, 每行 flush。
"""

import csv
import json
import logging
import math
import os
import sys
from typing import Any, Iterable, List, Optional

import numpy as np

logger = logging.getLogger("polyharmonic.data")


def to_jsonable(obj: Any) -> Any:
    """numpy 标量/数组、复数、元组 → JSON 兼容对象"""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        c = complex(obj)
        return {"re": _finite(c.real), "im": _finite(c.imag)}
    if isinstance(obj, (float, np.floating)):
        return _finite(float(obj))
    return obj


def _finite(x: float):
    # JSON 不支持 NaN/inf
    return x if math.isfinite(x) else str(x)


def dumps(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), indent=2, ensure_ascii=False, sort_keys=False)


def write_json(obj: Any, path: Optional[str] = None):
    text = dumps(obj)
    if path is None:
        sys.stdout.write(text + "\n")
        sys.stdout.flush()
        return
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    logger.info(f"JSON 结果: {path}")


def format_cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (complex, np.complexfloating)):
        c = complex(v)
        return f"{c.real:.17g}{c.imag:+.17g}j"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _ensure_parent(path: str):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


class CsvLogger:
    """逐行写入的 CSV 文件"""

    def __init__(self, path: str, header: List[str]):
        self.path = path
        _ensure_parent(path)
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(header)
        self.rows = 0
        logger.info(f"CSV 输出: {path}")

    def log_row(self, row: Iterable[Any]):
        if self._writer:
            self._writer.writerow([format_cell(v) for v in row])
            self._fh.flush()
            self.rows += 1

    def log_rows(self, rows: Iterable[Iterable[Any]]):
        for row in rows:
            self.log_row(row)

    def close(self):
        if self._fh:
            self._fh.close()
            self._fh = None
            self._writer = None
        logger.info(f"CSV 已关闭: {self.path} ({self.rows} 行)")

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_csv(path: str, header: List[str], rows: Iterable[Iterable[Any]]) -> int:
    with CsvLogger(path, header) as out:
        out.log_rows(rows)
        return out.rows
