"""
运行配置

配置文件为 dotenv 格式, 每行一个 key=value, # 开头为注释, 用 python-dotenv 的解析器读取:

    n=2
    l=2
    delta=0.9
    sigma=0.1
    A=1+0j
    nu=0.6,0.8
    potential='[{"q":[1,0],"re":1,"im":0},{"q":[-1,0],"re":1,"im":0}]'

向量用逗号分隔, 复数用 Python 字面量 (1+0.5j), 布尔值 true/false,
势函数是单行 JSON 列表 (用单引号包住)。除 n, l, potential 外所有键都有默认值。
"""

import io
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Optional, Tuple

from dotenv.parser import parse_stream

from fixpoint.iteration import CROSSCHECK, FALLBACK, STRICT
from helpers.errors import ParseError, ValidationError
from lattice.field import FourierField
from lattice.params import ProblemParams
from nonres.scan import direction_decompose

logger = logging.getLogger("polyharmonic.config")


def _int(s: str) -> int:
    return int(s)


def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"非有限值 {s}")
    return v


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"无法识别的布尔值 {s!r}")


def _vec(s: str) -> Tuple[float, ...]:
    return tuple(_float(x) for x in s.split(",") if x.strip())


def _complex(s: str) -> complex:
    return complex(s.replace(" ", ""))


def _json(s: str):
    return json.loads(s)


def _str(s: str) -> str:
    return s


# 键 → 解析函数
KEYS: Dict[str, Callable[[str], Any]] = {
    "n": _int,
    "l": _int,
    "potential": _json,
    "delta": _float,
    "sigma": _float,
    "A": _complex,
    "t": _vec,
    "nu": _vec,
    "k": _float,
    "R": _int,
    "r_max": _int,
    "n_quad": _int,
    "tol_fix": _float,
    "tol_root": _float,
    "k0_override": _float,
    "gamma1": _float,
    "gamma": _float,
    "scan_radius": _int,
    "max_iter": _int,
    "bound_const": _float,
    "hermitian": _bool,
    "strict": _bool,
    "crosscheck": _bool,
    "bounds": _str,
    "seed": _int,
    "keep_psi": _bool,
    "dense_limit": _int,
    "fd_step": _float,
    "out": _str,
    "csv": _str,
}
REQUIRED = ("n", "l", "potential")
PARAM_KEYS = (
    "sigma", "A", "k", "R", "r_max", "n_quad", "tol_fix", "tol_root", "k0_override",
    "gamma1", "gamma", "scan_radius", "max_iter", "bound_const",
)


@dataclass
class RunConfig:
    params: ProblemParams
    potential: FourierField
    mode: str = CROSSCHECK
    bounds: str = "hard"
    seed: int = 0
    keep_psi: bool = True
    dense_limit: int = 8000
    fd_step: Optional[float] = None
    nu: Optional[Tuple[float, ...]] = None
    out: Optional[str] = None
    csv: Optional[str] = None
    source: str = "<string>"
    raw: Dict[str, str] = field(default_factory=dict)

    @property
    def hermitian(self) -> bool:
        return self.potential.hermitian

    def with_params(self, **changes) -> "RunConfig":
        return replace(self, params=self.params.with_(**changes))


def default_nu(n: int) -> Tuple[float, ...]:
    """(1, √2, √3, …) 归一化"""
    v = [math.sqrt(i + 1) for i in range(n)]
    norm = math.sqrt(sum(x * x for x in v))
    return tuple(x / norm for x in v)


def _read_bindings(text: str, source: str) -> Dict[str, Tuple[str, int, int]]:
    """key → (原始值, 行号, 值所在列)"""
    out: Dict[str, Tuple[str, int, int]] = {}
    for b in parse_stream(io.StringIO(text)):
        line = b.original.line
        if b.error:
            raise ParseError(f"{source}: 无法解析的行 {b.original.string.strip()!r}", line=line, column=1)
        if b.key is None:
            continue
        if b.value is None:
            raise ParseError(f"{source}: 键 {b.key} 缺少 '=' 与取值", line=line, column=1)
        if b.key in out:
            raise ParseError(f"{source}: 键 {b.key} 重复 (首次出现在第 {out[b.key][1]} 行)", line=line, column=1)
        column = b.original.string.find("=") + 2
        out[b.key] = (b.value, line, column)
    return out


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    bindings = _read_bindings(text, source)

    unknown = sorted(set(bindings) - set(KEYS))
    if unknown:
        raise ValidationError(f"{source}: 未知配置键 {unknown}")
    missing = [k for k in REQUIRED if k not in bindings]
    if missing:
        raise ValidationError(f"{source}: 缺少必填配置键 {missing}")

    values: Dict[str, Any] = {}
    for key, (raw, line, column) in bindings.items():
        try:
            values[key] = KEYS[key](raw)
        except (ValueError, TypeError) as e:
            raise ParseError(f"{source}: 键 {key} 的值 {raw!r} 无法解析: {e}", line=line, column=column)

    n, l = values["n"], values["l"]
    delta = values.get("delta", 0.9 * (2 * l - n) / 2.0)
    kwargs = {k: values[k] for k in PARAM_KEYS if k in values}

    if "t" in values and "nu" in values:
        raise ValidationError(f"{source}: t 与 nu 只能给出一个")

    # 先用 t=0 校验标量约束, 再确定准动量
    params = ProblemParams(n=n, l=l, delta=delta, t=values.get("t", ()), **kwargs)
    nu = None
    if "t" not in values:
        nu = values.get("nu", default_nu(n))
        t, _ = direction_decompose(params, params.k, nu)
        params = params.with_(t=t)
    params.check_amplitude()

    records = values["potential"]
    if not isinstance(records, list):
        raise ValidationError(f"{source}: potential 必须是记录列表")
    potential = FourierField.from_records(
        records, n=n, R=params.R, hermitian=values.get("hermitian", True)
    )
    if potential.mean != 0:
        raise ValidationError(f"{source}: 约定 v₀ = 0, 势函数零频系数为 {potential.mean}")

    if values.get("strict", False):
        mode = STRICT
    elif values.get("crosscheck", True):
        mode = CROSSCHECK
    else:
        mode = FALLBACK

    bounds = values.get("bounds", "hard")
    if bounds not in ("hard", "soft"):
        raise ValidationError(f"{source}: bounds 只能是 hard 或 soft, 当前 {bounds}")

    cfg = RunConfig(
        params=params,
        potential=potential,
        mode=mode,
        bounds=bounds,
        seed=values.get("seed", 0),
        keep_psi=values.get("keep_psi", True),
        dense_limit=values.get("dense_limit", 8000),
        fd_step=values.get("fd_step"),
        nu=tuple(nu) if nu is not None else None,
        out=values.get("out"),
        csv=values.get("csv"),
        source=source,
        raw={k: v[0] for k, v in bindings.items()},
    )
    logger.debug(f"配置已加载: {source} ({len(bindings)} 个键, 模式={mode}, bounds={bounds})")
    return cfg


def load_config(path: str) -> RunConfig:
    if not os.path.isfile(path):
        raise ValidationError(f"配置文件不存在: {path}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config_text(text, source=path)
