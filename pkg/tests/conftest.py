import math
import os
import tempfile

import numpy as np
import pytest

from lattice.field import FourierField
from lattice.params import ProblemParams
from nonres.scan import decompose_report, direction_decompose

# 日志文件不落在仓库 logs/ 下
os.environ.setdefault("POLYHARMONIC_LOG_DIR", tempfile.mkdtemp(prefix="polyharmonic_test_logs_"))


def cos_records(n: int, amplitude: float = 1.0):
    """Σ_s 2a·cos x_s 的记录形式"""
    out = []
    for s in range(n):
        for sign in (1, -1):
            q = [0] * n
            q[s] = sign
            out.append({"q": q, "re": amplitude, "im": 0.0})
    return out


def cos_potential(n: int = 2, R: int = 3, amplitude: float = 1.0) -> FourierField:
    return FourierField.from_records(cos_records(n, amplitude), n=n, R=R, hermitian=True)


def find_direction(params: ProblemParams, k: float, start: float = 1.0, step: float = 0.1, min_margin: float = 1.0):
    """扫描角度, 返回第一个 margin > min_margin·ρ 的非共振方向"""
    for i in range(500):
        theta = start + step * i
        if params.n == 2:
            nu = np.array([math.cos(theta), math.sin(theta)])
        else:
            phi = 0.7 + 0.37 * i
            nu = np.array([
                math.sin(theta) * math.cos(phi),
                math.sin(theta) * math.sin(phi),
                math.cos(theta),
            ])
        nu = nu / np.linalg.norm(nu)
        report = decompose_report(params, k, nu)
        if report.passed and report.margin > min_margin * params.rho(k):
            return tuple(float(x) for x in nu)
    raise RuntimeError("no nonresonant direction found")


def nonresonant_params(n: int = 2, l: int = 2, delta: float = 0.9, k: float = 30.0, R: int = 3, **kw):
    base = ProblemParams(n=n, l=l, delta=delta, k=k, R=R, **kw)
    nu = find_direction(base, k)
    t, _ = direction_decompose(base, k, nu)
    return base.with_(t=t), nu


@pytest.fixture
def small_params():
    """n=2, l=2, δ=0.9, k=30, R=3, 非共振 t"""
    params, _ = nonresonant_params()
    return params


@pytest.fixture
def small_direction():
    return nonresonant_params()


@pytest.fixture
def potential():
    return cos_potential(2, 3)


@pytest.fixture
def zero_potential():
    return FourierField.zero(2, 3)


def write_config(path, **values) -> str:
    lines = []
    for key, value in values.items():
        lines.append(f"{key}={value}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)
