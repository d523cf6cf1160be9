"""
格点 Fourier 场

周期函数 f(x) = Σ_q c_q e^{i⟨q,x⟩} (x ∈ [0,2π)ⁿ), 系数按对偶格点 q ∈ ℤⁿ 稀疏存储,
截断在 ‖q‖∞ ≤ R。星范数 ‖f‖_* = Σ|c_q|。

乘积 (卷积) 会把支撑半径翻倍, 结果裁回 R, 被裁掉的星范数质量记在 clipped 上。
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from types import MappingProxyType
from typing import Dict, Iterable, List, Mapping, Tuple

import numpy as np
from scipy.signal import convolve as nd_convolve

from helpers.errors import ValidationError

logger = logging.getLogger("polyharmonic.field")

LatticeIndex = Tuple[int, ...]

HERMITIAN_RTOL = 1e-12


def check_index(q: Iterable[int], n: int, R: int) -> LatticeIndex:
    """校验并规范化格点下标"""
    q = tuple(int(x) for x in q)
    if len(q) != n:
        raise ValidationError(f"格点下标 {q} 维数应为 {n}")
    if any(abs(x) > R for x in q):
        raise ValidationError(f"格点下标 {q} 超出截断盒 ‖q‖∞ ≤ {R}")
    return q


def box_indices(n: int, R: int) -> List[LatticeIndex]:
    """截断盒内全部下标 (字典序, 与 dense 数组的 C 序一致)"""
    return list(product(range(-R, R + 1), repeat=n))


@dataclass(frozen=True)
class FourierField:
    n: int
    R: int
    coeffs: Mapping[LatticeIndex, complex] = field(default_factory=dict)
    hermitian: bool = False
    # 构造时被裁掉的星范数质量 (诊断量)
    clipped: float = field(default=0.0, compare=False)

    def __post_init__(self):
        clean: Dict[LatticeIndex, complex] = {}
        for q, c in dict(self.coeffs).items():
            q = check_index(q, self.n, self.R)
            c = complex(c)
            if c != 0:
                clean[q] = c
        object.__setattr__(self, "coeffs", MappingProxyType(clean))
        if self.hermitian and not self.is_hermitian_scan():
            raise ValidationError("hermitian 标记要求 c[−q] = conj(c[q]), 系数扫描未通过")

    # ---------- 构造 ----------

    @classmethod
    def zero(cls, n: int, R: int, hermitian: bool = True) -> "FourierField":
        return cls(n=n, R=R, coeffs={}, hermitian=hermitian)

    @classmethod
    def constant(cls, n: int, R: int, value: complex) -> "FourierField":
        return cls(n=n, R=R, coeffs={(0,) * n: value}, hermitian=complex(value).imag == 0)

    @classmethod
    def from_dense(
        cls, arr: np.ndarray, R: int, hermitian: bool = False, clipped: float = 0.0
    ) -> "FourierField":
        """从 (2R+1)ⁿ 数组构造, 数组下标 i 对应 q = i − R"""
        arr = np.asarray(arr, dtype=complex)
        n = arr.ndim
        if arr.shape != (2 * R + 1,) * n:
            raise ValidationError(f"dense 数组形状 {arr.shape} 与 R={R} 不符")
        nz = np.argwhere(arr != 0)
        coeffs = {tuple(int(i) - R for i in idx): arr[tuple(idx)] for idx in nz}
        return cls(n=n, R=R, coeffs=coeffs, hermitian=hermitian, clipped=clipped)

    @classmethod
    def from_records(
        cls, records: List[Dict], n: int, R: int, hermitian: bool = False
    ) -> "FourierField":
        """字面量格式: [{q: [...], re: x, im: y}, ...]"""
        coeffs: Dict[LatticeIndex, complex] = {}
        for i, rec in enumerate(records):
            if not isinstance(rec, dict) or "q" not in rec:
                raise ValidationError(f"势函数第 {i} 条记录缺少 q 字段: {rec}")
            unknown = set(rec) - {"q", "re", "im"}
            if unknown:
                raise ValidationError(f"势函数第 {i} 条记录含未知字段 {sorted(unknown)}")
            q = check_index(rec["q"], n, R)
            if q in coeffs:
                raise ValidationError(f"势函数下标 {q} 重复")
            coeffs[q] = complex(float(rec.get("re", 0.0)), float(rec.get("im", 0.0)))
        return cls(n=n, R=R, coeffs=coeffs, hermitian=hermitian)

    def to_records(self) -> List[Dict]:
        return [
            {"q": list(q), "re": c.real, "im": c.imag}
            for q, c in sorted(self.coeffs.items())
        ]

    # ---------- 基本性质 ----------

    def get(self, q: LatticeIndex) -> complex:
        return self.coeffs.get(tuple(q), 0j)

    @property
    def mean(self) -> complex:
        return self.get((0,) * self.n)

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def support_radius(self) -> int:
        if not self.coeffs:
            return 0
        return max(max(abs(x) for x in q) for q in self.coeffs)

    def is_hermitian_scan(self) -> bool:
        for q, c in self.coeffs.items():
            mq = tuple(-x for x in q)
            other = self.coeffs.get(mq, 0j)
            if abs(other - c.conjugate()) > HERMITIAN_RTOL * max(1.0, abs(c)):
                return False
        return True

    @cached_property
    def dense(self) -> np.ndarray:
        arr = np.zeros((2 * self.R + 1,) * self.n, dtype=complex)
        for q, c in self.coeffs.items():
            arr[tuple(x + self.R for x in q)] = c
        arr.setflags(write=False)
        return arr

    def star_norm(self) -> float:
        """‖f‖_* = Σ_q |c_q|"""
        return float(sum(abs(c) for c in self.coeffs.values()))

    # ---------- 代数运算 ----------

    def _same_shape(self, other: "FourierField"):
        if other.n != self.n:
            raise ValidationError(f"场维数不一致: {self.n} vs {other.n}")

    def _combine(self, other: "FourierField", sign: float) -> "FourierField":
        self._same_shape(other)
        R = max(self.R, other.R)
        out: Dict[LatticeIndex, complex] = dict(self.coeffs)
        for q, c in other.coeffs.items():
            out[q] = out.get(q, 0j) + sign * c
        return FourierField(
            n=self.n, R=R, coeffs=out,
            hermitian=self.hermitian and other.hermitian,
            clipped=self.clipped + other.clipped,
        )

    def __add__(self, other: "FourierField") -> "FourierField":
        return self._combine(other, 1.0)

    def __sub__(self, other: "FourierField") -> "FourierField":
        return self._combine(other, -1.0)

    def scale(self, a: complex) -> "FourierField":
        a = complex(a)
        return FourierField(
            n=self.n, R=self.R,
            coeffs={q: a * c for q, c in self.coeffs.items()},
            hermitian=self.hermitian and a.imag == 0,
            clipped=abs(a) * self.clipped,
        )

    def add_constant(self, value: complex) -> "FourierField":
        out = dict(self.coeffs)
        zero = (0,) * self.n
        out[zero] = out.get(zero, 0j) + complex(value)
        return FourierField(
            n=self.n, R=self.R, coeffs=out,
            hermitian=self.hermitian and complex(value).imag == 0,
            clipped=self.clipped,
        )

    def conj(self) -> "FourierField":
        """f̄ 的系数: conj(c_{−q})"""
        return FourierField(
            n=self.n, R=self.R,
            coeffs={tuple(-x for x in q): c.conjugate() for q, c in self.coeffs.items()},
            hermitian=self.hermitian,
        )

    def remove_mean(self) -> "FourierField":
        out = dict(self.coeffs)
        out.pop((0,) * self.n, None)
        return FourierField(n=self.n, R=self.R, coeffs=out, hermitian=self.hermitian)

    def resized(self, R: int) -> "FourierField":
        """换截断半径; 缩小时裁掉的质量记入 clipped"""
        if R >= self.R:
            return FourierField(
                n=self.n, R=R, coeffs=dict(self.coeffs),
                hermitian=self.hermitian, clipped=self.clipped,
            )
        kept: Dict[LatticeIndex, complex] = {}
        mass = 0.0
        for q, c in self.coeffs.items():
            if max(abs(x) for x in q) <= R:
                kept[q] = c
            else:
                mass += abs(c)
        return FourierField(
            n=self.n, R=R, coeffs=kept, hermitian=self.hermitian, clipped=self.clipped + mass
        )

    def convolve(self, other: "FourierField", R: int = None) -> "FourierField":
        """逐点乘积 fg 的系数 (离散卷积), 裁回半径 R"""
        self._same_shape(other)
        R = max(self.R, other.R) if R is None else R
        full = nd_convolve(self.dense, other.dense, method="direct")
        out_R = self.R + other.R
        out = FourierField.from_dense(full, out_R)
        return out.resized(R)

    def squared_modulus(self) -> "FourierField":
        """|f|² 的系数 out[q] = Σ_p c[q+p]·conj(c[p]), 强制 hermitian, 裁回 R"""
        a = self.dense
        flipped = np.conj(a[(slice(None, None, -1),) * self.n])
        full = nd_convolve(a, flipped, method="direct")
        # 对称化消除舍入误差
        full = 0.5 * (full + np.conj(full[(slice(None, None, -1),) * self.n]))
        out = FourierField.from_dense(full, 2 * self.R, hermitian=True)
        return out.resized(self.R)

    # ---------- 求值 ----------

    def point_eval(self, x) -> complex:
        """f(x) = Σ c_q e^{i⟨q,x⟩}"""
        if not self.coeffs:
            return 0j
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValidationError(f"求值点维数应为 {self.n}, 当前 {x.shape}")
        keys = np.array(list(self.coeffs.keys()), dtype=float)
        vals = np.array(list(self.coeffs.values()), dtype=complex)
        return complex(np.sum(vals * np.exp(1j * (keys @ x))))

    def __repr__(self) -> str:
        return (
            f"FourierField(n={self.n}, R={self.R}, modes={len(self.coeffs)}, "
            f"‖·‖_*={self.star_norm():.6g}, hermitian={self.hermitian})"
        )


# ---------- 函数式接口 ----------

def star_norm(F: FourierField) -> float:
    return F.star_norm()


def squared_modulus(F: FourierField) -> FourierField:
    return F.squared_modulus()


def remove_mean(F: FourierField) -> FourierField:
    return F.remove_mean()


def point_eval(F: FourierField, x) -> complex:
    return F.point_eval(x)
