from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Union

from lattice.field import FourierField, LatticeIndex


@dataclass
class SpectralPair:
    """受扰本征值 λ(t) 与投影列 E(t)_{j+q, j}"""

    lam: Union[float, complex]
    j: LatticeIndex
    k: float
    projCol: FourierField
    psi: FourierField
    method: str = "series"
    termLog: List[Dict[str, float]] = field(default_factory=list)
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def E_jj(self) -> complex:
        return self.projCol.mean

    def normalized_column(self) -> FourierField:
        """列除以第 j 分量, 消去相位/范数规范自由度"""
        return self.projCol.scale(1.0 / self.projCol.mean)

    def to_dict(self) -> Dict[str, Any]:
        lam = self.lam
        if isinstance(lam, complex):
            lam = {"re": lam.real, "im": lam.imag}
        return {
            "lambda": lam,
            "j": list(self.j),
            "k": self.k,
            "method": self.method,
            "projCol": self.projCol.to_records(),
            "termLog": self.termLog,
        }


class BaseSpectralSolver(ABC):
    """线性 Bloch 问题求解器基类"""

    def __init__(self, name: str):
        self.name = name

    @abstractmethod
    def solve(self, op, A: complex = 1.0) -> SpectralPair:
        """返回窗口 ε(k,δ) 内唯一本征值及其投影列"""
        pass
