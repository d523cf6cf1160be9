import logging

from lattice.params import ProblemParams

logger = logging.getLogger("polyharmonic.threshold")


def k1_threshold(norm_V: float, params: ProblemParams) -> float:
    """k₁ = max{(8l)^{1/δ}, (4‖V‖_*)^{1/δ}, (2+2‖V‖_*)^{1/(2l−n−δ)}, k₀}"""
    l, n, delta = params.l, params.n, params.delta
    terms = (
        (8.0 * l) ** (1.0 / delta),
        (4.0 * norm_V) ** (1.0 / delta),
        (2.0 + 2.0 * norm_V) ** (1.0 / (2 * l - n - delta)),
        params.k0_override,
    )
    k1 = max(terms)
    if k1 == params.k0_override:
        logger.warning(f"k₁ 由 k0_override={params.k0_override} 决定 (k₀ 无显式公式, 属配置项)")
    return k1
