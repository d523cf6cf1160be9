import pytest

from fixpoint.iteration import FALLBACK, STRICT, apply_M, coupling_sequence, fixed_point_check, iterate
from fixpoint.solution import assemble_solution, grid_residual, residual
from fixpoint.threshold import k1_threshold
from fixpoint.trace import lambda_convergence_check, psi_convergence_check
from helpers.bounds import HARD, BoundLedger
from helpers.errors import NoConvergence, ValidationError
from lattice.field import FourierField
from lattice.params import ProblemParams


def solve(V, params, **kw):
    result = iterate(V, params, **kw)
    rec = assemble_solution(result.W_fixed, V, params, result.stage, result.ledger)
    return result, rec


def test_k1_reference_value():
    p = ProblemParams(n=2, l=2, delta=0.9)
    assert k1_threshold(4.0, p) == pytest.approx(16.0 ** (1 / 0.9), rel=1e-12)
    assert k1_threshold(4.0, p) == pytest.approx(21.77, abs=0.01)


def test_k1_override_dominates():
    p = ProblemParams(n=2, l=2, delta=0.9, k0_override=100.0)
    assert k1_threshold(4.0, p) == 100.0


def test_free_linear_case(small_params, zero_potential):
    result, rec = solve(zero_potential, small_params)
    k = result.k
    assert rec.lam == pytest.approx(k ** 4, rel=1e-12)
    assert rec.u_tilde.is_zero
    assert residual(rec, zero_potential, small_params) <= 1e-12


def test_constant_fixed_point(small_params, zero_potential):
    params = small_params.with_(sigma=0.1, A=1.0)
    result, rec = solve(zero_potential, params)
    assert result.trace.iterations == 1
    assert rec.lam == pytest.approx(result.k ** 4 + 0.1, rel=1e-12)
    assert rec.residual_star <= 1e-12


def test_apply_M_fixes_constant(small_params, zero_potential):
    params = small_params.with_(sigma=0.1, A=2.0)
    W0 = zero_potential.add_constant(params.coupling)
    W1 = apply_M(W0, zero_potential, params)
    assert (W1 - W0).star_norm() < 1e-14


def test_nonlinear_run_satisfies_bounds(small_params, potential):
    params = small_params.with_(sigma=0.1, A=1.0)
    result, rec = solve(potential, params, keep_psi=True)
    ledger = BoundLedger()
    result.trace.check_cauchy(ledger)
    result.trace.check_cauchy_chain(ledger)
    psi_convergence_check(result.trace, params, ledger)
    lambda_convergence_check(result.trace, params, ledger)
    fixed_point_check(result, params, ledger)
    assert not ledger.failures
    assert result.trace.converged
    assert result.trace.iterations <= 8

    assert not [c for c in result.ledger.checks if c.name.startswith("solution_") and not c.passed]
    k = result.k
    assert abs(rec.lam - k ** 4 - 0.1) <= 1.1 * k ** 0.7
    assert rec.u_tilde.star_norm() < k ** -0.2


def test_residual_agrees_with_grid(small_params, potential):
    params = small_params.with_(sigma=0.1, A=1.0 + 0.5j)
    _, rec = solve(potential, params)
    r = residual(rec, potential, params)
    g = grid_residual(rec, potential, params)
    assert r <= 1e-7
    assert g <= 1e-7
    assert max(r, g) + 1e-13 <= 10 * (min(r, g) + 1e-13)


def test_strict_mode(small_params, potential):
    params = small_params.with_(sigma=0.1)
    result, _ = solve(potential, params, mode=STRICT)
    assert result.stage.fallbacks == 0


def test_gauge_invariance(small_params, potential):
    base = small_params.with_(sigma=0.1, A=1.0)
    _, rec = solve(potential, base, mode=FALLBACK)
    _, rotated = solve(potential, base.with_(A=1j), mode=FALLBACK)
    _, scaled = solve(potential, base.with_(sigma=0.025, A=2.0), mode=FALLBACK)
    for other in (rotated, scaled):
        assert abs(other.lam - rec.lam) / rec.lam <= 1e-10
        assert (other.u_tilde - rec.u_tilde).star_norm() <= 1e-10


def test_no_convergence(small_params, potential):
    params = small_params.with_(sigma=0.1)
    with pytest.raises(NoConvergence):
        iterate(potential, params, max_iter=1)


def test_mean_potential_rejected(small_params):
    V = FourierField(n=2, R=3, coeffs={(0, 0): 0.5, (1, 0): 1.0, (-1, 0): 1.0}, hermitian=True)
    with pytest.raises(ValidationError, match="v₀"):
        iterate(V, small_params)


def test_coupling_sequence():
    assert coupling_sequence(0.1, 2) == pytest.approx((0.01, 0.001))


def test_coupling_continuity(small_params, potential):
    # σ → 0: λ 与 ũ 回到线性解
    base = small_params.with_(sigma=0.1, A=1.0)
    _, linear = solve(potential, base.with_(sigma=0.0), mode=FALLBACK)
    lam_diffs, u_diffs = [], []
    for s in coupling_sequence(base.sigma):
        _, rec = solve(potential, base.with_(sigma=s), mode=FALLBACK)
        lam_diffs.append(abs(rec.lam - linear.lam))
        u_diffs.append((rec.u_tilde - linear.u_tilde).star_norm())
        assert lam_diffs[-1] == pytest.approx(s, rel=0.1)
    assert lam_diffs == sorted(lam_diffs, reverse=True)
    for a, b in zip(u_diffs, u_diffs[1:]):
        assert b <= a + 1e-13
    assert u_diffs[-1] <= 1e-6


def test_per_step_series_checks_are_recorded(small_params, potential):
    params = small_params.with_(sigma=0.1, A=1.0)
    result = iterate(potential, params)
    names = {c.name for c in result.ledger.checks}
    assert {"m0_resolvent_H0", "m0_g_2", "m1_resolvent_H0", "m1_crosscheck_lambda"} <= names
    last = result.trace.iterations
    assert f"m{last}_E_minus_E0_col" in names
    step_checks = [c for c in result.ledger.checks if c.name.startswith("m")]
    assert step_checks
    assert all(c.passed for c in step_checks)


def test_scoped_ledger_shares_checks():
    ledger = BoundLedger(mode=HARD)
    inner = ledger.scoped("m2_")
    inner.check("g_2", 1.0, 2.0)
    inner.scoped("x_").check("g_3", 3.0, 2.0)
    assert [c.name for c in ledger.checks] == ["m2_g_2", "m2_x_g_3"]
    assert [c.name for c in ledger.hard_failures] == ["m2_x_g_3"]


def test_lambda_mass_form_matches_E_jj_for_hermitian(small_params, potential):
    params = small_params.with_(sigma=0.1, A=1.0)
    _, rec = solve(potential, params)
    assert rec.mass == pytest.approx(abs(rec.E_jj), rel=1e-8)
    assert "lambda_via_E_jj" in rec.diagnostics
    assert abs(rec.lam_linear + 0.1 * rec.E_jj - rec.lam) <= 1e-12 * rec.lam
