import math

import numpy as np
import pytest

from helpers.bounds import BoundLedger
from helpers.errors import NoRootInInterval, Resonant
from isosurf.surface import (
    grad_h_fd,
    iso_setup,
    kappa_solve,
    lambda_of_kappa,
    polar_rows,
    safeguarded_newton,
    sign_changes_on_I,
    sphere_area,
    surface_measure_report,
    surface_sample,
    tangent_basis,
)
from lattice.field import FourierField
from lattice.params import ProblemParams
from nonres.measure import estimate_B_measure
from tests.conftest import cos_potential, find_direction

LAM = 30.0 ** 4


@pytest.fixture
def base():
    return ProblemParams(n=2, l=2, delta=0.9, k=30.0, R=3)


@pytest.fixture
def nu(base):
    return find_direction(base, 30.0)


def test_safeguarded_newton_finds_root():
    x, fx, evals = safeguarded_newton(lambda x: x * x - 2.0, 1.2, 1.0, 2.0, lambda x: 2 * x, 1e-14)
    assert x == pytest.approx(math.sqrt(2.0), abs=1e-12)
    assert abs(fx) <= 1e-14
    assert evals < 10


def test_safeguarded_newton_reports_missing_root():
    with pytest.raises(NoRootInInterval):
        safeguarded_newton(lambda x: 1.0 + x, 1.5, 1.0, 2.0, lambda x: 1.0, 1e-12)


def test_lambda_of_kappa_free(base, nu):
    V = FourierField.zero(2, 3)
    kappa = 30.0
    assert lambda_of_kappa(kappa, nu, 1.0, base, V) == pytest.approx(kappa ** 4, rel=1e-12)
    sigma = base.with_(sigma=0.2)
    assert lambda_of_kappa(kappa, nu, 1.0, sigma, V) == pytest.approx(kappa ** 4 + 0.2, rel=1e-12)


def test_kappa_free_linear(base, nu):
    V = FourierField.zero(2, 3)
    point = kappa_solve(LAM, 1.0, nu, base, V)
    assert point.kappa == pytest.approx(30.0, rel=1e-12)
    assert abs(point.h) <= 1e-12 * 30.0
    assert point.resid <= base.tol_root * LAM


def test_kappa_free_nonlinear(base, nu):
    V = FourierField.zero(2, 3)
    params = base.with_(sigma=0.1)
    point = kappa_solve(LAM, 1.0, nu, params, V)
    k_tilde = (LAM - 0.1) ** 0.25
    assert point.kappa == pytest.approx(k_tilde, rel=1e-12)
    assert point.k_tilde == pytest.approx(k_tilde, rel=1e-15)
    assert abs(point.h) <= 1e-10


def test_kappa_with_potential_obeys_bound(base, nu):
    V = cos_potential(2, 3)
    params = base.with_(sigma=0.1)
    ledger = BoundLedger()
    point = kappa_solve(LAM, 1.0, nu, params, V, ledger=ledger)
    assert not ledger.failures
    setup = iso_setup(LAM, 1.0, params, V)
    assert setup.lo <= point.kappa <= setup.hi
    assert abs(point.h) <= setup.h_bound
    # 证书: 从头重算
    again = lambda_of_kappa(point.kappa, nu, 1.0, params, V)
    assert abs(again - LAM) <= params.tol_root * LAM


def test_single_sign_change_on_interval(base, nu):
    params = base.with_(sigma=0.1)
    assert sign_changes_on_I(LAM, 1.0, nu, params, FourierField.zero(2, 3)) == 1


def test_amplitude_scaling_leaves_point_unchanged(base, nu):
    V = cos_potential(2, 3)
    a = kappa_solve(LAM, 1.0, nu, base.with_(sigma=0.1), V)
    b = kappa_solve(LAM, 2.0, nu, base.with_(sigma=0.025), V)
    assert b.kappa == pytest.approx(a.kappa, rel=1e-10)
    assert b.k_tilde == pytest.approx(a.k_tilde, rel=1e-12)


def test_resonant_direction_rejected(base):
    V = FourierField.zero(2, 3)
    # 沿坐标轴且 k 为 2π 的整数倍时共振
    params = base.with_(k=2 * math.pi * 5)
    lam = (2 * math.pi * 5) ** 4
    with pytest.raises(Resonant):
        kappa_solve(lam, 1.0, (1.0, 0.0), params, V)


def test_surface_sample_free_case(base):
    V = FourierField.zero(2, 3)
    points = surface_sample(LAM, 1.0, base, V, N=12, seed=3)
    again = surface_sample(LAM, 1.0, base, V, N=12, seed=3)
    assert [p.nu for p in points] == [p.nu for p in again]
    kept = [p for p in points if p.ok]
    assert kept
    for p in kept:
        assert p.h == pytest.approx(0.0, abs=1e-12)
    for p in points:
        if not p.ok:
            assert p.status.startswith("Resonant")
    report = surface_measure_report(points, LAM, base)
    assert report["ratio"] == report["fraction"]
    assert report["kept"] == len(kept)


def test_measure_report_constants():
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)


def test_tangent_basis_is_orthonormal():
    nu = np.array([0.2, -0.5, 0.84])
    nu = nu / np.linalg.norm(nu)
    taus = tangent_basis(nu)
    assert len(taus) == 2
    for i, tau in enumerate(taus):
        assert abs(np.dot(tau, nu)) < 1e-14
        assert np.linalg.norm(tau) == pytest.approx(1.0)
        for other in taus[i + 1:]:
            assert abs(np.dot(tau, other)) < 1e-14


def test_polar_rows_sorted(base):
    V = FourierField.zero(2, 3)
    points = surface_sample(LAM, 1.0, base, V, N=6, seed=1)
    rows = polar_rows(points)
    thetas = [r[0] for r in rows]
    assert thetas == sorted(thetas)
    assert all(r[1] == pytest.approx(30.0, rel=1e-12) for r in rows)


def test_gradient_free_case_is_zero(base):
    nu = find_direction(base, 30.0, min_margin=50.0)
    V = FourierField.zero(2, 3)
    params = base.with_(sigma=0.1)
    point = kappa_solve(LAM, 1.0, nu, params, V)
    grad = grad_h_fd(point, LAM, 1.0, params, V)
    assert grad.magnitude <= 1e-8


@pytest.mark.slow
def test_gradient_with_potential(base):
    nu = find_direction(base, 30.0, min_margin=50.0)
    V = cos_potential(2, 3)
    params = base.with_(sigma=0.1)
    point = kappa_solve(LAM, 1.0, nu, params, V)
    ledger = BoundLedger()
    grad = grad_h_fd(point, LAM, 1.0, params, V, ledger=ledger)
    setup = iso_setup(LAM, 1.0, params, V)
    assert grad.magnitude < setup.grad_bound


@pytest.mark.slow
def test_kept_fraction_matches_B_estimate(base):
    V = FourierField.zero(2, 3)
    params = base.with_(sigma=0.1)
    N, seed = 1000, 21
    points = surface_sample(LAM, 1.0, params, V, N=N, seed=seed)
    report = surface_measure_report(points, LAM, params)
    est = estimate_B_measure(params, LAM ** 0.25, N, seed)
    # 保留的方向都在 B(λ) 内
    assert report["fraction"] <= est.fraction
    assert report["fraction"] >= est.fraction - 3 * est.stderr


@pytest.mark.slow
def test_surface_measure_trend(base):
    V = FourierField.zero(2, 3)
    params = base.with_(sigma=0.1)
    reports = []
    for k in (20.0, 40.0, 80.0):
        points = surface_sample(k ** 4, 1.0, params.with_(k=k), V, N=1000, seed=4)
        reports.append(surface_measure_report(points, k ** 4, params))
    for lo, hi in zip(reports, reports[1:]):
        assert hi["ratio"] >= lo["ratio"] - 3 * (lo["stderr"] + hi["stderr"])
    assert reports[-1]["ratio"] > 0.9
    for r in reports:
        assert r["jacobian"] == pytest.approx(1.0, abs=1e-6)
