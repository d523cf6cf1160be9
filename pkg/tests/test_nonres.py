import numpy as np
import pytest

from helpers.errors import BoxTooSmall, ValidationError
from lattice.params import TWO_PI, ProblemParams
from nonres.measure import MeasureAccumulator, estimate_B_measure, sample_report
from nonres.scan import direction_decompose, in_B, is_nonresonant, sample_direction


@pytest.fixture
def params():
    return ProblemParams(n=2, l=2, delta=0.9, k=30.0)


def test_decompose_reconstructs_carrier(params):
    nu = np.array([0.6, 0.8])
    t, j = direction_decompose(params, 30.0, nu)
    assert all(0.0 <= x < TWO_PI for x in t)
    np.testing.assert_allclose(np.array(t) + TWO_PI * np.array(j), 30.0 * nu, atol=1e-12)


def test_decompose_rejects_non_unit(params):
    with pytest.raises(ValidationError):
        direction_decompose(params, 30.0, [1.0, 1.0])


def test_nonresonant_direction_finds_its_own_index(small_direction):
    params, nu = small_direction
    t, j = direction_decompose(params, 30.0, nu)
    report = is_nonresonant(params, t, 30.0)
    assert report.passed
    assert report.j == j
    assert report.window_count == 1
    assert report.margin > params.rho(30.0)
    assert in_B(params, 30.0, nu)


def test_resonant_point(params):
    report = is_nonresonant(params, (0.0, 0.0), TWO_PI)
    assert not report.passed
    assert report.j is None
    assert report.window_count == 4


def test_box_too_small(params):
    with pytest.raises(BoxTooSmall):
        is_nonresonant(params.with_(scan_radius=1), (1.0, 2.0), 30.0)


def test_sample_direction_is_deterministic():
    a = sample_direction(42, 7, 3)
    b = sample_direction(42, 7, 3)
    np.testing.assert_array_equal(a, b)
    assert np.linalg.norm(a) == pytest.approx(1.0)
    assert not np.array_equal(a, sample_direction(42, 8, 3))


def test_accumulator_stats():
    acc = MeasureAccumulator()
    for passed in (True, True, False, True):
        acc.update(passed, 1.0)
    assert acc.fraction == pytest.approx(0.75)
    assert acc.stderr == pytest.approx((0.75 * 0.25 / 4) ** 0.5)
    assert acc.get_stats()["N"] == 4


def test_measure_requires_enough_samples(params):
    with pytest.raises(ValidationError):
        estimate_B_measure(params, 30.0, 10, seed=1)


def test_measure_is_deterministic(params):
    a = estimate_B_measure(params, 30.0, 1000, seed=5)
    b = estimate_B_measure(params, 30.0, 1000, seed=5)
    assert a == b
    assert 0.0 <= a.fraction <= 1.0
    assert a.to_dict()["N"] == 1000


@pytest.mark.slow
def test_measure_trend(params):
    ests = [estimate_B_measure(params, k, 10_000, seed=11) for k in (20.0, 40.0, 80.0)]
    for lo, hi in zip(ests, ests[1:]):
        assert hi.fraction >= lo.fraction - 3 * (lo.stderr + hi.stderr)
    assert ests[-1].fraction > 0.9


def _sample_ts(seed, count, n=2):
    rng = np.random.default_rng(seed)
    return [tuple(rng.uniform(0.0, TWO_PI, size=n)) for _ in range(count)]


@pytest.mark.parametrize("s", [0, 1])
def test_lattice_translation_invariance(params, s):
    # t → t + 2πe_s, j → j − e_s 给出同一个 p_j(t)
    shift = np.zeros(2)
    shift[s] = TWO_PI
    for t in _sample_ts(3, 40):
        a = is_nonresonant(params, t, 30.0)
        b = is_nonresonant(params, tuple(np.asarray(t) + shift), 30.0)
        assert b.margin == pytest.approx(a.margin, abs=1e-9 * 30.0 ** 4)
        if abs(a.margin) > 1e-6 * params.rho():
            assert a.passed == b.passed
            assert a.window_count == b.window_count
        if a.passed and b.passed:
            expected = list(a.j)
            expected[s] -= 1
            assert list(b.j) == expected


def test_margin_is_lipschitz_in_t(params):
    l, n, k, R = params.l, params.n, 30.0, params.R
    C = 2 * l * (k + TWO_PI * R) ** (2 * l - 1) * np.sqrt(n)
    rng = np.random.default_rng(8)
    for t in _sample_ts(9, 50):
        step = rng.normal(size=2)
        step *= 1e-6 / np.linalg.norm(step)
        t2 = tuple(np.clip(np.asarray(t) + step, 0.0, TWO_PI - 1e-12))
        a = is_nonresonant(params, t, k)
        b = is_nonresonant(params, t2, k)
        dist = float(np.linalg.norm(np.asarray(t2) - np.asarray(t)))
        assert abs(a.margin - b.margin) <= C * dist + 1e-12 * k ** 4


def test_axis_permutation_equivariance():
    params = ProblemParams(n=3, l=2, delta=0.4, k=12.0)
    perm = [2, 0, 1]
    for i in range(30):
        nu = sample_direction(17, i, 3)
        t, j = direction_decompose(params, 12.0, nu)
        tp, jp = direction_decompose(params, 12.0, nu[perm])
        np.testing.assert_allclose(tp, np.asarray(t)[perm], atol=1e-12)
        assert list(jp) == [j[p] for p in perm]
        a = is_nonresonant(params, t, 12.0)
        b = is_nonresonant(params, tp, 12.0)
        assert b.margin == pytest.approx(a.margin, abs=1e-9 * 12.0 ** 4)
        if abs(a.margin) > 1e-6 * params.rho(12.0):
            assert a.passed == b.passed
        if a.passed and b.passed:
            assert list(b.j) == [a.j[p] for p in perm]


def test_decompose_is_nearest_cell_point(params):
    # 暴力搜索: 唯一满足 kν − 2πj ∈ [0,2π)ⁿ 的格点
    for k in (30.0, 47.3):
        for i in range(1000):
            nu = sample_direction(23, i, 2)
            x = k * nu
            base = np.floor(x / TWO_PI).astype(int)
            found = []
            for da in (-1, 0, 1):
                for db in (-1, 0, 1):
                    cand = base + np.array([da, db])
                    rest = x - TWO_PI * cand
                    if np.all(rest >= -1e-12) and np.all(rest < TWO_PI - 1e-12):
                        found.append(tuple(int(v) for v in cand))
            t, j = direction_decompose(params, k, nu)
            if len(found) == 1:
                assert j == found[0]
            np.testing.assert_allclose(np.asarray(t) + TWO_PI * np.asarray(j), x, atol=1e-12)


def test_sample_report_matches_in_B(params):
    for i in range(20):
        nu, report = sample_report(params, 30.0, 5, i)
        np.testing.assert_array_equal(nu, sample_direction(5, i, 2))
        assert report.passed == in_B(params, 30.0, nu)


def test_in_B_fraction_equals_estimate(params):
    k, N, seed = 40.0, 1000, 12
    hits = sum(in_B(params, k, sample_direction(seed, i, 2)) for i in range(N))
    est = estimate_B_measure(params, k, N, seed)
    assert est.fraction == hits / N
    assert est.N == N
