"""MMD values, swap-delta cache, integration error, interpolation check."""

import math

import numpy as np
import pytest

from kthin import kernels as kn
from kthin.discrepancy import (
    DiscreteMeasure,
    StaleCacheError,
    SwapCache,
    check_interpolation,
    gauss_interpolation_triple,
    integration_error,
    kernel_row_means,
    mmd,
    mmd_points,
    mmd_swap_delta,
)


def random_measure(rng, n_max=20, d=2):
    n = int(rng.integers(1, n_max + 1))
    pts = rng.normal(size=(n, d))
    w = rng.random(n) + 0.05
    return DiscreteMeasure(pts, w / w.sum())


# ---------------------------------------------------------------------------
# mmd basics
# ---------------------------------------------------------------------------

def test_mmd_identical_measures_is_zero():
    rng = np.random.default_rng(0)
    p = random_measure(rng)
    assert mmd(kn.gauss(1.0), p, p) == 0.0


def test_mmd_zero_on_permuted_duplicates():
    # the same measure written with permuted atoms and split weights
    pts = np.array([[0.0, 0.0], [1.0, 2.0], [3.0, -1.0]])
    p = DiscreteMeasure(pts, [0.5, 0.3, 0.2])
    q = DiscreteMeasure(
        np.array([[3.0, -1.0], [0.0, 0.0], [1.0, 2.0], [0.0, 0.0]]),
        [0.2, 0.25, 0.3, 0.25],
    )
    assert mmd(kn.gauss(1.0), p, q) < 1e-7


def test_mmd_singletons_oracle():
    # brute-force double sum: mmd^2 = 2 - 2 k(x, y) = 2 - 2 e^{-1};
    # frozen value computed from that oracle
    val = mmd_points(kn.gauss(1.0), np.array([[0.0]]), np.array([[math.sqrt(2.0)]]))
    oracle = math.sqrt(2.0 - 2.0 * math.exp(-1.0))
    assert val == pytest.approx(1.124384772957, abs=1e-10)
    assert val == pytest.approx(oracle, rel=1e-14)


def test_mmd_symmetry_and_nonnegativity():
    rng = np.random.default_rng(1)
    k = kn.laplace(1.1)
    for _ in range(10):
        p, q = random_measure(rng), random_measure(rng)
        assert mmd(k, p, q) >= 0.0
        assert mmd(k, p, q) == pytest.approx(mmd(k, q, p), rel=1e-12)


def test_mmd_scale_covariance():
    rng = np.random.default_rng(2)
    k = kn.imq(0.7, 1.0)
    for c in (0.25, 4.0, 7.3):
        p, q = random_measure(rng), random_measure(rng)
        assert mmd(k.scaled(c), p, q) == pytest.approx(
            math.sqrt(c) * mmd(k, p, q), rel=1e-10
        )


def test_mmd_triangle_inequality():
    rng = np.random.default_rng(3)
    k = kn.gauss(1.0)
    for _ in range(20):
        p, q, r = (random_measure(rng) for _ in range(3))
        assert mmd(k, p, r) <= mmd(k, p, q) + mmd(k, q, r) + 1e-10


def test_mmd_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        mmd(kn.gauss(1.0), DiscreteMeasure(np.zeros((2, 1))), DiscreteMeasure(np.zeros((2, 2))))


def test_unnormalized_weights_rejected():
    with pytest.raises(ValueError, match="sum to 1"):
        DiscreteMeasure(np.zeros((2, 1)), [0.7, 0.7])
    with pytest.raises(ValueError, match="non-negative"):
        DiscreteMeasure(np.zeros((2, 1)), [1.5, -0.5])


def test_mmd_brute_force_equivalence():
    # chunked path vs a direct O(n^2) double loop
    rng = np.random.default_rng(4)
    k = kn.gauss(0.9)
    p, q = random_measure(rng, 12), random_measure(rng, 12)

    def brute(a, b):
        total = 0.0
        for xi, wi in zip(a.points, a.weights):
            for yj, vj in zip(b.points, b.weights):
                total += wi * vj * kn.kernel_eval(k, xi, yj)
        return total

    direct = math.sqrt(max(0.0, brute(p, p) + brute(q, q) - 2 * brute(p, q)))
    assert mmd(k, p, q) == pytest.approx(direct, abs=1e-12)


# ---------------------------------------------------------------------------
# integration error
# ---------------------------------------------------------------------------

def test_integration_error_constant_function():
    rng = np.random.default_rng(5)
    p, q = random_measure(rng), random_measure(rng)
    assert integration_error(lambda x: np.full(len(x), 3.7), p, q) < 1e-15


def test_integration_error_matched_means():
    p = DiscreteMeasure(np.array([[0.0], [2.0]]))
    q = DiscreteMeasure(np.array([[1.0]]))
    assert integration_error(lambda x: x[:, 0], p, q) < 1e-15


def test_rkhs_function_error_bounded_by_mmd():
    # |(P - Q) f| <= ||f||_k mmd(P, Q) and ||k(x', .)||_k = sqrt(k(x',x')) = 1
    rng = np.random.default_rng(6)
    k = kn.gauss(1.0)
    for _ in range(20):
        p, q = random_measure(rng), random_measure(rng)
        xp = rng.normal(size=2)
        f = lambda x: kn.gram(k, xp[None, :], x)[0]
        assert integration_error(f, p, q) <= mmd(k, p, q) + 1e-10


# ---------------------------------------------------------------------------
# swap deltas
# ---------------------------------------------------------------------------

def _full_mmd_sq(k, points, coreset):
    p = DiscreteMeasure(points)
    q = DiscreteMeasure(points[coreset])
    return mmd(k, p, q) ** 2


def test_swap_delta_incumbent_is_exactly_zero():
    rng = np.random.default_rng(7)
    pts = rng.normal(size=(30, 2))
    cache = SwapCache(kn.gauss(1.0), pts, np.array([3, 11, 19, 27]))
    for pos in range(4):
        assert cache.swap_delta(pos, int(cache.coreset[pos])) == 0.0


def test_swap_delta_matches_full_recomputation():
    rng = np.random.default_rng(8)
    k = kn.laplace(1.3)
    pts = rng.normal(size=(40, 2))
    coreset = rng.choice(40, size=8, replace=False)
    cache = SwapCache(k, pts, coreset)
    base = _full_mmd_sq(k, pts, cache.coreset)
    for _ in range(100):
        pos = int(rng.integers(0, 8))
        z = int(rng.integers(0, 40))
        modified = cache.coreset.copy()
        modified[pos] = z
        expect = _full_mmd_sq(k, pts, modified) - base
        assert cache.swap_delta(pos, z) == pytest.approx(expect, abs=1e-10)


def test_swap_argmin_matches_full_recomputation():
    rng = np.random.default_rng(9)
    k = kn.gauss(0.8)
    pts = rng.normal(size=(25, 2))
    cache = SwapCache(k, pts, np.array([1, 5, 9, 13]))
    base = _full_mmd_sq(k, pts, cache.coreset)
    for pos in range(4):
        full = []
        for z in range(25):
            modified = cache.coreset.copy()
            modified[pos] = z
            full.append(_full_mmd_sq(k, pts, modified) - base)
        best, delta = cache.best_swap(pos)
        assert best == int(np.argmin(full))
        assert delta <= 0.0


def test_swap_cache_updates_track_recomputation():
    rng = np.random.default_rng(10)
    k = kn.imq(0.6, 1.0)
    pts = rng.normal(size=(30, 3))
    cache = SwapCache(k, pts, np.arange(0, 30, 5))
    for step in range(10):
        pos = int(rng.integers(0, cache.out_size))
        z = int(rng.integers(0, 30))
        before = _full_mmd_sq(k, pts, cache.coreset)
        delta = cache.swap_delta(pos, z)
        cache.apply_swap(pos, z)
        after = _full_mmd_sq(k, pts, cache.coreset)
        assert after - before == pytest.approx(delta, abs=1e-10)
    assert cache.generation == 10


def test_stale_cache_detected():
    rng = np.random.default_rng(11)
    pts = rng.normal(size=(12, 1))
    cache = SwapCache(kn.gauss(1.0), pts, np.array([0, 4, 8]))
    token = cache.generation
    assert mmd_swap_delta(cache, 0, 5, expected_generation=token) is not None
    cache.apply_swap(0, 5)
    with pytest.raises(StaleCacheError):
        mmd_swap_delta(cache, 1, 2, expected_generation=token)


def test_kernel_row_means_match_direct():
    rng = np.random.default_rng(12)
    k = kn.gauss(1.0)
    pts = rng.normal(size=(17, 2))
    means = kernel_row_means(k, pts)
    direct = kn.gram(k, pts).mean(axis=1)
    assert np.max(np.abs(means - direct)) < 1e-14


# ---------------------------------------------------------------------------
# the interpolation inequality
# ---------------------------------------------------------------------------

def test_interpolation_alpha_one_is_equality():
    rng = np.random.default_rng(13)
    k = kn.gauss(1.0)
    p, q = random_measure(rng), random_measure(rng)
    res = check_interpolation(k, k, k, p, q, alpha=1.0)
    assert res["holds"]
    assert res["rhs"] == pytest.approx(res["lhs"], rel=1e-12)


def test_interpolation_equal_measures():
    rng = np.random.default_rng(14)
    p = random_measure(rng)
    k, ka, k2a = gauss_interpolation_triple(1.0, 0.75, 2)
    res = check_interpolation(k, ka, k2a, p, p, alpha=0.75)
    assert res["holds"]
    assert res["lhs"] == 0.0


@pytest.mark.parametrize("alpha", [0.5, 0.6, 0.75, 0.9])
def test_interpolation_random_measures(alpha):
    rng = np.random.default_rng(int(alpha * 100))
    k, ka, k2a = gauss_interpolation_triple(1.3, alpha, 2)
    for _ in range(100):
        p, q = random_measure(rng), random_measure(rng)
        res = check_interpolation(k, ka, k2a, p, q, alpha=alpha)
        assert res["lhs"] <= res["rhs"] + 1e-10


def test_gauss_exact_power_constants_solve_convolution_identity():
    # with exact constants the half-power satisfies the convolution identity
    # with constant exactly 1 (d = 1 quadrature oracle)
    from scipy.integrate import quad

    sigma = 1.7
    k_half = kn.gauss_power_exact(sigma, 0.5, dim=1)
    for x, y in ((0.4, -0.9), (0.0, 0.0), (1.2, 0.3)):
        conv = quad(
            lambda z: kn.kernel_eval(k_half, [x], [z]) * kn.kernel_eval(k_half, [z], [y]),
            -40.0, 40.0, limit=200,
        )[0] / math.sqrt(2.0 * math.pi)
        target = kn.kernel_eval(kn.gauss(sigma), [x], [y])
        assert conv == pytest.approx(target, rel=1e-9)
