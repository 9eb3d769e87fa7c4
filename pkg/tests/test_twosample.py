import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from fdoutlier.errors import DataError, DomainError, EmptyInputError, InsufficientDataError
from fdoutlier.twosample import (
    KS,
    W2,
    WINF,
    BridgeTables,
    build_l2_bridge_table,
    check_kind,
    default_tables,
    ecdf,
    empirical_quantile,
    ks_statistic,
    sup_bridge_cdf,
    sup_bridge_quantile,
    two_sample_test,
    w2_statistic,
    winf_statistic,
    wq_equal_size_oracle,
)


# -- naive reference implementations ------------------------------------------

def naive_ecdf(sample, t):
    return sum(1 for v in sample if v <= t) / len(sample)


def naive_quantile(sample, prob):
    xs = sorted(sample)
    n = len(xs)
    if prob == 1.0:
        return xs[-1]
    for i in range(1, n + 1):
        if (i - 1) / n <= prob < i / n:
            return xs[i - 1]


def composed_on_grid(x, y, t):
    """G(F^{-1}(t)) on an array of t, straight from the definitions."""
    xs = np.sort(x)
    n0 = xs.size
    idx = np.minimum(np.floor(t * n0).astype(int), n0 - 1)
    q = xs[idx]
    return (np.asarray(y)[None, :] <= q[:, None]).mean(axis=1)


def quad_w2(x, y):
    n0 = len(x)
    gamma = n0 * len(y) / (n0 + len(y))
    total = 0.0
    xs = sorted(x)
    for i in range(n0):
        c = naive_ecdf(y, xs[i])
        val, _ = integrate.quad(lambda t: (c - t) ** 2, i / n0, (i + 1) / n0, epsabs=1e-15, epsrel=1e-13)
        total += val
    return gamma * total


def grid_winf(x, y, points=100_001):
    t = np.linspace(0.0, 1.0, points)
    gamma = len(x) * len(y) / (len(x) + len(y))
    sup = 0.0
    for chunk in np.array_split(t, max(1, points // 20_000)):
        sup = max(sup, np.abs(composed_on_grid(x, y, chunk) - chunk).max())
    return math.sqrt(gamma) * sup


def grid_ks(x, y, points=100_001):
    lo, hi = min(min(x), min(y)), max(max(x), max(y))
    grid = np.linspace(lo - 1e-9, hi + 1e-9, points)
    f = np.searchsorted(np.sort(x), grid, side="right") / len(x)
    g = np.searchsorted(np.sort(y), grid, side="right") / len(y)
    gamma = len(x) * len(y) / (len(x) + len(y))
    step = grid[1] - grid[0]
    # worst case: every sample point within one cell of the argmax is skipped
    merged = np.sort(np.concatenate([x, y]))
    crowd = np.max(np.searchsorted(merged, merged + 2 * step) - np.arange(merged.size))
    return math.sqrt(gamma) * np.abs(f - g).max(), math.sqrt(gamma) * crowd / min(len(x), len(y))


# -- ecdf / quantile ------------------------------------------------------------

def test_ecdf_values():
    assert ecdf([1, 2, 3], 2) == pytest.approx(2 / 3)
    assert ecdf([1, 2, 3], 0.5) == 0.0
    assert ecdf([1, 2, 3], 3) == 1.0


def test_ecdf_vs_counting_loop(rng):
    s = rng.standard_normal(57)
    q = rng.standard_normal(1000) * 1.5
    np.testing.assert_array_equal(ecdf(s, q), [naive_ecdf(s, v) for v in q])


def test_quantile_values():
    assert empirical_quantile([5, 1, 3], 0.5) == 3
    assert empirical_quantile([5, 1, 3], 1.0) == 5
    assert empirical_quantile([5, 1, 3], 0.0) == 1
    with pytest.raises(DomainError):
        empirical_quantile([1, 2], 1.5)


@given(st.lists(st.integers(-20, 20), min_size=1, max_size=15), st.integers(0, 1000))
def test_quantile_matches_definition(sample, k):
    prob = k / 1000
    assert empirical_quantile(sample, prob) == naive_quantile(sample, prob)


def test_empty_sample():
    with pytest.raises(EmptyInputError):
        ks_statistic([], [1.0])


def test_non_finite_sample():
    with pytest.raises(DataError):
        winf_statistic([1.0, np.nan], [1.0])


def test_check_kind_aliases():
    assert check_kind("W-inf") == WINF
    assert check_kind("KS") == KS
    with pytest.raises(DataError):
        check_kind("w3")


# -- statistics: hand values ------------------------------------------------------

def test_hand_values():
    res = w2_statistic([1, 2], [1, 2])
    assert res.statistic == 1 / 12
    assert res.gamma == 1.0
    assert winf_statistic([1, 2], [1, 2]).statistic == 0.5
    ks = ks_statistic([1, 2, 5], [1, 2, 5])
    assert ks.statistic == 0.0 and ks.p_value == 1.0
    assert ks_statistic([1, 2], [3, 4]).statistic == 1.0


@pytest.mark.parametrize("n", [1, 2, 3, 10, 100, 999])
def test_identical_samples_w2(n):
    x = np.random.default_rng(n).standard_normal(n)
    assert w2_statistic(x, x).statistic == pytest.approx(1 / (6 * n), rel=1e-12)


def test_identical_samples_winf():
    x = np.arange(100.0)
    assert winf_statistic(x, x).statistic == pytest.approx(math.sqrt(50) * 0.01, rel=1e-12)


# -- statistics: oracles -----------------------------------------------------------

def test_w2_quadrature_40_60(rng):
    x, y = rng.standard_normal(40), rng.standard_normal(60) + 0.3
    assert abs(w2_statistic(x, y).statistic - quad_w2(x, y)) < 1e-9


def test_w2_quadrature_random_sizes():
    rng = np.random.default_rng(99)
    for _ in range(40):
        x = rng.standard_normal(rng.integers(2, 120))
        y = rng.standard_normal(rng.integers(2, 120)) * rng.uniform(0.5, 2)
        assert abs(w2_statistic(x, y).statistic - quad_w2(x, y)) < 1e-9


def test_winf_grid_oracle():
    rng = np.random.default_rng(5)
    for _ in range(20):
        x = rng.standard_normal(rng.integers(2, 150))
        y = rng.exponential(size=rng.integers(2, 150))
        exact = winf_statistic(x, y).statistic
        approx = grid_winf(x, y)
        gamma = len(x) * len(y) / (len(x) + len(y))
        assert approx <= exact + 1e-12
        assert exact - approx <= math.sqrt(gamma) * 1e-5 + 1e-12


def test_ks_grid_oracle():
    rng = np.random.default_rng(6)
    x, y = rng.standard_normal(50), rng.standard_normal(50) + 0.2
    exact = ks_statistic(x, y).statistic
    approx, tol = grid_ks(x, y)
    assert approx <= exact + 1e-12
    assert exact - approx <= tol


def test_ks_matches_scipy_statistic(rng):
    from scipy.stats import ks_2samp

    x, y = rng.standard_normal(37), rng.standard_normal(81)
    ref = ks_2samp(x, y).statistic * math.sqrt(37 * 81 / 118)
    assert ks_statistic(x, y).statistic == pytest.approx(ref, rel=1e-12)


def test_w2_equal_size_order_statistic_form():
    # with n0 = n1 = n and uniform-on-grid samples, the integral form and W_2^2 coincide
    # once y is replaced by its ranks relative to x's grid
    x = np.arange(1.0, 11.0) / 10
    y = np.arange(1.0, 11.0) / 10
    assert wq_equal_size_oracle(x, y, 2) == 0.0
    with pytest.raises(DataError):
        wq_equal_size_oracle(x, y[:-1], 2)


sizes = st.integers(1, 40)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), sizes, sizes)
def test_rank_invariance(seed, n0, n1):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(n0), rng.standard_normal(n1)
    for kind in (KS, W2, WINF):
        base = two_sample_test(x, y, kind).statistic
        assert two_sample_test(np.exp(x), np.exp(y), kind).statistic == base
        assert two_sample_test(3 * x + 2, 3 * y + 2, kind).statistic == base


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), sizes, sizes)
def test_nonnegative_and_valid_pvalues(seed, n0, n1):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(n0), rng.standard_normal(n1)
    for kind in (KS, W2, WINF):
        res = two_sample_test(x, y, kind)
        assert res.statistic >= 0 and 0.0 <= res.p_value <= 1.0


def test_ks_symmetric_w2_winf_not():
    # tied values break the symmetry of the composed-quantile statistics
    x, y = [3.0], [3.0, 2.0, 2.0, 3.0]
    assert ks_statistic(x, y).statistic == ks_statistic(y, x).statistic
    assert w2_statistic(x, y).statistic == pytest.approx(0.8 / 3)
    assert w2_statistic(y, x).statistic == pytest.approx(0.8 / 12)
    assert winf_statistic(x, y).statistic != winf_statistic(y, x).statistic


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), sizes, sizes)
def test_tie_free_samples_are_symmetric(seed, n0, n1):
    # observed property: without ties the staircase G(F^-1) mirrors F(G^-1)
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(n0), rng.standard_normal(n1)
    assert w2_statistic(x, y).statistic == pytest.approx(w2_statistic(y, x).statistic, rel=1e-12)
    assert winf_statistic(x, y).statistic == pytest.approx(ks_statistic(x, y).statistic, rel=1e-12)


def test_null_pvalues_roughly_uniform():
    rng = np.random.default_rng(11)
    tables = default_tables()
    p = np.array([
        w2_statistic(rng.standard_normal(500), rng.standard_normal(500), tables).p_value
        for _ in range(2000)
    ])
    grid = np.linspace(0, 1, 201)
    dev = np.abs(np.searchsorted(np.sort(p), grid, side="right") / p.size - grid).max()
    assert dev < 0.05


# -- null laws ----------------------------------------------------------------------

def test_sup_cdf_endpoints():
    assert sup_bridge_cdf(0.0) == 0.0
    assert abs(sup_bridge_cdf(5.0) - 1.0) < 1e-12


def test_sup_cdf_vs_scipy():
    for x in np.linspace(0.05, 3.0, 60):
        assert sup_bridge_cdf(x) == pytest.approx(1 - special.kolmogorov(x), abs=1e-12)



def test_sup_cdf_monotone():
    v = [sup_bridge_cdf(x) for x in np.linspace(0, 4, 400)]
    assert all(b >= a for a, b in zip(v, v[1:]))


def test_sup_quantile():
    assert sup_bridge_quantile(0.95) == pytest.approx(1.3581, abs=1e-4)


def test_default_table_properties():
    t = default_tables()
    assert (t.num_draws, t.truncation) == (1_000_000, 10_000)
    assert np.all(np.diff(t.l2_quantiles) > 0)
    assert abs(t.draw_mean - 1 / 6) < 3 * t.draw_sd / math.sqrt(t.num_draws)
    assert t.l2_quantile(0.95) == pytest.approx(0.4614, abs=0.003)
    assert t.l2_cdf(t.l2_quantile(0.5)) == pytest.approx(0.5, abs=1e-9)


def test_table_determinism_and_io(tmp_path):
    a = build_l2_bridge_table(100_000, 1000, seed=3)
    b = build_l2_bridge_table(100_000, 1000, seed=3)
    np.testing.assert_array_equal(a.l2_quantiles, b.l2_quantiles)
    a.save(tmp_path / "t.npz")
    c = BridgeTables.load(tmp_path / "t.npz")
    np.testing.assert_array_equal(c.l2_quantiles, a.l2_quantiles)
    assert (c.num_draws, c.truncation, c.seed) == (100_000, 1000, 3)


@pytest.mark.parametrize("draws, trunc", [(99_999, 1000), (100_000, 999)])
def test_table_minimums(draws, trunc):
    with pytest.raises(InsufficientDataError):
        build_l2_bridge_table(draws, trunc, 0)
