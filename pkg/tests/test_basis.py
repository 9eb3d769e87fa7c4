import math
import warnings

import numpy as np
import pytest

from fdoutlier.basis import (
    HAAR,
    SCALING,
    FeatureMatrix,
    HaarIndex,
    Wavelet,
    haar_eval,
    haar_index_set,
    haar_matrix,
    haar_project,
    haar_reconstruct,
    load_features,
    load_pca_basis,
    pca_fit,
    pca_project,
    save_features,
    save_pca_basis,
)
from fdoutlier.curves import CurveSet, make_split
from fdoutlier.errors import DomainError, IncompleteBasisError, InsufficientDataError, UnsupportedShapeError


def naive_haar_coeffs(X):
    """theta[i, lam] = (1/p) sum_j X[i, j] phi_lam(t_j) by explicit loops over haar_eval."""
    n, p = X.shape
    index = haar_index_set(p)
    out = np.zeros((n, p))
    for i in range(n):
        for a, lam in enumerate(index):
            out[i, a] = sum(X[i, j] * haar_eval(lam, j / p) for j in range(p)) / p
    return out


def test_haar_eval_values():
    assert haar_eval(Wavelet(0, 0), 0.25) == 1.0
    assert haar_eval(SCALING, 0.9) == 1.0
    assert haar_eval(Wavelet(1, 1), 0.75) == pytest.approx(-math.sqrt(2), abs=1e-15)
    assert haar_eval(Wavelet(1, 1), 0.25) == 0.0


@pytest.mark.parametrize("t", [-0.1, 1.0, 1.5])
def test_haar_eval_domain(t):
    with pytest.raises(DomainError):
        haar_eval(SCALING, t)


def test_index_set_order_and_size():
    idx = haar_index_set(8)
    assert len(idx) == 8
    assert idx[:4] == [SCALING, Wavelet(0, 0), Wavelet(1, 0), Wavelet(1, 1)]
    assert idx == sorted(idx)
    assert HaarIndex.parse(Wavelet(2, 3).label) == Wavelet(2, 3)


def test_invalid_wavelet_index():
    with pytest.raises(DomainError):
        HaarIndex(1, 2)


def test_project_two_samples():
    fm = haar_project(CurveSet([[3.0, 1.0]]))
    np.testing.assert_allclose(fm.coeffs, [[2.0, 1.0]], atol=0)
    assert fm.level_index == (SCALING, Wavelet(0, 0))


def test_constant_curve():
    fm = haar_project(CurveSet(np.full((1, 16), 2.5)))
    assert fm.coeffs[0, 0] == 2.5
    np.testing.assert_allclose(fm.coeffs[0, 1:], 0.0, atol=1e-15)


def test_project_matches_naive_loops(rng):
    X = rng.standard_normal((3, 4))
    np.testing.assert_allclose(haar_project(CurveSet(X)).coeffs, naive_haar_coeffs(X), atol=1e-14)
    X = rng.standard_normal((2, 16))
    np.testing.assert_allclose(haar_project(CurveSet(X)).coeffs, naive_haar_coeffs(X), atol=1e-14)


def test_matrix_matches_pointwise_eval():
    p = 32
    H = haar_matrix(p)
    for a, lam in enumerate(haar_index_set(p)):
        assert [haar_eval(lam, j / p) for j in range(p)] == H[a].tolist()


def test_project_rejects_non_power_of_two():
    with pytest.raises(UnsupportedShapeError):
        haar_project(CurveSet(np.ones((2, 6))))


def test_reconstruct_examples():
    fm = FeatureMatrix([[2.0, 1.0]], [SCALING, Wavelet(0, 0)], HAAR, [0])
    np.testing.assert_allclose(haar_reconstruct(fm).values, [[3.0, 1.0]])
    zero = FeatureMatrix(np.zeros((2, 8)), haar_index_set(8), HAAR, [0, 1])
    np.testing.assert_array_equal(haar_reconstruct(zero).values, 0.0)


def test_reconstruct_round_trip(rng):
    X = rng.standard_normal((16, 16))
    back = haar_reconstruct(haar_project(CurveSet(X))).values
    assert np.abs(back - X).max() < 1e-10


def test_reconstruct_truncated():
    fm = haar_project(CurveSet(np.ones((1, 8)))).take(levels=haar_index_set(8)[1:])
    with pytest.raises(IncompleteBasisError):
        haar_reconstruct(fm)


@pytest.mark.parametrize("p", [2, 4, 8, 64, 256])
def test_discrete_orthonormality(p):
    H = haar_matrix(p)
    assert np.abs(H @ H.T / p - np.eye(p)).max() < 1e-12


def test_haar_noise_columns_nearly_uncorrelated():
    rng = np.random.default_rng(7)
    n, p = 400, 32
    theta = haar_project(CurveSet(rng.standard_normal((n, p)))).coeffs
    corr = np.corrcoef(theta, rowvar=False)
    off = np.abs(corr[np.triu_indices(p, 1)])
    assert np.mean(off < 4 / math.sqrt(n)) >= 0.95


# -- PCA -----------------------------------------------------------------------

def test_fit_indices_second_year():
    rng = np.random.default_rng(0)
    cs = CurveSet(rng.standard_normal((480, 8)))
    basis = pca_fit(cs, make_split(480, range(240, 480)))
    assert basis.fit_indices == tuple(range(241, 480, 2))
    assert len(basis.fit_indices) == 120


def test_constant_curves_have_no_components():
    cs = CurveSet(np.tile([1.0, 2.0, 3.0, 4.0], (10, 1)))
    basis = pca_fit(cs, make_split(10, range(8)))
    assert basis.n_components == 0


def test_insufficient_fit_set():
    cs = CurveSet(np.ones((6, 4)))
    split = make_split(6, [0, 1, 2, 3])
    object.__setattr__(split, "nominal_indices", (0, 1, 2))
    with pytest.raises(InsufficientDataError):
        pca_fit(cs, split)


def test_affine_plane_recovered():
    rng = np.random.default_rng(2)
    p = 4
    offset = rng.standard_normal(p)
    plane = rng.standard_normal((2, p))
    n = 13
    X = offset + rng.standard_normal((n, 2)) @ plane
    split = make_split(n, range(12))
    basis = pca_fit(CurveSet(X), split)
    assert basis.n_components == 2
    # independent oracle: SVD of the centered fit rows
    fit = X[list(basis.fit_indices)]
    _, s, vt = np.linalg.svd(fit - fit.mean(axis=0))
    assert np.sum(s > 1e-10 * s[0]) == 2
    ref = vt[:2].T @ vt[:2]
    U = basis.components.T / math.sqrt(p)
    np.testing.assert_allclose(U @ U.T, ref, atol=1e-8)
    np.testing.assert_allclose(basis.eigenvalues, s[:2] ** 2 / len(fit), rtol=1e-10)


def test_components_orthonormal_and_sorted(rng):
    X = rng.standard_normal((60, 16)) * np.linspace(3, 0.1, 16)
    basis = pca_fit(CurveSet(X), make_split(60, range(40)))
    gram = basis.components @ basis.components.T / 16
    assert np.abs(gram - np.eye(basis.n_components)).max() < 1e-10
    assert np.all(np.diff(basis.eigenvalues) <= 0)
    assert np.all(basis.eigenvalues >= 0)
    assert basis.n_components == 16


def test_fit_invariant_to_row_order_within_fit_set(rng):
    X = rng.standard_normal((20, 8))
    split = make_split(20, range(12))
    a = pca_fit(CurveSet(X), split)
    Y = X.copy()
    fit = list(a.fit_indices)
    Y[fit] = X[fit[::-1]]
    b = pca_fit(CurveSet(Y), split)
    np.testing.assert_allclose(a.eigenvalues, b.eigenvalues, rtol=1e-12)
    np.testing.assert_allclose(a.components, b.components, atol=1e-9)


def test_project_component_gives_unit_vector(rng):
    X = rng.standard_normal((30, 8))
    basis = pca_fit(CurveSet(X), make_split(30, range(20)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fm = pca_project(CurveSet(basis.components[:1]), basis, [0])
    expected = np.zeros(basis.n_components)
    expected[0] = 1.0
    np.testing.assert_allclose(fm.coeffs[0], expected, atol=1e-10)


def test_project_zero_curve(rng):
    X = rng.standard_normal((30, 8))
    basis = pca_fit(CurveSet(X), make_split(30, range(20)))
    fm = pca_project(CurveSet(np.zeros((1, 8))), basis, [0])
    np.testing.assert_array_equal(fm.coeffs, 0.0)


def test_project_matches_naive_dot_products(rng):
    X = rng.standard_normal((24, 8))
    split = make_split(24, range(16))
    basis = pca_fit(CurveSet(X), split)
    keep = basis.components[:4]
    small = type(basis)(basis.mean_curve, keep, basis.eigenvalues[:4], basis.fit_indices)
    fm = pca_project(CurveSet(X), small, [0, 2])
    for a, i in enumerate([0, 2]):
        for lam in range(4):
            naive = 0.0
            for j in range(8):
                naive += X[i, j] * keep[lam, j]
            assert abs(fm.coeffs[a, lam] - naive / 8) < 1e-12
    assert fm.source_rows == (0, 2)
    assert fm.level_index == (1, 2, 3, 4)


def test_project_warns_on_fit_rows(rng):
    X = rng.standard_normal((12, 4))
    basis = pca_fit(CurveSet(X), make_split(12, range(8)))
    with pytest.warns(UserWarning):
        pca_project(CurveSet(X), basis, [basis.fit_indices[0]])


def test_project_errors(rng):
    X = rng.standard_normal((12, 4))
    basis = pca_fit(CurveSet(X), make_split(12, range(8)))
    with pytest.raises(DomainError):
        pca_project(CurveSet(X), basis, [12])
    with pytest.raises(Exception):
        pca_project(CurveSet(np.ones((2, 8))), basis, [0])


def test_centered_projection(rng):
    X = rng.standard_normal((12, 4)) + 5
    basis = pca_fit(CurveSet(X), make_split(12, range(8)))
    raw = pca_project(CurveSet(X), basis, [0])
    cen = pca_project(CurveSet(X), basis, [0], center=True)
    shift = basis.components @ basis.mean_curve / 4
    np.testing.assert_allclose(raw.coeffs - cen.coeffs, shift[None, :], atol=1e-12)


def test_variance_prefix():
    cs = CurveSet(np.random.default_rng(1).standard_normal((40, 8)) * [10, 3, 1, 1, 0.1, 0.1, 0.1, 0.1])
    basis = pca_fit(cs, make_split(40, range(30)))
    d = basis.variance_prefix(0.95)
    cum = np.cumsum(basis.eigenvalues) / basis.eigenvalues.sum()
    assert cum[d - 1] >= 0.95 and (d == 1 or cum[d - 2] < 0.95)


def test_feature_and_basis_serialization(tmp_path, rng):
    X = rng.standard_normal((12, 8))
    fm = haar_project(CurveSet(X))
    save_features(fm, tmp_path / "f.csv")
    back = load_features(tmp_path / "f.csv")
    assert back.level_index == fm.level_index and back.basis_kind == HAAR
    np.testing.assert_array_equal(back.coeffs, fm.coeffs)
    basis = pca_fit(CurveSet(X), make_split(12, range(8)))
    save_pca_basis(basis, tmp_path / "b.csv")
    again = load_pca_basis(tmp_path / "b.csv")
    np.testing.assert_array_equal(again.components, basis.components)
    assert again.fit_indices == basis.fit_indices
