import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vll import regression
from vll.errors import ShapeMismatchError
from vll.kernels import GramKernel


def _random_psd(n, seed, rank=None):
    rng = np.random.default_rng(seed)
    rank = n if rank is None else rank
    a = rng.standard_normal((n, rank))
    return a @ a.T


def _gram(mat):
    return GramKernel(mat, "entk0", np.arange(mat.shape[0]))


def test_fit_matches_dense_solve():
    n = 20
    k = _random_psd(n, 0)
    rng = np.random.default_rng(1)
    y = rng.standard_normal(n)
    for lam in (1e-6, 1e-2, 1.0):
        fit = regression.fit(_gram(k), y, ridge_lambda=lam)
        ref = np.linalg.solve(k + lam * np.eye(n), y)
        assert np.allclose(fit.dual_coefficients, ref, rtol=1e-8, atol=1e-10)
        assert fit.ridge_lambda == lam


def test_ridgeless_interpolates():
    n = 15
    k = _random_psd(n, 2)
    y = np.random.default_rng(3).standard_normal(n)
    fit = regression.fit(_gram(k), y, ridge_lambda=0.0)
    pred = regression.predict(fit, k)
    assert np.abs(pred - y).max() < 1e-8


def test_ridgeless_minimum_norm_on_degenerate_gram():
    # rank-deficient K: the pseudo-inverse picks the minimum-norm dual vector
    n, r = 12, 5
    k = _random_psd(n, 4, rank=r)
    rng = np.random.default_rng(5)
    # target inside the column space, so interpolation is achievable
    y = k @ rng.standard_normal(n)
    fit = regression.fit(_gram(k), y, ridge_lambda=0.0)
    pred = regression.predict(fit, k)
    assert np.abs(pred - y).max() < 1e-7
    ref = np.linalg.pinv(k, hermitian=True) @ y
    assert np.allclose(fit.dual_coefficients, ref, rtol=1e-7, atol=1e-9)


def test_train_error_monotone_in_ridge():
    n = 18
    k = _random_psd(n, 6)
    y = np.random.default_rng(7).standard_normal(n)
    errs = []
    for lam in (1e-8, 1e-4, 1e-2, 1.0, 10.0):
        fit = regression.fit(_gram(k), y, ridge_lambda=lam)
        errs.append(regression.gen_error(regression.predict(fit, k), y))
    assert all(a <= b + 1e-12 for a, b in zip(errs, errs[1:]))


def test_ridge_continuity_at_zero():
    n = 14
    k = _random_psd(n, 8)
    y = np.random.default_rng(9).standard_normal(n)
    d0 = regression.fit(_gram(k), y, ridge_lambda=0.0).dual_coefficients
    d_eps = regression.fit(_gram(k), y, ridge_lambda=1e-12).dual_coefficients
    assert np.allclose(d0, d_eps, rtol=1e-4, atol=1e-8)


def test_predict_shape_checks():
    k = _random_psd(6, 10)
    y = np.zeros(6)
    fit = regression.fit(_gram(k), y + 1.0, ridge_lambda=0.1)
    with pytest.raises(ShapeMismatchError):
        regression.predict(fit, np.zeros((3, 5)))
    with pytest.raises(ShapeMismatchError):
        regression.fit(_gram(k), np.zeros(5), ridge_lambda=0.1)


def test_gen_error_oracle():
    assert regression.gen_error(np.array([1.0, 2.0]), np.array([0.0, 0.0])) == 2.5


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**31 - 1), st.floats(1e-8, 10.0))
def test_fit_residual_property(n, seed, lam):
    # (K + lam I) duals == y to solver precision
    k = _random_psd(n, seed)
    y = np.random.default_rng(seed + 1).standard_normal(n)
    fit = regression.fit(_gram(k), y, ridge_lambda=lam)
    resid = (k + lam * np.eye(n)) @ fit.dual_coefficients - y
    scale = max(1.0, np.abs(y).max())
    assert np.abs(resid).max() < 1e-8 * scale
