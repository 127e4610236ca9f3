import numpy as np
import pytest
from hypothesis import given, strategies as st

from ckn.pca import pca_apply, pca_fit


def correlated(rng, n, d):
    A = rng.standard_normal((d, d)) * np.linspace(3, 0.1, d)
    return rng.standard_normal((n, d)) @ A + 5.0


def test_full_whitening_gives_unit_covariance(rng):
    X = correlated(rng, 2000, 12)
    Y = pca_apply(X, pca_fit(X, 8, "full"))
    np.testing.assert_allclose(Y.T @ Y / len(Y), np.eye(8), atol=1e-10)


def test_semi_whitening_variances_are_stds(rng):
    X = correlated(rng, 2000, 12)
    m = pca_fit(X, 6, "semi")
    Y = pca_apply(X, m)
    np.testing.assert_allclose(Y.var(axis=0), m.stds[:6], rtol=1e-10)


def test_no_whitening_is_orthonormal_projection(rng):
    X = correlated(rng, 500, 10)
    m = pca_fit(X, 10, "none")
    np.testing.assert_allclose(m.L @ m.L.T, np.eye(10), atol=1e-12)
    Y = pca_apply(X, m)
    np.testing.assert_allclose(np.linalg.norm(Y, axis=1), np.linalg.norm(X - X.mean(0), axis=1))


def test_components_ordered_by_variance(rng):
    m = pca_fit(correlated(rng, 1000, 8), 8, "none")
    assert np.all(np.diff(m.singular_values) <= 0)


@given(seed=st.integers(0, 1000))
def test_sign_convention_is_pinned(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((40, 5))
    m = pca_fit(X, 3, "none")
    idx = np.argmax(np.abs(m.L), axis=1)
    assert np.all(m.L[np.arange(3), idx] > 0)


def test_errors(rng):
    X = rng.random((10, 20))
    with pytest.raises(ValueError, match="samples"):
        pca_fit(X, 15)
    with pytest.raises(ValueError, match="mode"):
        pca_fit(X, 5, "partial")
    with pytest.raises(ValueError, match="dimension"):
        pca_apply(rng.random((2, 7)), pca_fit(X, 5))


def test_constant_data_does_not_blow_up():
    m = pca_fit(np.ones((10, 4)), 2, "full")
    assert np.all(np.isfinite(pca_apply(np.ones((3, 4)), m)))
