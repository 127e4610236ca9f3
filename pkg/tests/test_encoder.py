import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ckn.channels import InputType
from ckn.encoder import (CknModel, encode_batch, encode_layer, encode_patch, gaussian_pool,
                         grad_alpha, grad_layer_params, grad_orientations, grad_soft_bins,
                         intermediate_map, output_shape, pooled_size, pooling_matrix)

from conftest import random_layer


def test_reference_output_shapes():
    assert output_shape(51, [(1, 3, 16), (4, 2, 1024)]) == (7, 7, 1024)
    assert output_shape(51, [(5, 5, 512)]) == (9, 9, 512)
    assert output_shape(51, [(3, 3, 128), (2, 2, 512)]) == (7, 7, 512)


@given(n=st.integers(1, 60), s=st.integers(1, 6))
def test_pooled_size_counts_centers(n, s):
    assert pooled_size(n, s) == len(range(s // 2, n, s))


def test_pooling_matrix_truncation():
    P = pooling_matrix(20, 3, 1.5)
    assert P[0, 1] == 1.0  # first center at index 1
    assert P[0, 1 + 3] == pytest.approx(math.exp(-4.0))
    assert P[0, 1 + 4] == 0.0  # |d| = 4 > ceil(3)


def test_pooling_matches_brute_force(rng):
    fmap = rng.random((9, 8, 2))
    s, beta = 2, 1.3
    out = gaussian_pool(fmap, s, beta)
    cut = math.ceil(2 * beta)
    for a, cy in enumerate(range(s // 2, 9, s)):
        for b, cx in enumerate(range(s // 2, 8, s)):
            acc = np.zeros(2)
            for y in range(9):
                for x in range(8):
                    if abs(y - cy) <= cut and abs(x - cx) <= cut:
                        acc += math.exp(-((y - cy) ** 2 + (x - cx) ** 2) / beta**2) * fmap[y, x]
            np.testing.assert_allclose(out[a, b], acc, rtol=1e-12)


def test_intermediate_map_zero_rows_stay_zero(rng):
    layer = random_layer(rng, 4, 3)
    rows = np.vstack([np.zeros(4), rng.random(4)])
    out = intermediate_map(rows, layer)
    assert out[0].tolist() == [0.0, 0.0, 0.0] and np.all(out[1] > 0)


def test_contrast_normalization_is_scale_covariant(rng):
    layer = random_layer(rng, 8, 5, subpatch=2)
    m = rng.standard_normal((6, 6, 2))
    np.testing.assert_allclose(encode_layer(3.0 * m, layer), 3.0 * encode_layer(m, layer))


def test_layer_rejects_wrong_channels(rng):
    with pytest.raises(ValueError, match="channels"):
        encode_layer(rng.random((6, 6, 3)), random_layer(rng, 8, 5, subpatch=2))


def test_grad_alpha_is_neighbour_bin_distance():
    assert grad_alpha(16) == pytest.approx(2 * math.sin(math.pi / 16))


def test_analytic_layer_equals_soft_bins(rng):
    g = rng.standard_normal((7, 7, 2))
    params = grad_layer_params(16)
    direct = grad_soft_bins(g, 16)
    via_features = intermediate_map(g.reshape(-1, 2), params).reshape(7, 7, 16)
    # float32 parameters limit the agreement
    np.testing.assert_allclose(via_features, direct, rtol=1e-5)


def test_soft_bins_at_centers_and_zero_gradient():
    th = grad_orientations(16)
    g = np.stack([2.5 * np.cos(th), 2.5 * np.sin(th)], axis=-1)[None]
    bins = grad_soft_bins(g, 16)
    np.testing.assert_array_equal(np.diagonal(bins[0]), np.hypot(g[0, :, 0], g[0, :, 1]))
    assert not grad_soft_bins(np.zeros((2, 2, 2)), 16).any()
    with pytest.raises(ValueError):
        grad_soft_bins(np.zeros((2, 2, 3)), 16)


def small_grad_model(rng):
    return CknModel(InputType.GRAD, [grad_layer_params(8, 3),
                                     random_layer(rng, 4 * 4 * 8, 6, subpatch=4, subsample=2,
                                                  beta=2.0)], input_side=21)


def test_model_dim_and_encode(rng):
    model = small_grad_model(rng)
    d = encode_patch(rng.random((21, 21, 3)), model)
    assert d.shape == (model.dim,) and model.dim == output_shape(21, model.architecture)[0] ** 2 * 6


def test_encode_rejects_wrong_side(rng):
    with pytest.raises(ValueError, match="21x21"):
        encode_patch(rng.random((19, 19, 3)), small_grad_model(rng))


def test_batch_is_thread_count_invariant(rng):
    model = small_grad_model(rng)
    patches = [rng.random((21, 21, 3)) for _ in range(6)]
    np.testing.assert_array_equal(encode_batch(patches, model, 1), encode_batch(patches, model, 3))


def test_model_validates_channel_chain(rng):
    with pytest.raises(ValueError, match="channels"):
        CknModel(InputType.GRAD, [grad_layer_params(8), random_layer(rng, 4 * 4 * 7, 6, 4)])
    with pytest.raises(ValueError, match="channels"):
        CknModel(InputType.RAW, [random_layer(rng, 2 * 2 * 2, 6, 2)])
