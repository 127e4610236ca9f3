import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ckn.maps import (Keypoint, RasterError, bilinear_clamped, dense_keypoints, extract_patch,
                      load_image, read_keypoints, save_image, to_gray, write_keypoints)


def test_unit_scale_integer_center_is_a_crop(rng):
    img = rng.random((40, 50, 3))
    p = extract_patch(img, Keypoint(20, 18), side=11)
    np.testing.assert_array_equal(p.pixels, img[13:24, 15:26])


def test_bilinear_matches_hand_interpolation():
    img = np.array([[0.0, 1.0], [2.0, 3.0]])[:, :, None]
    # f(x, y) = x + 2y on this grid
    v = bilinear_clamped(img, np.array([0.25]), np.array([0.5]))
    assert v[0, 0] == pytest.approx(0.25 + 1.0)


def test_coordinates_clamp_to_border():
    img = np.arange(12, dtype=float).reshape(3, 4, 1)
    v = bilinear_clamped(img, np.array([-5.0, 10.0]), np.array([-1.0, 99.0]))
    assert v[:, 0].tolist() == [0.0, 11.0]


def test_half_turn_flips_the_crop(rng):
    img = rng.random((31, 31, 1))
    a = extract_patch(img, Keypoint(15, 15), side=9).pixels
    b = extract_patch(img, Keypoint(15, 15, 1.0, math.pi), side=9).pixels
    np.testing.assert_allclose(b, a[::-1, ::-1], atol=1e-12)


def test_scale_is_sample_spacing(rng):
    img = rng.random((40, 40, 3))
    p = extract_patch(img, Keypoint(20, 20, 2.0), side=5).pixels
    np.testing.assert_array_equal(p, img[16:25:2, 16:25:2])


def test_bad_side_and_outside_window(rng):
    img = rng.random((20, 20))
    with pytest.raises(ValueError):
        extract_patch(img, Keypoint(10, 10), side=4)
    with pytest.raises(ValueError, match="outside"):
        extract_patch(img, Keypoint(500, 500), side=5)


@given(h=st.integers(51, 130), w=st.integers(51, 130), stride=st.integers(1, 20),
       scale=st.sampled_from([0.5, 1.0, 1.5]))
def test_dense_windows_stay_inside(h, w, stride, scale):
    img = np.zeros((h, w))
    kps = dense_keypoints(img, stride, [scale])
    half = 25 * scale
    for k in kps:
        assert k.x - half >= 0 and k.x + half <= w - 1
        assert k.y - half >= 0 and k.y + half <= h - 1
    assert kps == sorted(kps, key=lambda k: (k.scale, k.y, k.x))


def test_keypoint_file_round_trip(tmp_path):
    kps = [Keypoint(1.5, 2.25, 1.0, 0.1), Keypoint(10.0, 3.0, 2.0, -1.0)]
    write_keypoints(tmp_path / "k.kp", kps)
    assert read_keypoints(tmp_path / "k.kp") == kps


def test_keypoint_file_rejects_bad_lines(tmp_path):
    (tmp_path / "k.kp").write_text("1 2 3\n")
    with pytest.raises(ValueError, match="k.kp:1"):
        read_keypoints(tmp_path / "k.kp")


def test_image_round_trip_quantizes_to_8_bits(tmp_path, rng):
    img = rng.random((7, 9, 3))
    save_image(tmp_path / "a.png", img)
    back = load_image(tmp_path / "a.png")
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12


def test_corrupt_raster_names_the_file(tmp_path):
    bad = tmp_path / "broken.png"
    bad.write_bytes(b"\x89PNG not really")
    with pytest.raises(RasterError, match="broken.png"):
        load_image(bad)


def test_gray_weights_sum_to_one():
    assert to_gray(np.ones((2, 2, 3))) == pytest.approx(np.ones((2, 2)))
