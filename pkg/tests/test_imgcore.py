import logging

import numpy as np
import pytest

from errors import InvalidInputError
from imgcore import (
    build_pyramid,
    downsample_disparity,
    downsample_half,
    max_pyramid_levels,
    require_channels,
    saturation_channel,
    to_grayscale,
    upsample_disparity,
    value_channel,
    warp_horizontal,
)


def test_grayscale_of_white_is_one():
    gray = to_grayscale(np.ones((4, 5, 3)))
    assert gray.shape == (4, 5)
    assert np.allclose(gray, 1.0)


def test_grayscale_rejects_single_channel():
    with pytest.raises(InvalidInputError):
        to_grayscale(np.ones((4, 5)))


def test_require_channels_message_names_input():
    with pytest.raises(InvalidInputError, match="right image"):
        require_channels(np.ones((3, 3, 4)), 3, "right image")


def test_saturation_and_value_channels():
    img = np.zeros((1, 3, 3))
    img[0, 1] = [1.0, 0.0, 0.0]
    img[0, 2] = [0.5, 0.5, 0.5]
    assert saturation_channel(img).tolist() == [[0.0, 1.0, 0.0]]
    assert value_channel(img).tolist() == [[0.0, 1.0, 0.5]]


def test_downsample_half_rounds_up():
    assert downsample_half(np.zeros((9, 7))).shape == (5, 4)
    assert downsample_half(np.zeros((9, 7, 3))).shape == (5, 4, 3)


def test_downsample_half_rejects_tiny_images():
    with pytest.raises(InvalidInputError):
        downsample_half(np.zeros((5, 10)))


def test_disparity_resampling_scales_values():
    half = downsample_disparity(np.full((16, 20), -4.0))
    assert half.shape == (8, 10)
    assert np.allclose(half, -2.0)

    full = upsample_disparity(half, (16, 20))
    assert full.shape == (16, 20)
    assert np.allclose(full, -4.0)


def test_build_pyramid_levels():
    pyr = build_pyramid(np.random.default_rng(0).random((64, 64)), 4)
    assert len(pyr) == 4
    assert pyr.shapes == [(64, 64), (32, 32), (16, 16), (8, 8)]
    assert pyr.coarsest.shape == (8, 8)


def test_build_pyramid_reduces_levels_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        pyr = build_pyramid(np.zeros((64, 40)), 10)
    assert len(pyr) == max_pyramid_levels((64, 40)) == 3
    assert pyr.requested_levels == 10
    assert "reduced" in caplog.text


def test_build_pyramid_needs_a_level():
    with pytest.raises(InvalidInputError):
        build_pyramid(np.zeros((16, 16)), 0)


def test_warp_zero_disparity_is_identity(rng):
    img = rng.random((6, 9))
    out, mask = warp_horizontal(img, np.zeros((6, 9)))
    assert np.array_equal(out, img)
    assert mask.all()


def test_warp_integer_shift_and_border():
    img = np.tile(np.arange(10, dtype=float), (3, 1))
    out, mask = warp_horizontal(img, np.full((3, 10), -2.0))
    assert np.array_equal(mask[:, :2], np.zeros((3, 2)))
    assert mask[:, 2:].all()
    assert np.array_equal(out[:, 2:], img[:, :-2])
    assert np.array_equal(out[:, :2], np.zeros((3, 2)))


def test_warp_fractional_shift_interpolates_linearly():
    img = np.tile(np.arange(8, dtype=float), (2, 1))
    out, mask = warp_horizontal(img, np.full((2, 8), 0.5))
    assert np.allclose(out[:, :7], np.arange(7) + 0.5)
    assert not mask[:, 7].any()


def test_warp_color_image(rng):
    img = rng.random((4, 6, 3))
    out, mask = warp_horizontal(img, np.full((4, 6), 1.0))
    assert out.shape == img.shape
    assert np.allclose(out[:, :5], img[:, 1:])
    assert np.array_equal(out[:, 5], np.zeros((4, 3)))


def test_warp_rejects_size_mismatch():
    with pytest.raises(InvalidInputError):
        warp_horizontal(np.zeros((4, 6)), np.zeros((4, 5)))
