from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from curveface.imgio import (CropRect, GrayImage, RgbImage, crop, load_image, median_filter, preprocess,
                             read_pnm, resize_to, rgb_to_gray, write_pgm, write_ppm)
from oracles import bilinear_oracle, median_filter_oracle

small_images = arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)),
                      elements=st.integers(0, 255).map(float))


def test_gray_rejects_out_of_range_and_bad_shapes():
    with pytest.raises(ValueError):
        GrayImage(np.full((2, 2), 256.0))
    with pytest.raises(ValueError):
        GrayImage(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        GrayImage(np.array([[np.nan]]))
    with pytest.raises(ValueError):
        RgbImage(np.zeros((2, 2)))


def test_rgb_to_gray_examples():
    assert rgb_to_gray(RgbImage(np.full((1, 1, 3), 77.0))).data[0, 0] == 77.0
    assert rgb_to_gray(RgbImage(np.array([[[30.0, 60.0, 90.0]]]))).data[0, 0] == 60.0
    rgb = np.random.default_rng(0).uniform(0, 255, (7, 9, 3))
    gray = rgb_to_gray(RgbImage(rgb)).data
    for y in range(7):
        for x in range(9):
            assert gray[y, x] == pytest.approx((rgb[y, x, 0] + rgb[y, x, 1] + rgb[y, x, 2]) / 3)


def test_median_filter_examples():
    const = GrayImage(np.full((5, 6), 42.0))
    assert median_filter(const, 1) == const
    impulse = np.zeros((5, 5))
    impulse[2, 2] = 255
    assert median_filter(GrayImage(impulse), 1).data[2, 2] == 0
    img = np.random.default_rng(1).integers(0, 256, (16, 16)).astype(float)
    assert np.array_equal(median_filter(GrayImage(img), 1).data, median_filter_oracle(img, 1))
    assert median_filter(GrayImage(img), 0) == GrayImage(img)
    with pytest.raises(ValueError):
        median_filter(GrayImage(img), -1)


@settings(max_examples=40, deadline=None)
@given(small_images, st.integers(0, 2))
def test_median_filter_matches_oracle_and_stays_in_range(img, r):
    out = median_filter(GrayImage(img), r).data
    assert np.array_equal(out, median_filter_oracle(img, r) if r else img)
    assert out.min() >= img.min() and out.max() <= img.max()


def test_crop_examples():
    img = GrayImage(np.random.default_rng(2).uniform(0, 255, (6, 8)))
    assert crop(img, CropRect(0, 0, 8, 6)) == img
    one = crop(img, CropRect(0, 0, 1, 1))
    assert one.shape == (1, 1) and one.data[0, 0] == img.data[0, 0]
    rect = CropRect(2, 1, 5, 3)
    out = crop(img, rect)
    for y in range(rect.h):
        for x in range(rect.w):
            assert out.data[y, x] == img.data[y + rect.y, x + rect.x]
    for bad in (CropRect(4, 0, 5, 2), CropRect(-1, 0, 2, 2), CropRect(0, 0, 0, 1)):
        with pytest.raises(ValueError):
            crop(img, bad)


def test_resize_examples():
    img = GrayImage(np.random.default_rng(3).uniform(0, 255, (5, 7)))
    assert resize_to(img, 7, 5) == img
    assert np.all(resize_to(GrayImage(np.full((3, 4), 9.0)), 11, 6).data == 9.0)
    checker = np.array([[0.0, 255.0], [255.0, 0.0]])
    up = resize_to(GrayImage(checker), 4, 4).data
    assert np.allclose(up, bilinear_oracle(checker, 4, 4))
    # corner pixel: centre maps to -0.25, clamped to source pixel 0
    assert up[0, 0] == 0.0 and up[1, 1] == pytest.approx(255 * 0.375)
    with pytest.raises(ValueError):
        resize_to(img, 0, 3)


@settings(max_examples=30, deadline=None)
@given(small_images, st.integers(1, 15), st.integers(1, 15))
def test_resize_matches_oracle(img, w, h):
    assert np.allclose(resize_to(GrayImage(img), w, h).data, bilinear_oracle(img, w, h))


def test_preprocess_order_and_size():
    rgb = RgbImage(np.random.default_rng(4).uniform(0, 255, (40, 50, 3)))
    out = preprocess(rgb, CropRect(5, 5, 30, 30), 1, (64, 64))
    manual = resize_to(median_filter(crop(rgb_to_gray(rgb), CropRect(5, 5, 30, 30)), 1), 64, 64)
    assert out.shape == (64, 64) and out == manual


def test_pnm_round_trip(tmp_path):
    img = GrayImage(np.random.default_rng(5).integers(0, 256, (9, 13)).astype(float))
    for binary in (True, False):
        path = tmp_path / f"a{int(binary)}.pgm"
        write_pgm(path, img, binary=binary)
        assert read_pnm(path) == img
    rgb = RgbImage(np.random.default_rng(6).integers(0, 256, (4, 5, 3)).astype(float))
    write_ppm(tmp_path / "c.ppm", rgb)
    assert np.array_equal(load_image(tmp_path / "c.ppm").data, rgb.data)


def test_pnm_header_comments_and_16_bit(tmp_path):
    p = tmp_path / "x.pgm"
    p.write_bytes(b"P2\n# comment\n2 1\n# another\n65535\n0 65535\n")
    assert np.array_equal(read_pnm(p).data, [[0.0, 255.0]])
    p.write_bytes(b"P5\n2 1\n65535\n" + np.array([0, 65535], dtype=">u2").tobytes())
    assert np.array_equal(read_pnm(p).data, [[0.0, 255.0]])
    p.write_bytes(b"P7\n1 1\n255\n\x00")
    with pytest.raises(ValueError):
        read_pnm(p)


def test_load_png_through_pillow(tmp_path):
    Image = pytest.importorskip("PIL.Image")
    arr = np.random.default_rng(7).integers(0, 256, (6, 5)).astype(np.uint8)
    Image.fromarray(arr).save(tmp_path / "g.png")
    assert np.array_equal(load_image(tmp_path / "g.png").data, arr.astype(float))
