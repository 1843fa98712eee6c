import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rrmggd.errors import CorruptFile, NonRgb, TooSmall, UnsupportedFormat
from rrmggd.imageio import (
    RgbImage,
    check_min_size,
    crop_to_pyramid_size,
    encode_ppm,
    load_image,
    write_ppm,
)


def _write(tmp_path, name, data):
    p = tmp_path / name
    p.write_bytes(data)
    return p


def test_p3_white_maps_to_one(tmp_path):
    p = _write(tmp_path, "w.ppm", b"P3\n2 2\n255\n" + b"255 255 255 " * 4)
    img = load_image(p)
    assert (img.width, img.height) == (2, 2)
    assert np.all(img.planes == 1.0)
    with pytest.raises(TooSmall):
        check_min_size(img)
    with pytest.raises(TooSmall):
        load_image(p, min_size=32)


def test_p6_zeros(tmp_path):
    p = _write(tmp_path, "z.ppm", b"P6\n64 64\n255\n" + bytes(64 * 64 * 3))
    img = load_image(p)
    assert img.planes.shape == (3, 64, 64)
    assert np.all(img.planes == 0.0)


def test_sample_mapping_and_channel_order(tmp_path):
    p = _write(tmp_path, "c.ppm", b"P6 2 1 255\n" + bytes([255, 0, 51, 0, 102, 255]))
    img = load_image(p)
    np.testing.assert_array_equal(img.r, [[1.0, 0.0]])
    np.testing.assert_array_equal(img.g, [[0.0, 102 / 255]])
    np.testing.assert_array_equal(img.b, [[51 / 255, 1.0]])


def test_p3_with_comments_roundtrips_to_canonical_p6(tmp_path):
    rng = np.random.default_rng(3)
    pixels = rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8)
    body = "\n".join(" ".join(str(v) for v in row.ravel()) + " # row" for row in pixels)
    text = "P3\n# made by hand\n7 # width\n5\n255\n" + body + "\n"
    src = _write(tmp_path, "in.ppm", text.encode())
    out = tmp_path / "out.ppm"
    write_ppm(load_image(src), out)
    canonical = b"P6\n7 5\n255\n" + pixels.tobytes()
    assert out.read_bytes() == canonical


def test_load_is_deterministic(corpus_paths):
    a, b = load_image(corpus_paths[0]), load_image(corpus_paths[0])
    assert a.planes.tobytes() == b.planes.tobytes()


@pytest.mark.parametrize(
    "data, exc",
    [
        (b"P5\n2 2\n255\n" + bytes(4), NonRgb),
        (b"P2\n2 2\n255\n0 0 0 0\n", NonRgb),
        (b"P6\n2 2\n65535\n" + bytes(24), UnsupportedFormat),
        (b"GIF89a....", UnsupportedFormat),
        (b"P6\n2 2\n255\n" + bytes(5), CorruptFile),
        (b"P6\n2 x\n255\n" + bytes(12), CorruptFile),
        (b"P3\n2 2\n255\n1 2 3\n", CorruptFile),
        (b"P3\n1 1\n255\n1 2 300\n", CorruptFile),
        (b"P6\n2", CorruptFile),
    ],
)
def test_bad_files(tmp_path, data, exc):
    with pytest.raises(exc):
        load_image(_write(tmp_path, "bad.ppm", data))


def test_png_rgb_and_rejections(tmp_path):
    Image = pytest.importorskip("PIL.Image")
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, size=(40, 48, 3), dtype=np.uint8)
    Image.fromarray(pixels, "RGB").save(tmp_path / "rgb.png")
    img = load_image(tmp_path / "rgb.png")
    np.testing.assert_array_equal(img.to_uint8(), pixels)

    Image.fromarray(pixels[..., 0], "L").save(tmp_path / "gray.png")
    with pytest.raises(NonRgb):
        load_image(tmp_path / "gray.png")
    rgba = np.dstack([pixels, np.full(pixels.shape[:2], 255, np.uint8)])
    Image.fromarray(rgba, "RGBA").save(tmp_path / "rgba.png")
    with pytest.raises(NonRgb):
        load_image(tmp_path / "rgba.png")


def test_planes_are_read_only():
    img = RgbImage(np.zeros((3, 4, 4)))
    with pytest.raises(ValueError):
        img.planes[0, 0, 0] = 1.0


def test_rejects_out_of_range_samples():
    with pytest.raises(ValueError):
        RgbImage(np.full((3, 4, 4), 1.5))


def _blank(w, h):
    return RgbImage(np.zeros((3, h, w)))


def test_crop_noop():
    img = _blank(512, 384)
    assert crop_to_pyramid_size(img, 4) is img


def test_crop_centered():
    ramp = np.broadcast_to(np.arange(100) / 99.0, (3, 100, 100))
    out = crop_to_pyramid_size(RgbImage(ramp), 4)
    assert (out.width, out.height) == (96, 96)
    # 16 * 6 = 96, offset (100 - 96) // 2 = 2
    np.testing.assert_array_equal(out.r[0], np.arange(2, 98) / 99.0)


def test_crop_too_small():
    with pytest.raises(TooSmall):
        crop_to_pyramid_size(_blank(15, 64), 4)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 300), st.integers(1, 300), st.integers(1, 5))
def test_crop_dimensions_property(w, h, scales):
    step = 2**scales
    if w < step or h < step:
        with pytest.raises(TooSmall):
            crop_to_pyramid_size(_blank(w, h), scales)
        return
    out = crop_to_pyramid_size(_blank(w, h), scales)
    assert out.width % step == 0 and out.height % step == 0
    assert 0 <= w - out.width < step and 0 <= h - out.height < step


def test_encode_header():
    assert encode_ppm(np.zeros((1, 2, 3), np.uint8)) == b"P6\n2 1\n255\n" + bytes(6)
