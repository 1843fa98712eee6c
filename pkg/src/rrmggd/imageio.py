"""Decoding of 8-bit RGB images into floating point channel planes.

PPM (P3 ASCII and P6 binary, maxval 255) is decoded here directly. PNG is
accepted when Pillow is importable; only 8-bit RGB PNGs are accepted.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass

import numpy as np

from .errors import CorruptFile, NonRgb, TooSmall, UnsupportedFormat

MIN_SIZE = 32

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True, eq=False)
class RgbImage:
    """Three equally sized planes with samples in [0, 1].

    ``planes`` has shape ``(3, height, width)`` and is stored read-only.
    """

    planes: np.ndarray

    def __post_init__(self):
        planes = np.array(self.planes, dtype=np.float64)
        if planes.ndim != 3 or planes.shape[0] != 3:
            raise ValueError(f"expected planes of shape (3, H, W), got {planes.shape}")
        if planes.shape[1] == 0 or planes.shape[2] == 0:
            raise ValueError("image has no pixels")
        if not np.all(np.isfinite(planes)) or planes.min() < 0.0 or planes.max() > 1.0:
            raise ValueError("samples must lie in [0, 1]")
        planes.setflags(write=False)
        object.__setattr__(self, "planes", planes)

    @classmethod
    def from_uint8(cls, pixels: np.ndarray) -> RgbImage:
        """Build from an ``(H, W, 3)`` uint8 array using v / 255."""
        pixels = np.asarray(pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise NonRgb(f"expected (H, W, 3) pixels, got shape {pixels.shape}")
        return cls(np.moveaxis(pixels.astype(np.float64) / 255.0, 2, 0))

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def r(self) -> np.ndarray:
        return self.planes[0]

    @property
    def g(self) -> np.ndarray:
        return self.planes[1]

    @property
    def b(self) -> np.ndarray:
        return self.planes[2]

    def to_uint8(self) -> np.ndarray:
        """``(H, W, 3)`` uint8 array, rounding ``v * 255`` to nearest."""
        return np.rint(np.moveaxis(self.planes, 0, 2) * 255.0).astype(np.uint8)

    def permute_channels(self, order) -> RgbImage:
        return RgbImage(self.planes[list(order)])


def check_min_size(img: RgbImage, min_size: int = MIN_SIZE) -> None:
    if img.width < min_size or img.height < min_size:
        raise TooSmall(
            f"image is {img.width}x{img.height}, minimum is {min_size}x{min_size}"
        )


# --- PPM -------------------------------------------------------------------

_TOKEN = re.compile(rb"\s*(?:#[^\n\r]*[\n\r]\s*)*(\S+)")


def _header_tokens(data: bytes, count: int, pos: int):
    tokens = []
    for _ in range(count):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise CorruptFile("truncated PPM header")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens, pos


def _parse_int(tok: bytes, what: str) -> int:
    if not tok.isdigit():
        raise CorruptFile(f"bad {what} in PPM header: {tok!r}")
    return int(tok)


def decode_ppm(data: bytes) -> np.ndarray:
    """Decode P3/P6 bytes into an ``(H, W, 3)`` uint8 array."""
    magic = data[:2]
    if magic in (b"P2", b"P5", b"P1", b"P4"):
        raise NonRgb(f"{magic.decode()} is a grayscale/bitmap format")
    if magic not in (b"P3", b"P6"):
        raise UnsupportedFormat("not a PPM file")
    (w_tok, h_tok, max_tok), pos = _header_tokens(data, 3, 2)
    width = _parse_int(w_tok, "width")
    height = _parse_int(h_tok, "height")
    maxval = _parse_int(max_tok, "maxval")
    if maxval != 255:
        raise UnsupportedFormat(f"only maxval 255 is supported, got {maxval}")
    if width == 0 or height == 0:
        raise CorruptFile("zero image dimension")
    count = width * height * 3

    if magic == b"P6":
        # exactly one whitespace byte separates the header from the raster
        if pos >= len(data) or data[pos : pos + 1] not in (b" ", b"\n", b"\r", b"\t"):
            raise CorruptFile("missing separator after PPM header")
        raster = data[pos + 1 : pos + 1 + count]
        if len(raster) != count:
            raise CorruptFile(f"expected {count} raster bytes, found {len(raster)}")
        values = np.frombuffer(raster, dtype=np.uint8)
    else:
        body = re.sub(rb"#[^\n\r]*", b" ", data[pos:]).split()
        if len(body) < count:
            raise CorruptFile(f"expected {count} samples, found {len(body)}")
        try:
            values = np.array([int(t) for t in body[:count]], dtype=np.int64)
        except ValueError as exc:
            raise CorruptFile(f"non-integer sample in P3 body: {exc}") from None
        if values.min() < 0 or values.max() > 255:
            raise CorruptFile("P3 sample outside [0, 255]")
        values = values.astype(np.uint8)
    return values.reshape(height, width, 3)


def encode_ppm(pixels: np.ndarray) -> bytes:
    """Canonical P6 encoding: ``P6\\n<w> <h>\\n255\\n`` followed by the raster."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    h, w, _ = pixels.shape
    return b"P6\n%d %d\n255\n" % (w, h) + pixels.tobytes()


def write_ppm(img: RgbImage, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(img.to_uint8()))


# --- PNG (optional) --------------------------------------------------------


def _decode_png(path) -> np.ndarray:
    try:
        from PIL import Image
    except ImportError:  # pragma: no cover - Pillow is optional
        raise UnsupportedFormat("PNG support requires Pillow") from None
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "P" and "transparency" not in im.info:
                pal = im.getpalette() or []
                if len(pal) % 3 == 0:
                    im = im.convert("RGB")
                    mode = "RGB"
            if mode in ("L", "LA", "I", "I;16", "1", "RGBA", "P", "PA", "La", "RGBa"):
                raise NonRgb(f"PNG mode {mode} is not 8-bit RGB")
            if mode != "RGB":
                raise UnsupportedFormat(f"PNG mode {mode} is not supported")
            return np.asarray(im, dtype=np.uint8).copy()
    except (NonRgb, UnsupportedFormat):
        raise
    except Exception as exc:
        raise CorruptFile(f"cannot decode PNG: {exc}") from None


def load_image(path, min_size: int | None = None) -> RgbImage:
    """Load a PPM (P3/P6) or 8-bit RGB PNG file.

    Samples are mapped to ``v / 255``. Size is only checked when
    ``min_size`` is given; the metric pipeline applies its own guard.
    """
    with open(path, "rb") as fh:
        head = fh.read(8)
        if head.startswith(_PNG_MAGIC):
            pixels = _decode_png(os.fspath(path))
        elif head[:1] == b"P":
            fh.seek(0)
            pixels = decode_ppm(fh.read())
        else:
            raise UnsupportedFormat(f"{path}: unrecognized image format")
    img = RgbImage.from_uint8(pixels)
    if min_size is not None:
        check_min_size(img, min_size)
    return img


def crop_to_pyramid_size(img: RgbImage, scales: int) -> RgbImage:
    """Centered crop to the largest multiples of ``2**scales`` per axis."""
    if scales < 1:
        raise ValueError("scales must be >= 1")
    step = 2**scales
    w = (img.width // step) * step
    h = (img.height // step) * step
    if w == 0 or h == 0:
        raise TooSmall(
            f"{img.width}x{img.height} has no crop divisible by {step}"
        )
    if (w, h) == (img.width, img.height):
        return img
    x0 = (img.width - w) // 2
    y0 = (img.height - h) // 2
    return RgbImage(img.planes[:, y0 : y0 + h, x0 : x0 + w])
