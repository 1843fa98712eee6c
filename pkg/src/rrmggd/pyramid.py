"""Real steerable pyramid built in the Fourier domain.

Four scales, three orientations. Each stage splits the current lowpass
band with a one-octave raised-cosine pair ``(H_s, L_s)`` satisfying
``H_s**2 + L_s**2 = 1``; the oriented bands at stage ``s`` are
``L_0 ... L_{s-1} H_s A_o`` where the angular masks ``A_o`` are
``c * cos(theta - theta_o)**2`` with ``c`` chosen so ``sum_o A_o**2 = 1``.
Together with the initial highpass ``H_0`` the squared masks tile the
frequency plane exactly.

Normalized radius ``rho = |omega| / pi`` (``rho = 1`` on the Nyquist axes).
Stage 0 has its transition on ``rho`` in [1/2, 1]; stage ``s`` on
[2**-(s+1), 2**-s]. The lowpass after stage ``s`` therefore vanishes for
``rho >= 2**-s``, which makes downsampling by frequency cropping exact:
the band at scale ``s`` is held at ``1 / 2**(s-1)`` of input resolution.
"""

from __future__ import annotations

import functools
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import BadDimensions, BadSelection, DimensionMismatch

N_SCALES = 4
N_ORIENTATIONS = 3

# sqrt(2**(2K) (K!)**2 / ((2K)! (K+1))) with K = N_ORIENTATIONS - 1
ANGULAR_GAIN = np.sqrt(8.0 / 9.0)


class SubbandKey(NamedTuple):
    scale: int
    orientation: int

    def validate(self):
        if not (1 <= self.scale <= N_SCALES and 1 <= self.orientation <= N_ORIENTATIONS):
            raise BadSelection(f"subband key out of range: {tuple(self)}")
        return self


DEFAULT_SELECTION = tuple(
    SubbandKey(s, o) for s in (1, 2, 3) for o in (1, 3)
)


def _freeze(a):
    a.setflags(write=False)
    return a


def _split(rho, upper):
    """Raised-cosine highpass/lowpass pair with transition on [upper/2, upper]."""
    with np.errstate(divide="ignore"):
        t = np.log2(rho / upper) + 1.0
    t = np.clip(np.nan_to_num(t, nan=0.0, neginf=0.0), 0.0, 1.0)
    return np.sin(0.5 * np.pi * t), np.cos(0.5 * np.pi * t)


@dataclass(frozen=True, eq=False)
class FilterBank:
    """Full-resolution frequency masks in unshifted FFT layout, shape ``(H, W)``."""

    width: int
    height: int
    highpass: np.ndarray
    bands: dict
    lowpass: np.ndarray

    def tiling_error(self) -> float:
        total = self.highpass**2 + self.lowpass**2
        for mask in self.bands.values():
            total = total + mask**2
        return float(np.max(np.abs(total - 1.0)))


@functools.lru_cache(maxsize=16)
def build_filter_bank(width: int, height: int) -> FilterBank:
    step = 2**N_SCALES
    if width <= 0 or height <= 0 or width % step or height % step:
        raise BadDimensions(
            f"{width}x{height}: both dimensions must be positive multiples of {step}"
        )
    fx = np.fft.fftfreq(width)[None, :]
    fy = np.fft.fftfreq(height)[:, None]
    rho = np.hypot(fx, fy) / 0.5
    theta = np.arctan2(np.broadcast_to(fy, rho.shape), np.broadcast_to(fx, rho.shape))

    angular = [
        ANGULAR_GAIN * np.cos(theta - np.pi * (o - 1) / N_ORIENTATIONS) ** 2
        for o in range(1, N_ORIENTATIONS + 1)
    ]
    highpass, lowpass = _split(rho, 1.0)
    bands = {}
    for s in range(1, N_SCALES + 1):
        hi, lo = _split(rho, 2.0**-s)
        for o in range(1, N_ORIENTATIONS + 1):
            bands[SubbandKey(s, o)] = _freeze(lowpass * hi * angular[o - 1])
        lowpass = lowpass * lo
    return FilterBank(width, height, _freeze(highpass), bands, _freeze(lowpass))


def _crop_spectrum(spectrum, factor):
    """Keep the central ``1/factor`` of an unshifted spectrum (per axis)."""
    if factor == 1:
        return spectrum
    h, w = spectrum.shape
    hh, ww = h // factor, w // factor
    shifted = np.fft.fftshift(spectrum)
    y0, x0 = h // 2 - hh // 2, w // 2 - ww // 2
    return np.fft.ifftshift(shifted[y0 : y0 + hh, x0 : x0 + ww])


def _band_from_spectrum(spectrum, factor):
    out = np.fft.ifft2(_crop_spectrum(spectrum, factor))
    return out.real / factor**2


class Decomposition(NamedTuple):
    highpass: np.ndarray
    bands: dict
    lowpass: np.ndarray

    def downsampling(self, key) -> int:
        if key == "highpass":
            return 1
        if key == "lowpass":
            return 2**N_SCALES
        return 2 ** (key[0] - 1)


def decompose(plane, bank: FilterBank) -> Decomposition:
    """Split a real plane into highpass, 12 oriented bands and lowpass.

    Band values are the filtered image sampled every ``2**(s-1)`` pixels,
    so ``energy * 4**(s-1)`` recovers the full-resolution band energy.
    """
    plane = np.asarray(plane, dtype=np.float64)
    if plane.shape != (bank.height, bank.width):
        raise DimensionMismatch(
            f"plane is {plane.shape[1]}x{plane.shape[0]}, bank is {bank.width}x{bank.height}"
        )
    spectrum = np.fft.fft2(plane)
    bands = {
        key: _band_from_spectrum(spectrum * mask, 2 ** (key.scale - 1))
        for key, mask in bank.bands.items()
    }
    return Decomposition(
        highpass=_band_from_spectrum(spectrum * bank.highpass, 1),
        bands=bands,
        lowpass=_band_from_spectrum(spectrum * bank.lowpass, 2**N_SCALES),
    )


@dataclass(frozen=True, eq=False)
class CoefficientMatrix:
    """Row-centered ``3 x n`` matrix of R, G, B coefficients of one subband."""

    key: SubbandKey
    data: np.ndarray

    @property
    def n(self) -> int:
        return self.data.shape[1]


def validate_selection(selection) -> tuple:
    keys = tuple(SubbandKey(*k).validate() for k in selection)
    if len(keys) != 6:
        raise BadSelection(f"selection must have exactly 6 subbands, got {len(keys)}")
    if len(set(keys)) != len(keys):
        raise BadSelection("selection contains duplicate subbands")
    return tuple(sorted(keys))


def select_subbands(decompositions, selection=DEFAULT_SELECTION) -> list:
    """Stack the three channels' coefficients for each selected subband.

    Keys come back in canonical order (ascending scale, then orientation).
    """
    keys = validate_selection(selection)
    if len(decompositions) != 3:
        raise DimensionMismatch("expected one decomposition per color channel")
    out = []
    for key in keys:
        planes = [d.bands[key] for d in decompositions]
        if any(p.shape != planes[0].shape for p in planes):
            raise DimensionMismatch(f"channel subbands {tuple(key)} differ in shape")
        data = np.stack([p.ravel() for p in planes])
        data = data - data.mean(axis=1, keepdims=True)
        data.setflags(write=False)
        out.append(CoefficientMatrix(key, data))
    return out


# --- debug dump ------------------------------------------------------------

SPBD_MAGIC = b"SPBD"
_SPBD_HEADER = struct.Struct("<4sIIHH")


def dump_subband(plane, key, path) -> None:
    """Write one subband: 16-byte header then little-endian float64 row-major."""
    plane = np.asarray(plane, dtype="<f8")
    h, w = plane.shape
    with open(path, "wb") as fh:
        fh.write(_SPBD_HEADER.pack(SPBD_MAGIC, w, h, key[0], key[1]))
        fh.write(np.ascontiguousarray(plane).tobytes())


def load_subband(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _SPBD_HEADER.size:
        raise ValueError("truncated SPBD file")
    magic, w, h, s, o = _SPBD_HEADER.unpack_from(raw)
    if magic != SPBD_MAGIC:
        raise ValueError("not an SPBD file")
    body = raw[_SPBD_HEADER.size :]
    if len(body) != 8 * w * h:
        raise ValueError("SPBD body size does not match header")
    return SubbandKey(s, o), np.frombuffer(body, dtype="<f8").reshape(h, w)
