"""Reduced-reference colour quality metric.

Sender side: decompose R, G and B with the steerable pyramid, stack the
three channels of each of six selected subbands into ``3 x n`` matrices and
fit a zero-mean trivariate Gaussian (shape pinned to 1), i.e. keep the
``3 x 3`` second-moment matrix. Six symmetric matrices are 54 scalars.

Receiver side: fit the same model to the distorted image, take the
Gaussian KL divergence per subband with the reference model first, sum,
and map ``Q = log2(1 + D / 0.1)``. Larger Q means more distortion.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .divergence import kld_gaussian_multivariate
from .errors import (
    BadInput,
    DimensionMismatch,
    ParseError,
    SelectionMismatch,
    VersionMismatch,
)
from .imageio import MIN_SIZE, RgbImage, check_min_size, crop_to_pyramid_size
from .mggd import ridge_second_moment
from .pyramid import (
    DEFAULT_SELECTION,
    N_SCALES,
    SubbandKey,
    build_filter_bank,
    decompose,
    select_subbands,
    validate_selection,
)

D0 = 0.1
FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """What the sender transmits: image size, subband keys and six dispersions."""

    image_width: int
    image_height: int
    selection: tuple
    covariances: tuple
    beta: float = 1.0

    def __post_init__(self):
        keys = validate_selection(self.selection)
        if keys != tuple(SubbandKey(*k) for k in self.selection):
            raise BadInput("selection must be in canonical order")
        covs = []
        for c in self.covariances:
            c = np.array(c, dtype=np.float64)
            if c.shape != (3, 3) or not np.array_equal(c, c.T):
                raise BadInput("each dispersion must be an exactly symmetric 3x3 matrix")
            c.setflags(write=False)
            covs.append(c)
        if len(covs) != len(keys):
            raise BadInput(f"expected {len(keys)} dispersions, got {len(covs)}")
        object.__setattr__(self, "selection", keys)
        object.__setattr__(self, "covariances", tuple(covs))

    @property
    def scalars(self) -> np.ndarray:
        return np.concatenate([c.ravel() for c in self.covariances])

    def __eq__(self, other):
        if not isinstance(other, FeatureSet):
            return NotImplemented
        return (
            (self.image_width, self.image_height, self.selection, self.beta)
            == (other.image_width, other.image_height, other.selection, other.beta)
            and all(np.array_equal(a, b) for a, b in zip(self.covariances, other.covariances))
        )


@dataclass(frozen=True)
class QualityScore:
    distances: tuple
    D: float
    Q: float


def prepare(img: RgbImage) -> RgbImage:
    img = crop_to_pyramid_size(img, N_SCALES)
    check_min_size(img, MIN_SIZE)
    return img


def extract_features(img: RgbImage, selection=DEFAULT_SELECTION) -> FeatureSet:
    img = prepare(img)
    bank = build_filter_bank(img.width, img.height)
    decs = [decompose(plane, bank) for plane in img.planes]
    subbands = select_subbands(decs, selection)
    return FeatureSet(
        img.width,
        img.height,
        tuple(cm.key for cm in subbands),
        tuple(ridge_second_moment(cm.data) for cm in subbands),
    )


def subband_distance(sigma_ref, sigma_dist) -> float:
    return kld_gaussian_multivariate(sigma_ref, sigma_dist)


def pool_and_score(distances) -> QualityScore:
    d = [float(x) for x in distances]
    if len(d) != 6:
        raise BadInput(f"expected 6 subband distances, got {len(d)}")
    if any(not math.isfinite(x) or x < 0 for x in d):
        raise BadInput("distances must be finite and non-negative")
    total = math.fsum(d)
    return QualityScore(tuple(d), total, math.log2(1.0 + total / D0))


def score_features(ref: FeatureSet, dist: FeatureSet) -> QualityScore:
    if (ref.image_width, ref.image_height) != (dist.image_width, dist.image_height):
        raise DimensionMismatch(
            f"reference is {ref.image_width}x{ref.image_height}, "
            f"distorted is {dist.image_width}x{dist.image_height}"
        )
    if ref.selection != dist.selection:
        raise SelectionMismatch("feature sets use different subbands")
    return pool_and_score(
        subband_distance(a, b) for a, b in zip(ref.covariances, dist.covariances)
    )


def score_image(features_ref: FeatureSet, img_dist: RgbImage) -> QualityScore:
    img_dist = prepare(img_dist)
    if (img_dist.width, img_dist.height) != (features_ref.image_width, features_ref.image_height):
        raise DimensionMismatch(
            f"distorted image is {img_dist.width}x{img_dist.height} after cropping, "
            f"reference features are {features_ref.image_width}x{features_ref.image_height}"
        )
    return score_features(features_ref, extract_features(img_dist, features_ref.selection))


# --- RRF feature files ----------------------------------------------------------


def format_features(f: FeatureSet) -> str:
    lines = [
        f"RRF {FORMAT_VERSION}",
        f"size {f.image_width} {f.image_height}",
        "beta 1",
        "selection " + " ".join(f"({s},{o})" for s, o in f.selection),
    ]
    for (s, o), c in zip(f.selection, f.covariances):
        lines.append(f"cov {s} {o} " + " ".join(repr(float(v)) for v in c.ravel()))
    return "\n".join(lines) + "\n"


def _real(tok, lineno):
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"not a real number: {tok!r}", lineno) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {tok!r}", lineno)
    return v


def _int(tok, lineno):
    if not tok.isdigit():
        raise ParseError(f"not a non-negative integer: {tok!r}", lineno)
    return int(tok)


def parse_features(text: str) -> FeatureSet:
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty feature file", 1)
    head = lines[0].split()
    if len(head) != 2 or head[0] != "RRF":
        raise ParseError("missing 'RRF <version>' header", 1)
    if head[1] != str(FORMAT_VERSION):
        raise VersionMismatch(f"unsupported version {head[1]}", 1)
    if len(lines) != 10:
        raise ParseError(f"expected 10 lines, found {len(lines)}", min(len(lines), 10) + 1)

    size = lines[1].split()
    if len(size) != 3 or size[0] != "size":
        raise ParseError("expected 'size <width> <height>'", 2)
    width, height = _int(size[1], 2), _int(size[2], 2)

    if lines[2].split() != ["beta", "1"]:
        raise ParseError("expected 'beta 1'", 3)

    sel = lines[3].split()
    if not sel or sel[0] != "selection" or len(sel) != 7:
        raise ParseError("expected 'selection' followed by 6 (s,o) pairs", 4)
    keys = []
    for tok in sel[1:]:
        if not (tok.startswith("(") and tok.endswith(")")) or tok.count(",") != 1:
            raise ParseError(f"bad subband key {tok!r}", 4)
        s, o = tok[1:-1].split(",")
        keys.append(SubbandKey(_int(s, 4), _int(o, 4)))

    covs = []
    for i, key in enumerate(keys):
        lineno = 5 + i
        toks = lines[4 + i].split()
        if len(toks) != 12 or toks[0] != "cov":
            raise ParseError("expected 'cov <s> <o>' and 9 reals", lineno)
        if (_int(toks[1], lineno), _int(toks[2], lineno)) != tuple(key):
            raise ParseError(f"cov record does not match selection key {tuple(key)}", lineno)
        c = np.array([_real(t, lineno) for t in toks[3:]]).reshape(3, 3)
        if not np.array_equal(c, c.T):
            raise ParseError("dispersion matrix is not symmetric", lineno)
        try:
            np.linalg.cholesky(c)
        except np.linalg.LinAlgError:
            raise ParseError("dispersion matrix is not positive definite", lineno) from None
        covs.append(c)
    try:
        return FeatureSet(width, height, tuple(keys), tuple(covs))
    except Exception as exc:
        raise ParseError(str(exc), 4) from None


def write_atomic(path, data: str | bytes) -> None:
    path = os.fspath(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": "\n"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_features(f: FeatureSet, path) -> None:
    write_atomic(path, format_features(f))


def read_features(path) -> FeatureSet:
    with open(path, encoding="utf-8") as fh:
        return parse_features(fh.read())

