"""Reduced-reference colour image quality from joint RGB subband statistics.

Typical use::

    from rrmggd import load_image, extract_features, score_image

    ref = extract_features(load_image("ref.ppm"))   # 54 scalars to transmit
    score = score_image(ref, load_image("distorted.ppm"))
    score.Q
"""

from .imageio import RgbImage, crop_to_pyramid_size, load_image, write_ppm
from .metric import (
    FeatureSet,
    QualityScore,
    extract_features,
    pool_and_score,
    read_features,
    score_image,
    subband_distance,
    write_features,
)
from .pyramid import DEFAULT_SELECTION, SubbandKey

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_SELECTION",
    "FeatureSet",
    "QualityScore",
    "RgbImage",
    "SubbandKey",
    "crop_to_pyramid_size",
    "extract_features",
    "load_image",
    "pool_and_score",
    "read_features",
    "score_image",
    "subband_distance",
    "write_features",
    "write_ppm",
]
