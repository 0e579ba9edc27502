"""Saliency maps and their smoothness: ATV, Gaussian pyramids, AUTVC."""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .integrate import simpson_auc

PERCENTILE_METHOD = "linear"
CLIP_PERCENTILE = 99.0
PYRAMID_SCALE = 1.5
PYRAMID_MIN_SIZE = 30


@dataclass(frozen=True)
class SaliencyMap:
    """A 2-D map with every value in [0, 1]."""

    values: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"saliency map must be 2-D, got shape {v.shape}")
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise ValueError("saliency values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class TVCurve:
    """Multi-scale ATV: ``levels`` holds ``(level, height, width, atv)`` rows."""

    levels: list = field(default_factory=list)

    @property
    def atvs(self):
        return [row[3] for row in self.levels]

    def rows(self):
        return list(self.levels)


def reduce_channels(values):
    """Absolute attribution per spatial location as a 2-D float64 array.

    ``(C, H, W)`` maps are summed over channels; 1-D maps become one row.
    """
    a = np.abs(np.asarray(values, dtype=np.float64))
    if a.ndim == 3:
        return a.sum(axis=0)
    if a.ndim == 2:
        return a
    if a.ndim == 1:
        return a[None, :]
    raise ValueError(f"cannot reduce a {a.ndim}-D attribution to a spatial map")


def to_saliency(attr):
    """Absolute values, clip above the 99th percentile, min-max to [0, 1]."""
    values = getattr(attr, "values", attr)
    a = reduce_channels(values)
    top = np.percentile(a, CLIP_PERCENTILE, method=PERCENTILE_METHOD)
    a = np.minimum(a, top)
    lo, hi = a.min(), a.max()
    if not hi > lo:
        return SaliencyMap(np.zeros_like(a), degenerate=True)
    return SaliencyMap(np.clip((a - lo) / (hi - lo), 0.0, 1.0))


def average_total_variation(s):
    """l1 total variation over horizontal and vertical neighbours, per pixel."""
    v = getattr(s, "values", s)
    v = np.ascontiguousarray(v, dtype=np.float64)
    h, w = v.shape
    return float(kernels.total_variation(v)) / (h * w)


def pyramid_sizes(h, w, scale=PYRAMID_SCALE, min_size=PYRAMID_MIN_SIZE, include_last=False):
    sizes = [(h, w)]
    if h < min_size or w < min_size:
        return sizes
    while True:
        h, w = int(h // scale), int(w // scale)
        if h < min_size or w < min_size:
            if include_last and h >= 1 and w >= 1:
                sizes.append((h, w))
            return sizes
        sizes.append((h, w))


def gaussian_pyramid(s, scale=PYRAMID_SCALE, min_size=PYRAMID_MIN_SIZE, include_last=False):
    """Blur-and-shrink pyramid, level 0 being ``s`` itself.

    Each level is the previous one blurred with the 5x5 binomial kernel
    (mirror borders) then bilinearly resized to ``floor(size / scale)``.
    Generation stops before the first level with a side below
    ``min_size``; ``include_last=True`` keeps that final small level.
    """
    if not isinstance(s, SaliencyMap):
        s = SaliencyMap(s)
    sizes = pyramid_sizes(s.height, s.width, scale, min_size, include_last)
    levels = [s]
    cur = s.values
    for h, w in sizes[1:]:
        blurred = kernels.blur5(np.ascontiguousarray(cur))
        cur = np.clip(kernels.resize_bilinear(blurred, h, w), 0.0, 1.0)
        levels.append(SaliencyMap(cur))
    return levels


def multiscale_tv_curve(s, **pyramid_opts):
    levels = gaussian_pyramid(s, **pyramid_opts)
    return TVCurve([(i, m.height, m.width, average_total_variation(m)) for i, m in enumerate(levels)])


def autvc(curve):
    if len(curve.levels) < 2:
        raise ValueError("AUTVC needs a curve with at least 2 levels; the map is too small for a pyramid")
    return simpson_auc([(row[0], row[3]) for row in curve.levels])
