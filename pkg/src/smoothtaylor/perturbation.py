"""Pixel-perturbation evaluation: region ordering, the perturbation game, AUPC."""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from . import rng as rngmod
from .integrate import simpson_auc
from .model import predicted_class, score, score_batch
from .saliency import reduce_channels
from .tensor import channel_bounds

__all__ = [
    "PerturbEvalConfig",
    "PerturbationCurve",
    "RegionSequence",
    "aupc",
    "order_regions",
    "perturb_region",
    "perturbation_game",
    "simpson_auc",
]


@dataclass(frozen=True)
class PerturbEvalConfig:
    kernel: int = 15
    steps: int = 30
    samples: int = 50
    seed: int = 0
    value_range: tuple = None

    def __post_init__(self):
        for name in ("kernel", "steps", "samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class RegionSequence:
    regions: list
    kernel: int
    scores: list = field(default_factory=list)


@dataclass(frozen=True)
class PerturbationCurve:
    """Normalized mean scores; ``points[l] = (l, ybar_l / f(x))``."""

    points: list
    seed: int = 0
    base_score: float = 1.0

    @property
    def values(self):
        return [v for _, v in self.points]


def order_regions(attr, cfg):
    """Top-``cfg.steps`` non-overlapping ``k x k`` windows by mean |attribution|.

    Every stride-1 window is scored; the best is taken, windows overlapping
    it are dropped, and so on.  Ties go to the earliest anchor in row-major
    order.
    """
    values = getattr(attr, "values", attr)
    a = np.ascontiguousarray(reduce_channels(values))
    k, limit = cfg.kernel, cfg.steps
    h, w = a.shape
    if h < k or w < k:
        raise ValueError(f"map {h}x{w} is smaller than the {k}x{k} window")
    means = kernels.window_sums(a, k) / (k * k)
    picked = kernels.greedy_select(means, k, limit)
    if len(picked) < limit:
        raise ValueError(
            f"only {len(picked)} non-overlapping {k}x{k} windows can be placed, {limit} requested"
        )
    regions = [(int(r), int(c)) for r, c in picked]
    return RegionSequence(regions, k, [float(means[r, c]) for r, c in regions])


def _spatial_axes(x):
    return (x.shape[-2], x.shape[-1])


def perturb_region(x, region, k, gen, value_range=None, bounds=None):
    """Copy of ``x`` with the ``k x k`` window at ``region`` filled with uniform noise.

    ``x`` is ``(C, H, W)`` or ``(H, W)``; all channels are replaced.
    ``bounds`` may carry precomputed ``channel_bounds`` output.
    """
    x = np.asarray(x)
    r, c = region
    h, w = _spatial_axes(x)
    if r < 0 or c < 0 or r + k > h or c + k > w:
        raise ValueError(f"region {region} with kernel {k} is outside a {h}x{w} image")
    lo, hi = bounds if bounds is not None else channel_bounds(x, value_range)
    out = x.copy()
    lead = x.shape[:-2]
    u = gen.random(lead + (k, k))
    lo_w = lo if np.ndim(lo) == 0 else lo.reshape(lead + (1, 1))
    hi_w = hi if np.ndim(hi) == 0 else hi.reshape(lead + (1, 1))
    out[..., r:r + k, c:c + k] = (lo_w + u * (hi_w - lo_w)).astype(x.dtype)
    return out


def perturbation_game(model, x, attr, target, cfg, check_prediction=True):
    """Sequentially perturb the most salient regions and track the mean score.

    At step ``l`` the region ``r_l`` of the current image receives
    ``cfg.samples`` independent uniform-noise fills; the step's value is the
    mean model score over them, normalized by ``f(x)``.  The fill with the
    lower-median score becomes the image for the next step.
    """
    x = np.asarray(x, dtype=np.float32)
    if check_prediction and target.class_index != predicted_class(model, x):
        raise ValueError("target class is not the model's predicted class for this input")
    base = score(model, x, target)
    if abs(base) < 1e-12:
        raise ValueError(f"original score {base!r} too close to zero to normalize by")
    regions = order_regions(attr, cfg).regions
    bounds = channel_bounds(x, cfg.value_range)
    k, n = cfg.kernel, cfg.samples
    median_rank = (n + 1) // 2 - 1
    points = [(0, 1.0)]
    cur = x
    for step, region in enumerate(regions, start=1):
        cands = np.stack([
            perturb_region(cur, region, k, rngmod.stream(cfg.seed, rngmod.PERTURB, step, p), bounds=bounds)
            for p in range(n)
        ])
        s = score_batch(model, cands, target)
        points.append((step, float(s.mean() / base)))
        cur = cands[np.argsort(s, kind="stable")[median_rank]]
    return PerturbationCurve(points, cfg.seed, float(base))


def aupc(curve):
    return simpson_auc(curve.points)
