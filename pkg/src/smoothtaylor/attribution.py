"""Gradient-based attribution: Integrated Gradients, SmoothGrad, SmoothTaylor.

Every method talks to the network through a *gradient oracle*: a callable
mapping a batch of inputs to ``(scores, gradients)``.  Passing a
:class:`~smoothtaylor.model.Model` plus a :class:`ScoreTarget` builds one
automatically; any other oracle (e.g. :class:`FunctionOracle`) can be
passed in place of the model with ``target=None``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .model import Model, ScoreTarget, gradient_batch
from .tensor import NonFiniteError, channel_bounds


@dataclass(frozen=True)
class AttributionMap:
    values: np.ndarray
    target: ScoreTarget = None
    method_tag: str = ""
    params: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class NoiseConfig:
    """Gaussian noise scale ``sigma``, sample/root ``count`` and ``seed``."""

    sigma: float
    count: int
    seed: int = 0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")


@dataclass(frozen=True)
class IGConfig:
    steps: int = 50
    baseline_kind: str = "uniform_noise"
    baseline_count: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.baseline_count < 1:
            raise ValueError("baseline_count must be >= 1")
        if self.baseline_kind not in ("zero", "uniform_noise"):
            raise ValueError(f"unknown baseline kind {self.baseline_kind!r}")


# ---------------------------------------------------------------------------
# oracles


class ModelOracle:
    def __init__(self, model, target):
        self.model = model
        self.target = target

    def __call__(self, xb):
        return gradient_batch(self.model, xb, self.target)


class FunctionOracle:
    """Oracle built from a scalar function and its gradient, one sample at a time."""

    def __init__(self, value, grad):
        self.value = value
        self.grad = grad

    def __call__(self, xb):
        scores = np.array([float(self.value(x)) for x in xb])
        grads = np.stack([np.asarray(self.grad(x), dtype=np.float64) for x in xb])
        if not (np.all(np.isfinite(scores)) and np.all(np.isfinite(grads))):
            raise NonFiniteError("oracle returned non-finite values")
        return scores, grads


def as_oracle(model, target=None):
    if isinstance(model, Model):
        if target is None:
            raise ValueError("a ScoreTarget is required to explain a Model")
        return ModelOracle(model, target)
    if callable(model):
        return model
    raise TypeError(f"cannot use {type(model).__name__} as a gradient oracle")


def _gradients(oracle, xb, chunk=64):
    """Gradients for a batch, float64, evaluated in fixed chunk order."""
    out = np.empty(xb.shape, dtype=np.float64)
    for start in range(0, len(xb), chunk):
        out[start:start + chunk] = oracle(xb[start:start + chunk])[1]
    return out


def _check_shapes(x, *others):
    for o in others:
        if o.shape != x.shape:
            raise ValueError(f"shape mismatch: {o.shape} vs input {x.shape}")


def _finish(values, target, tag, **params):
    values = np.asarray(values)
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"{tag} produced non-finite attributions")
    return AttributionMap(values.astype(np.float32), target, tag, params)


# ---------------------------------------------------------------------------
# methods


def raw_gradient(model, x, target=None):
    oracle = as_oracle(model, target)
    x = np.asarray(x, dtype=np.float32)
    return _finish(_gradients(oracle, x[None])[0], target, "gradient")


def integrated_gradients(model, x, z, target=None, steps=50):
    """Right-endpoint Riemann approximation of the IG path integral.

    Gradients are taken at ``z + (m / steps) * (x - z)`` for
    ``m = 1 .. steps``, averaged, and scaled by ``x - z``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    oracle = as_oracle(model, target)
    x = np.asarray(x, dtype=np.float32)
    z = np.asarray(z, dtype=np.float32)
    _check_shapes(x, z)
    diff = x.astype(np.float64) - z
    alphas = np.arange(1, steps + 1, dtype=np.float64) / steps
    path = (z + alphas.reshape((-1,) + (1,) * x.ndim) * diff).astype(np.float32)
    mean_grad = _gradients(oracle, path).sum(axis=0) / steps
    return _finish(diff * mean_grad, target, "ig", steps=steps)


def uniform_baselines(x, count, seed, value_range=None):
    """``count`` baselines drawn uniformly over the valid input range."""
    lo, hi = channel_bounds(x, value_range)
    gen = rngmod.stream(seed, rngmod.BASELINES)
    u = gen.random((count,) + np.shape(x))
    return (lo + u * (hi - lo)).astype(np.float32)


def integrated_gradients_noise_avg(model, x, target=None, cfg=IGConfig(), value_range=None):
    """Average of IG maps against ``cfg.baseline_count`` uniform-noise baselines."""
    if cfg.baseline_kind != "uniform_noise":
        raise ValueError("noise-averaged IG needs baseline_kind='uniform_noise'")
    oracle = as_oracle(model, target)
    x = np.asarray(x, dtype=np.float32)
    acc = np.zeros(x.shape)
    for z in uniform_baselines(x, cfg.baseline_count, cfg.seed, value_range):
        acc += integrated_gradients(oracle, x, z, steps=cfg.steps).values
    return _finish(
        acc / cfg.baseline_count, target, "ig-noise",
        steps=cfg.steps, baselines=cfg.baseline_count, seed=cfg.seed,
    )


def gaussian_noise(shape, cfg):
    """The noise stream shared by SmoothGrad and SmoothTaylor: ``(count, *shape)``."""
    gen = rngmod.stream(cfg.seed, rngmod.ROOTS)
    return gen.standard_normal((cfg.count,) + tuple(shape)) * cfg.sigma


def generate_roots(x, cfg):
    """Roots ``x + eps`` with ``eps ~ N(0, sigma^2)`` i.i.d., stacked on axis 0."""
    x = np.asarray(x, dtype=np.float32)
    return (x + gaussian_noise(x.shape, cfg)).astype(np.float32)


def smooth_grad(model, x, target=None, base_method=None, cfg=None):
    """Mean of ``base_method`` over ``cfg.count`` Gaussian-noised copies of ``x``.

    ``base_method`` takes a noised input and returns an array or an
    :class:`AttributionMap` of the same shape; ``None`` means the raw gradient.
    """
    oracle = as_oracle(model, target)
    x = np.asarray(x, dtype=np.float32)
    noisy = (x + gaussian_noise(x.shape, cfg)).astype(np.float32)
    if base_method is None:
        total = _gradients(oracle, noisy).sum(axis=0)
    else:
        total = np.zeros(x.shape)
        for xn in noisy:
            m = base_method(xn)
            m = m.values if isinstance(m, AttributionMap) else np.asarray(m)
            _check_shapes(x, m)
            total += m
    return _finish(total / cfg.count, target, "smoothgrad", sigma=cfg.sigma, samples=cfg.count, seed=cfg.seed)


def smooth_taylor(model, x, target=None, cfg=None):
    """Mean over roots of ``(x - z) * grad f(z)``."""
    oracle = as_oracle(model, target)
    x = np.asarray(x, dtype=np.float32)
    roots = generate_roots(x, cfg)
    total = np.zeros(x.shape)
    chunk = 64
    for start in range(0, len(roots), chunk):
        z = roots[start:start + chunk]
        total += ((x - z).astype(np.float64) * _gradients(oracle, z)).sum(axis=0)
    return _finish(total / cfg.count, target, "smoothtaylor", sigma=cfg.sigma, roots=cfg.count, seed=cfg.seed)


def taylor_term(oracle, x):
    """SmoothGrad base method ``x' -> grad f(x') * (x - x')`` for a fixed ``x``."""
    x = np.asarray(x, dtype=np.float32)

    def term(xn):
        return (x - xn).astype(np.float64) * _gradients(oracle, np.asarray(xn)[None])[0]

    return term


def smoothgrad_bridge(model, x, target=None, cfg=None, sign=1.0):
    """SmoothGrad of the Taylor term; ``sign=-1`` gives the ``grad * eps`` form."""
    oracle = as_oracle(model, target)
    term = taylor_term(oracle, x)
    return smooth_grad(oracle, x, base_method=lambda xn: sign * term(xn), cfg=cfg)


def verify_smoothgrad_equivalence(model, x, target=None, cfg=None, smoothgrad_seed=None):
    """L-infinity distance between SmoothTaylor and the equivalent SmoothGrad.

    Both sides draw from the same noise stream unless ``smoothgrad_seed``
    overrides the seed used for the SmoothGrad side.
    """
    oracle = as_oracle(model, target)
    st = smooth_taylor(oracle, x, cfg=cfg)
    sg_cfg = cfg if smoothgrad_seed is None else NoiseConfig(cfg.sigma, cfg.count, smoothgrad_seed)
    sg = smoothgrad_bridge(oracle, x, cfg=sg_cfg)
    return float(np.max(np.abs(st.values.astype(np.float64) - sg.values)))


METHODS = ("gradient", "ig", "ig-noise", "smoothgrad", "smoothtaylor")
