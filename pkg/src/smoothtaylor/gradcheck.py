"""Compare the hand-written backward rules with central differences.

Two checks are run per sample:

* layer-local: each layer's vector-Jacobian product against the finite
  difference of ``sum(v * layer(a))`` at the activation the layer really
  sees, skipping coordinates close enough to a ReLU / max-pool kink for the
  difference quotient to straddle it;
* end-to-end: :func:`model.gradient` against :func:`model.finite_diff_gradient`,
  judged by the fraction of coordinates within tolerance.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .model import MaxPool2d, ReLU, finite_diff_gradient, gradient

REL_TOL = 1e-3
ABS_FLOOR = 1e-5
MIN_PASS_FRACTION = 0.99


def relative_error(got, want, rel_tol=REL_TOL, abs_floor=ABS_FLOOR):
    """``|got - want|`` scaled so that values <= 1 meet the tolerance.

    An element passes when ``|got - want| <= max(rel_tol * |want|, abs_floor)``.
    """
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    return np.abs(got - want) / np.maximum(rel_tol * np.abs(want), abs_floor)


def kink_distance(layer, a):
    """Per-element distance of the layer input ``a`` (batched) to a kink."""
    if isinstance(layer, ReLU):
        return np.abs(a)
    if isinstance(layer, MaxPool2d):
        k, s = layer.kernel, layer.stride
        win = sliding_window_view(a, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        top2 = np.sort(win.reshape(win.shape[:4] + (k * k,)), axis=-1)[..., -2:]
        wmax, gap = top2[..., 1], top2[..., 1] - top2[..., 0]
        dist = np.full(a.shape, np.inf)
        ho, wo = wmax.shape[2:]
        for u in range(k):
            for v in range(k):
                sl = (slice(None), slice(None), slice(u, u + s * (ho - 1) + 1, s), slice(v, v + s * (wo - 1) + 1, s))
                d = wmax - a[sl]
                d = np.where(d == 0, gap, d)
                dist[sl] = np.minimum(dist[sl], d)
        return dist
    return np.full(a.shape, np.inf)


@dataclass
class GradcheckReport:
    layers: list = field(default_factory=list)  # (layer id, kind, max rel err, checked, skipped)
    end_to_end: list = field(default_factory=list)  # (max rel err, pass fraction) per sample
    rel_tol: float = REL_TOL

    def by_kind(self):
        out = {}
        for _, kind, err, _, _ in self.layers:
            out[kind] = max(out.get(kind, 0.0), err)
        return out

    def failing_layers(self):
        return sorted({(lid, kind) for lid, kind, err, _, _ in self.layers if err > 1.0})

    @property
    def passed(self):
        e2e = all(frac >= MIN_PASS_FRACTION for _, frac in self.end_to_end)
        return e2e and not self.failing_layers()


def check_layers(model, x, gen, h=1e-3, max_coords=256):
    """Layer-local checks for one sample; returns ``[(id, kind, max_err, n, skipped)]``.

    At most ``max_coords`` input coordinates per layer are probed, drawn
    from ``gen`` among those clear of a kink.
    """
    a = np.asarray(x, dtype=np.float64)[None]
    rows = []
    for layer in model.layers:
        params = model.params(layer, np.float64)
        y, cache = layer.forward(a, params, np.float64)
        v = gen.standard_normal(y.shape)
        analytic = layer.backward(v, cache, params, np.float64)
        dist = kink_distance(layer, a)
        numeric = np.zeros(a.shape)
        flat_a = a.reshape(-1)
        flat_n = numeric.reshape(-1)
        clear = np.flatnonzero(dist.reshape(-1) > 2 * h)
        check = clear
        if max_coords is not None and len(clear) > max_coords:
            check = np.sort(gen.choice(clear, size=max_coords, replace=False))
        for i in check:
            orig = flat_a[i]
            flat_a[i] = orig + h
            up = float((layer.forward(a, params, np.float64)[0] * v).sum())
            flat_a[i] = orig - h
            down = float((layer.forward(a, params, np.float64)[0] * v).sum())
            flat_a[i] = orig
            flat_n[i] = (up - down) / (2 * h)
        err = relative_error(analytic.reshape(-1)[check], flat_n[check])
        rows.append((layer.id, layer.kind, float(err.max()) if len(check) else 0.0,
                     int(len(check)), int(a.size - len(clear))))
        a = y
    return rows


def check_end_to_end(model, x, target, h=1e-3):
    got = gradient(model, x, target)
    want = finite_diff_gradient(model, x, target, h)
    err = relative_error(got, want)
    return float(err.max()), float((err <= 1.0).mean())


def run_gradcheck(model, samples, target, seed=0, h=1e-3):
    if len(samples) == 0:
        raise ValueError("gradcheck needs at least 1 input sample")
    gen = np.random.default_rng(seed)
    report = GradcheckReport()
    for x in samples:
        report.layers.extend(check_layers(model, x, gen, h))
        report.end_to_end.append(check_end_to_end(model, x, target, h))
    return report
