"""Small synthetic models and inputs for tests, demos and desk-scale experiments."""

import numpy as np

from .model import (
    AvgPool2d,
    Conv2d,
    Dense,
    Flatten,
    MaxPool2d,
    Model,
    ReLU,
    Softmax,
    Softplus,
)

ACTIVATIONS = {"relu": ReLU, "softplus": Softplus}


def linear_model(weights, bias=0.0):
    """Single-output ``f(x) = w . x + b`` over a flat input."""
    w = np.asarray(weights, dtype=np.float32).reshape(1, -1)
    return Model((w.shape[1],), [Dense("linear", w.shape[1], 1)],
                 {"linear.weight": w, "linear.bias": np.array([bias], dtype=np.float32)})


def two_layer_linear_model(weights, seed=0):
    """Same function as :func:`linear_model`, factored into two dense layers."""
    w = np.asarray(weights, dtype=np.float64).reshape(1, -1)
    n = w.shape[1]
    gen = np.random.default_rng(seed)
    a = gen.normal(size=(n, n)) + 2.0 * np.eye(n)
    v = w @ np.linalg.inv(a)
    return Model((n,), [Dense("d1", n, n), Dense("d2", n, 1)], {
        "d1.weight": a.astype(np.float32), "d1.bias": np.zeros(n, np.float32),
        "d2.weight": v.astype(np.float32), "d2.bias": np.zeros(1, np.float32),
    })


def constant_model(input_shape, value=1.0, outputs=1):
    n = int(np.prod(input_shape))
    layers = [Flatten("flat"), Dense("out", n, outputs)] if len(input_shape) > 1 else [Dense("out", n, outputs)]
    return Model(input_shape, layers, {
        "out.weight": np.zeros((outputs, n), np.float32),
        "out.bias": np.full(outputs, value, np.float32),
    })


def mean_pixel_model(input_shape):
    """One output: the mean of all input values."""
    n = int(np.prod(input_shape))
    return Model(input_shape, [Flatten("flat"), Dense("mean", n, 1)], {
        "mean.weight": np.full((1, n), 1.0 / n, np.float32),
        "mean.bias": np.zeros(1, np.float32),
    })


def random_dense_net(seed, in_dim=6, hidden=(8,), outputs=3, activation="softplus", softmax=False, scale=1.0):
    gen = np.random.default_rng(seed)
    layers, weights = [], {}
    prev = in_dim
    for i, width in enumerate(hidden):
        layers += [Dense(f"d{i}", prev, width), ACTIVATIONS[activation](f"a{i}")]
        weights[f"d{i}.weight"] = gen.normal(0, scale / np.sqrt(prev), (width, prev))
        weights[f"d{i}.bias"] = gen.normal(0, 0.1, width)
        prev = width
    layers.append(Dense("head", prev, outputs))
    weights["head.weight"] = gen.normal(0, 1 / np.sqrt(prev), (outputs, prev))
    weights["head.bias"] = gen.normal(0, 0.1, outputs)
    if softmax:
        layers.append(Softmax("softmax"))
    return Model((in_dim,), layers, weights)


def random_conv_net(seed, input_shape=(1, 12, 12), channels=(4,), outputs=3, activation="relu",
                    pool="max", softmax=False):
    """conv -> activation -> pool blocks, then flatten and a dense head."""
    gen = np.random.default_rng(seed)
    c, h, w = input_shape
    layers, weights = [], {}
    for i, out_c in enumerate(channels):
        layers.append(Conv2d(f"conv{i}", c, out_c, (3, 3), (1, 1), (1, 1)))
        weights[f"conv{i}.weight"] = gen.normal(0, 1 / np.sqrt(9 * c), (out_c, c, 3, 3))
        weights[f"conv{i}.bias"] = gen.normal(0, 0.1, out_c)
        layers.append(ACTIVATIONS[activation](f"act{i}"))
        if pool and h >= 4 and w >= 4:
            layers.append((MaxPool2d if pool == "max" else AvgPool2d)(f"pool{i}", 2))
            h, w = h // 2, w // 2
        c = out_c
    layers.append(Flatten("flat"))
    n = c * h * w
    layers.append(Dense("head", n, outputs))
    weights["head.weight"] = gen.normal(0, 1 / np.sqrt(n), (outputs, n))
    weights["head.bias"] = gen.normal(0, 0.1, outputs)
    if softmax:
        layers.append(Softmax("softmax"))
    return Model(input_shape, layers, weights)


def place_regions(seed, size, kernel, count):
    """``count`` non-overlapping, grid-aligned ``kernel x kernel`` anchors."""
    gen = np.random.default_rng(seed)
    cells = (size // kernel) ** 2
    picks = gen.choice(cells, size=count, replace=False)
    per_row = size // kernel
    return [(int(p // per_row) * kernel, int(p % per_row) * kernel) for p in sorted(picks)]


def planted_region_model(size, regions, kernel, threshold=0.9):
    """Score ``sum_{i in mask} min(x_i, threshold)`` over a 1-channel image.

    On an input whose mask pixels all exceed ``threshold`` the gradient is
    exactly zero everywhere (the input sits in a flat zone), while filling
    any masked window with noise lowers the score.
    """
    mask = np.zeros((size, size), dtype=bool)
    for r, c in regions:
        mask[r:r + kernel, c:c + kernel] = True
    n, m = size * size, int(mask.sum())
    # min(x, t) = t - relu(t - x), gated per pixel by a 1x1 conv
    return Model((1, size, size), [
        Conv2d("gate", 1, 1, (1, 1)), ReLU("relu"), Flatten("flat"), Dense("sum", n, 1),
    ], {
        "gate.weight": np.full((1, 1, 1, 1), -1.0, np.float32),
        "gate.bias": np.array([threshold], np.float32),
        "sum.weight": -mask.reshape(1, n).astype(np.float32),
        "sum.bias": np.array([threshold * m], np.float32),
    }), mask


def planted_input(seed, mask, high=1.0):
    """Uniform [0, 1) background with the mask pixels set to ``high``."""
    gen = np.random.default_rng(seed)
    x = gen.random(mask.shape).astype(np.float32)
    x[mask] = high
    return x[None]
