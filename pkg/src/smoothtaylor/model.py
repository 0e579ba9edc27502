"""Layered models with a hand-written reverse pass.

A :class:`Model` is an input shape, an ordered list of layer descriptors and
a weight table keyed ``"<layer id>.<param>"``.  Inputs are single samples
shaped like ``model.input_shape``; image inputs are channel-first
``(C, H, W)``.  Internally every pass runs on a leading batch axis.
"""

import hashlib
import json
import os
from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from . import kernels
from .tensor import NonFiniteError, as_tensor

MODEL_FORMAT = "smoothtaylor-model"
MODEL_FORMAT_VERSION = 1
SCORE_KINDS = ("logit", "probability")


class ShapeError(ValueError):
    """A tensor or weight shape does not fit the layer it is fed to."""

    def __init__(self, layer_id, message):
        super().__init__(f"layer {layer_id!r}: {message}")
        self.layer_id = layer_id


class ModelFormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# layers


def _pair(v):
    if isinstance(v, (list, tuple)):
        a, b = v
        return int(a), int(b)
    return int(v), int(v)


@dataclass(frozen=True)
class Layer:
    id: str
    kind: ClassVar[str] = ""

    def param_shapes(self, in_shape):
        return {}

    def output_shape(self, in_shape):
        return in_shape

    def forward(self, x, params, dtype):
        """Return ``(y, cache)`` for a batch ``x``."""
        raise NotImplementedError

    def backward(self, g, cache, params, dtype):
        raise NotImplementedError

    def describe(self):
        return {"id": self.id, "type": self.kind}


@dataclass(frozen=True)
class Dense(Layer):
    in_features: int = 0
    out_features: int = 0
    kind: ClassVar[str] = "dense"

    def param_shapes(self, in_shape):
        return {"weight": (self.out_features, self.in_features), "bias": (self.out_features,)}

    def output_shape(self, in_shape):
        if tuple(in_shape) != (self.in_features,):
            raise ShapeError(self.id, f"expects input ({self.in_features},), got {tuple(in_shape)}")
        return (self.out_features,)

    def forward(self, x, params, dtype):
        w, b = params["weight"], params["bias"]
        y = x.astype(np.float64) @ w.T + b
        return y.astype(dtype), None

    def backward(self, g, cache, params, dtype):
        return (g.astype(np.float64) @ params["weight"]).astype(dtype)

    def describe(self):
        return {**super().describe(), "in_features": self.in_features, "out_features": self.out_features}


@dataclass(frozen=True)
class Conv2d(Layer):
    in_channels: int = 0
    out_channels: int = 0
    kernel: tuple = (3, 3)
    stride: tuple = (1, 1)
    padding: tuple = (0, 0)
    kind: ClassVar[str] = "conv2d"

    def __post_init__(self):
        for name in ("kernel", "stride", "padding"):
            object.__setattr__(self, name, _pair(getattr(self, name)))

    def param_shapes(self, in_shape):
        return {
            "weight": (self.out_channels, self.in_channels) + self.kernel,
            "bias": (self.out_channels,),
        }

    def output_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.in_channels:
            raise ShapeError(
                self.id, f"expects ({self.in_channels}, H, W) input, got {tuple(in_shape)}"
            )
        ho = kernels.conv_output_size(in_shape[1], self.kernel[0], self.stride[0], self.padding[0])
        wo = kernels.conv_output_size(in_shape[2], self.kernel[1], self.stride[1], self.padding[1])
        if ho < 1 or wo < 1:
            raise ShapeError(self.id, f"kernel {self.kernel} does not fit input {tuple(in_shape)}")
        return (self.out_channels, ho, wo)

    def forward(self, x, params, dtype):
        y = kernels.conv2d_forward(
            np.ascontiguousarray(x), params["weight"], params["bias"], *self.stride, *self.padding
        )
        return y.astype(dtype), x.shape[2:]

    def backward(self, g, cache, params, dtype):
        height, width = cache
        gx = kernels.conv2d_backward_input(
            np.ascontiguousarray(g), params["weight"], height, width, *self.stride, *self.padding
        )
        return gx.astype(dtype)

    def describe(self):
        return {
            **super().describe(),
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel": list(self.kernel),
            "stride": list(self.stride),
            "padding": list(self.padding),
        }


@dataclass(frozen=True)
class ReLU(Layer):
    kind: ClassVar[str] = "relu"

    def forward(self, x, params, dtype):
        return np.maximum(x, 0).astype(dtype), x > 0

    def backward(self, g, cache, params, dtype):
        # subgradient 0 at exactly 0
        return np.where(cache, g, 0).astype(dtype)


@dataclass(frozen=True)
class Softplus(Layer):
    kind: ClassVar[str] = "softplus"

    def forward(self, x, params, dtype):
        x64 = x.astype(np.float64)
        y = np.maximum(x64, 0) + np.log1p(np.exp(-np.abs(x64)))
        return y.astype(dtype), x64

    def backward(self, g, cache, params, dtype):
        sig = 0.5 * (1.0 + np.tanh(0.5 * cache))
        return (g * sig).astype(dtype)


@dataclass(frozen=True)
class _Pool2d(Layer):
    kernel: int = 2
    stride: int = 0  # 0 means "same as kernel"

    def __post_init__(self):
        object.__setattr__(self, "kernel", int(self.kernel))
        object.__setattr__(self, "stride", int(self.stride) or int(self.kernel))

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(self.id, f"expects (C, H, W) input, got {tuple(in_shape)}")
        c, h, w = in_shape
        if h < self.kernel or w < self.kernel:
            raise ShapeError(self.id, f"window {self.kernel} larger than input {tuple(in_shape)}")
        return (c, (h - self.kernel) // self.stride + 1, (w - self.kernel) // self.stride + 1)

    def describe(self):
        return {**super().describe(), "kernel": self.kernel, "stride": self.stride}


@dataclass(frozen=True)
class MaxPool2d(_Pool2d):
    kind: ClassVar[str] = "maxpool2d"

    def forward(self, x, params, dtype):
        y, idx = kernels.maxpool2d_forward(np.ascontiguousarray(x), self.kernel, self.stride)
        return y.astype(dtype), (idx, x.shape[2:])

    def backward(self, g, cache, params, dtype):
        idx, (h, w) = cache
        return kernels.maxpool2d_backward(np.ascontiguousarray(g), idx, h, w).astype(dtype)


@dataclass(frozen=True)
class AvgPool2d(_Pool2d):
    kind: ClassVar[str] = "avgpool2d"

    def forward(self, x, params, dtype):
        k, s = self.kernel, self.stride
        win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        y = win.astype(np.float64).mean(axis=(-2, -1))
        return y.astype(dtype), x.shape[2:]

    def backward(self, g, cache, params, dtype):
        k, s = self.kernel, self.stride
        h, w = cache
        ho, wo = g.shape[2:]
        gx = np.zeros(g.shape[:2] + (h, w))
        share = g.astype(np.float64) / (k * k)
        for u in range(k):
            for v in range(k):
                gx[:, :, u:u + s * (ho - 1) + 1:s, v:v + s * (wo - 1) + 1:s] += share
        return gx.astype(dtype)


@dataclass(frozen=True)
class Flatten(Layer):
    kind: ClassVar[str] = "flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, params, dtype):
        return x.reshape(x.shape[0], -1), x.shape[1:]

    def backward(self, g, cache, params, dtype):
        return g.reshape((g.shape[0],) + tuple(cache))


def _softmax(z):
    z = z.astype(np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class Softmax(Layer):
    kind: ClassVar[str] = "softmax"

    def output_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeError(self.id, f"expects a flat vector, got {tuple(in_shape)}")
        return in_shape

    def forward(self, x, params, dtype):
        p = _softmax(x)
        return p.astype(dtype), p

    def backward(self, g, cache, params, dtype):
        p = cache
        g64 = g.astype(np.float64)
        return (p * (g64 - (g64 * p).sum(axis=-1, keepdims=True))).astype(dtype)


LAYER_TYPES = {
    cls.kind: cls for cls in (Dense, Conv2d, ReLU, Softplus, MaxPool2d, AvgPool2d, Flatten, Softmax)
}


def layer_from_dict(d):
    d = dict(d)
    d.pop("weights", None)
    kind = d.pop("type", None)
    if kind not in LAYER_TYPES:
        raise ModelFormatError(f"unknown layer type {kind!r}")
    try:
        return LAYER_TYPES[kind](**d)
    except TypeError as exc:
        raise ModelFormatError(f"bad descriptor for {kind} layer: {exc}") from None


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class ScoreTarget:
    class_index: int
    kind: str = "logit"

    def __post_init__(self):
        if self.class_index < 0:
            raise ValueError("class_index must be non-negative")
        if self.kind not in SCORE_KINDS:
            raise ValueError(f"score kind must be one of {SCORE_KINDS}, got {self.kind!r}")


class Model:
    """An immutable stack of layers plus their weights.

    Parameters
    ----------
    input_shape : tuple of int
        Shape of one input sample (no batch axis).
    layers : list of Layer
    weights : dict
        Maps ``"<layer id>.<param>"`` to arrays; coerced to read-only float32.
    """

    def __init__(self, input_shape, layers, weights):
        self.input_shape = tuple(int(s) for s in input_shape)
        self.layers = tuple(layers)
        ids = [layer.id for layer in self.layers]
        if len(set(ids)) != len(ids):
            raise ModelFormatError("layer ids must be unique")
        self.weights = {}
        self.shapes = [self.input_shape]
        shape = self.input_shape
        for layer in self.layers:
            for pname, pshape in layer.param_shapes(shape).items():
                key = f"{layer.id}.{pname}"
                if key not in weights:
                    raise ShapeError(layer.id, f"missing weight {key!r}")
                arr = as_tensor(weights[key], readonly=True)
                if arr.shape != tuple(pshape):
                    raise ShapeError(layer.id, f"weight {pname} has shape {arr.shape}, expected {tuple(pshape)}")
                self.weights[key] = arr
            shape = tuple(layer.output_shape(shape))
            self.shapes.append(shape)
        self._params = {}

    @property
    def output_shape(self):
        return self.shapes[-1]

    def params(self, layer, dtype=np.float64):
        """Weights of ``layer`` cast to ``dtype`` (cached)."""
        key = (layer.id, np.dtype(dtype).str)
        if key not in self._params:
            prefix = layer.id + "."
            self._params[key] = {
                k[len(prefix):]: v.astype(dtype) for k, v in self.weights.items() if k.startswith(prefix)
            }
        return self._params[key]

    def check_input(self, x, batched=False):
        x = np.asarray(x)
        shape = x.shape[1:] if batched else x.shape
        if tuple(shape) != self.input_shape:
            first = self.layers[0].id if self.layers else "<input>"
            raise ShapeError(first, f"input shape {tuple(shape)} does not match model input {self.input_shape}")
        return x

    def run(self, xb, dtype=np.float32, layers=None):
        """Forward a batch through ``layers`` (default: all), keeping caches."""
        layers = self.layers if layers is None else layers
        h = np.asarray(xb, dtype=dtype)
        caches = []
        for layer in layers:
            h, cache = layer.forward(h, self.params(layer, np.float64), dtype)
            caches.append(cache)
        return h, caches

    def backprop(self, g, caches, dtype=np.float32, layers=None):
        layers = self.layers if layers is None else layers
        for layer, cache in zip(reversed(layers), reversed(caches)):
            g = layer.backward(g, cache, self.params(layer, np.float64), dtype)
        return g

    def describe(self):
        return {"input_shape": list(self.input_shape), "layers": [layer.describe() for layer in self.layers]}

    def digest(self):
        """SHA-256 over the layer manifest and weight bytes."""
        h = hashlib.sha256(json.dumps(self.describe(), sort_keys=True).encode())
        for key in sorted(self.weights):
            h.update(key.encode())
            h.update(np.ascontiguousarray(self.weights[key], dtype="<f4").tobytes())
        return h.hexdigest()


def _split_softmax(model):
    if model.layers and isinstance(model.layers[-1], Softmax):
        return model.layers[:-1]
    return model.layers


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {what}")
    return arr


def forward(model, x, dtype=np.float32):
    """Model output for one input sample."""
    x = model.check_input(x)
    y, _ = model.run(x[None], dtype)
    return _check_finite(y[0], "forward output")


def forward_batch(model, xb, dtype=np.float32):
    xb = model.check_input(xb, batched=True)
    y, _ = model.run(xb, dtype)
    return _check_finite(y, "forward output")


def predicted_class(model, x):
    return int(np.argmax(forward(model, x)))


def _check_target(model, target, n_out):
    if target.class_index >= n_out:
        raise IndexError(f"class_index {target.class_index} out of range for {n_out} outputs")


def _scores_from_logits(logits, target):
    c = target.class_index
    if target.kind == "logit":
        return logits[:, c].astype(np.float64), None
    p = _softmax(logits)
    return p[:, c], p


def score_batch(model, xb, target, dtype=np.float32):
    xb = model.check_input(xb, batched=True)
    body = _split_softmax(model)
    logits, _ = model.run(xb, dtype, body)
    _check_target(model, target, logits.shape[-1])
    s, _ = _scores_from_logits(logits, target)
    return _check_finite(s, "score")


def score(model, x, target, dtype=np.float32):
    """Selected class logit or probability for one sample, as a Python float.

    A trailing softmax layer is treated as part of the score: ``"logit"``
    reads the value feeding it, ``"probability"`` the value after it.
    """
    x = model.check_input(x)
    return float(score_batch(model, x[None], target, dtype)[0])


def gradient_batch(model, xb, target, dtype=np.float32, chunk=64):
    """Scores and input gradients for a batch, in fixed chunk order."""
    xb = model.check_input(xb, batched=True)
    body = _split_softmax(model)
    scores = np.empty(len(xb))
    grads = np.empty(xb.shape, dtype=dtype)
    for start in range(0, len(xb), chunk):
        part = xb[start:start + chunk]
        logits, caches = model.run(part, dtype, body)
        _check_target(model, target, logits.shape[-1])
        s, p = _scores_from_logits(logits, target)
        seed = np.zeros(logits.shape)
        c = target.class_index
        if p is None:
            seed[:, c] = 1.0
        else:
            seed = -p * p[:, c:c + 1]
            seed[:, c] += p[:, c]
        scores[start:start + chunk] = s
        grads[start:start + chunk] = model.backprop(seed.astype(dtype), caches, dtype, body)
    _check_finite(scores, "score")
    return scores, _check_finite(grads, "gradient")


def gradient(model, x, target, dtype=np.float32):
    """d score / d x for one sample, same shape as ``x``."""
    x = model.check_input(x)
    return gradient_batch(model, x[None], target, dtype)[1][0]


def central_difference(func, x, h=1e-3):
    """Central-difference gradient of a scalar function, computed in float64."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty(x.shape)
    flat = grad.reshape(-1)
    xp = x.copy().reshape(-1)
    for i in range(xp.size):
        orig = xp[i]
        xp[i] = orig + h
        up = func(xp.reshape(x.shape))
        xp[i] = orig - h
        down = func(xp.reshape(x.shape))
        xp[i] = orig
        flat[i] = (up - down) / (2 * h)
    return grad


def finite_diff_gradient(model, x, target, h=1e-3, chunk=128):
    """Central-difference estimate of :func:`gradient`, evaluated in float64.

    Perturbed copies are pushed through the model in batches of ``2 * chunk``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(model.check_input(x), dtype=np.float64)
    n = x.size
    out = np.empty(n)
    for start in range(0, n, chunk):
        idx = np.arange(start, min(start + chunk, n))
        step = np.zeros((len(idx), n))
        step[np.arange(len(idx)), idx] = h
        step = step.reshape((len(idx),) + x.shape)
        batch = np.concatenate([x[None] + step, x[None] - step])
        s = score_batch(model, batch, target, dtype=np.float64)
        out[idx] = (s[:len(idx)] - s[len(idx):]) / (2 * h)
    return out.reshape(x.shape)


# ---------------------------------------------------------------------------
# model files: JSON manifest + little-endian float32 sidecar


def model_to_files(model, weights_name):
    """Return ``(manifest_dict, blob_bytes)`` for ``model``."""
    blobs, chunks, offset = [], [], 0
    layers = []
    for layer in model.layers:
        d = layer.describe()
        refs = {}
        for key in sorted(k for k in model.weights if k.startswith(layer.id + ".")):
            data = np.ascontiguousarray(model.weights[key], dtype="<f4").tobytes()
            blobs.append({"name": key, "shape": list(model.weights[key].shape), "offset": offset, "nbytes": len(data)})
            chunks.append(data)
            offset += len(data)
            refs[key[len(layer.id) + 1:]] = key
        if refs:
            d["weights"] = refs
        layers.append(d)
    manifest = {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "input_shape": list(model.input_shape),
        "weights_file": weights_name,
        "blobs": blobs,
        "layers": layers,
    }
    return manifest, b"".join(chunks)


def model_from_files(manifest, blob):
    if manifest.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"not a {MODEL_FORMAT} manifest")
    if manifest.get("version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {manifest.get('version')!r}")
    table = {}
    for b in manifest.get("blobs", []):
        count = int(np.prod(b["shape"]))
        if b["offset"] + 4 * count > len(blob):
            raise ModelFormatError(f"blob {b['name']!r} runs past the end of the weights file")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=b["offset"])
        table[b["name"]] = arr.reshape(b["shape"])
    layers, weights = [], {}
    for d in manifest["layers"]:
        layer = layer_from_dict(d)
        for pname, ref in d.get("weights", {}).items():
            if ref not in table:
                raise ModelFormatError(f"layer {layer.id!r} references unknown blob {ref!r}")
            weights[f"{layer.id}.{pname}"] = table[ref]
        layers.append(layer)
    return Model(manifest["input_shape"], layers, weights)


def save_model(model, path):
    from ._io import atomic_write

    path = os.fspath(path)
    stem = os.path.splitext(os.path.basename(path))[0]
    manifest, blob = model_to_files(model, stem + ".bin")
    atomic_write(os.path.join(os.path.dirname(path), stem + ".bin"), blob)
    atomic_write(path, (json.dumps(manifest, indent=2) + "\n").encode())


def load_model(path):
    path = os.fspath(path)
    with open(path) as fh:
        manifest = json.load(fh)
    wpath = os.path.join(os.path.dirname(path), manifest.get("weights_file", ""))
    with open(wpath, "rb") as fh:
        blob = fh.read()
    return model_from_files(manifest, blob)
