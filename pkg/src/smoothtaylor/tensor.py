"""Float32 tensors and the ``TSR1`` binary tensor file format.

Tensors are plain ``numpy.ndarray`` objects of dtype float32.  The file
layout is::

    8 bytes   magic  b"TSR1\\0\\0\\0\\0"
    u32       rank
    rank*u32  dims
    f32 * N   payload, row-major

everything little-endian.
"""

import struct

import numpy as np

MAGIC = b"TSR1\x00\x00\x00\x00"


class TensorFormatError(ValueError):
    pass


class NonFiniteError(ArithmeticError):
    """Raised when NaN or Inf shows up where finite numbers are required."""


def as_tensor(data, shape=None, *, readonly=False):
    """Coerce ``data`` to a finite float32 array, optionally reshaping it.

    Raises
    ------
    ValueError
        If ``shape`` is given and does not hold exactly ``len(data)`` elements.
    NonFiniteError
        If any element is NaN or infinite.
    """
    arr = np.array(data, dtype=np.float32)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise ValueError(f"shape must be positive, got {shape}")
        if int(np.prod(shape)) != arr.size:
            raise ValueError(f"shape {shape} does not match {arr.size} elements")
        arr = arr.reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("tensor contains non-finite values")
    if readonly:
        arr.flags.writeable = False
    return arr


def tensor_to_bytes(arr):
    arr = np.ascontiguousarray(arr, dtype="<f4")
    header = MAGIC + struct.pack("<I", arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.tobytes()


def tensor_from_bytes(buf):
    if len(buf) < 12 or buf[:8] != MAGIC:
        raise TensorFormatError("bad magic, not a TSR1 tensor")
    (rank,) = struct.unpack_from("<I", buf, 8)
    off = 12 + 4 * rank
    if len(buf) < off:
        raise TensorFormatError("truncated tensor header")
    dims = struct.unpack_from(f"<{rank}I", buf, 12)
    count = int(np.prod(dims)) if rank else 1
    if len(buf) != off + 4 * count:
        raise TensorFormatError(
            f"payload holds {(len(buf) - off) // 4} floats, header declares {count}"
        )
    arr = np.frombuffer(buf, dtype="<f4", count=count, offset=off)
    return arr.astype(np.float32).reshape(dims)


def save_tensor(path, arr):
    from ._io import atomic_write

    atomic_write(path, tensor_to_bytes(arr))


def load_tensor(path):
    with open(path, "rb") as fh:
        return tensor_from_bytes(fh.read())


def channel_bounds(x, value_range=None):
    """Lower/upper bounds broadcastable against ``x``.

    ``value_range`` is ``(lo, hi)`` or a per-channel list of pairs (channel
    axis 0 of a ``(C, H, W)`` input).  Without one, each channel's own
    min and max in ``x`` are used; non-image inputs use the global range.
    """
    x = np.asarray(x)
    per_channel = x.ndim == 3
    if value_range is None:
        if per_channel:
            lo = x.reshape(x.shape[0], -1).min(axis=1)
            hi = x.reshape(x.shape[0], -1).max(axis=1)
        else:
            lo, hi = x.min(), x.max()
    else:
        r = np.asarray(value_range, dtype=np.float64)
        if r.shape == (2,):
            lo, hi = r
        elif per_channel and r.shape == (x.shape[0], 2):
            lo, hi = r[:, 0], r[:, 1]
        else:
            raise ValueError(f"value_range of shape {r.shape} does not fit input {x.shape}")
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if np.any(hi < lo):
        raise ValueError("value_range has hi < lo")
    if lo.ndim == 1:
        lo, hi = lo[:, None, None], hi[:, None, None]
    return lo, hi
