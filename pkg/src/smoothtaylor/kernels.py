"""Hot numeric kernels, each with a numba loop version and a numpy version.

The public names at the bottom of the module point at whichever
implementation the active backend selects (see ``_accel``).  Both versions
stay importable as ``<name>_numba`` / ``<name>_numpy`` so tests and the
benchmark can compare them directly.

All kernels accumulate in float64 and return float64 arrays.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._accel import BACKEND, njit

# binomial 5-tap Burt-Adelson kernel
BINOMIAL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def conv_output_size(size, kernel, stride, pad):
    return (size + 2 * pad - kernel) // stride + 1


# ---------------------------------------------------------------------------
# conv2d


@njit
def _valid_range(kernel_offset, pad, stride, n_out, n_in):
    # output indices i with 0 <= i*stride - pad + kernel_offset < n_in
    lo = 0
    while lo < n_out and lo * stride - pad + kernel_offset < 0:
        lo += 1
    hi = n_out
    while hi > lo and (hi - 1) * stride - pad + kernel_offset >= n_in:
        hi -= 1
    return lo, hi


@njit
def _im2col(img, kh, kw, sh, sw, ph, pw, ho, wo):
    n_in, height, width = img.shape
    cols = np.zeros((n_in * kh * kw, ho * wo), dtype=np.float64)
    for c in range(n_in):
        for u in range(kh):
            i0, i1 = _valid_range(u, ph, sh, ho, height)
            for v in range(kw):
                j0, j1 = _valid_range(v, pw, sw, wo, width)
                row = (c * kh + u) * kw + v
                for i in range(i0, i1):
                    r = i * sh - ph + u
                    for j in range(j0, j1):
                        cols[row, i * wo + j] = img[c, r, j * sw - pw + v]
    return cols


@njit
def _col2im(cols, out, kh, kw, sh, sw, ph, pw, ho, wo):
    n_in, height, width = out.shape
    for c in range(n_in):
        for u in range(kh):
            i0, i1 = _valid_range(u, ph, sh, ho, height)
            for v in range(kw):
                j0, j1 = _valid_range(v, pw, sw, wo, width)
                row = (c * kh + u) * kw + v
                for i in range(i0, i1):
                    r = i * sh - ph + u
                    for j in range(j0, j1):
                        out[c, r, j * sw - pw + v] += cols[row, i * wo + j]


@njit
def conv2d_forward_numba(x, w, b, sh, sw, ph, pw):
    n_batch, n_in, height, width = x.shape
    n_out, _, kh, kw = w.shape
    ho = (height + 2 * ph - kh) // sh + 1
    wo = (width + 2 * pw - kw) // sw + 1
    w2 = np.ascontiguousarray(w.astype(np.float64).reshape(n_out, n_in * kh * kw))
    out = np.empty((n_batch, n_out, ho, wo), dtype=np.float64)
    for n in range(n_batch):
        res = w2 @ _im2col(x[n], kh, kw, sh, sw, ph, pw, ho, wo)
        for o in range(n_out):
            out[n, o] = res[o].reshape(ho, wo) + b[o]
    return out


def conv2d_forward_numpy(x, w, b, sh, sw, ph, pw):
    kh, kw = w.shape[2:]
    xp = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    out = np.einsum("bchwuv,ocuv->bohw", win, w.astype(np.float64), optimize=True)
    return out + b.astype(np.float64)[None, :, None, None]


@njit
def conv2d_backward_input_numba(gout, w, height, width, sh, sw, ph, pw):
    n_batch, n_out, ho, wo = gout.shape
    _, n_in, kh, kw = w.shape
    w2t = np.ascontiguousarray(w.astype(np.float64).reshape(n_out, n_in * kh * kw).T)
    gx = np.zeros((n_batch, n_in, height, width), dtype=np.float64)
    for n in range(n_batch):
        g = np.ascontiguousarray(gout[n].astype(np.float64)).reshape(n_out, ho * wo)
        _col2im(w2t @ g, gx[n], kh, kw, sh, sw, ph, pw, ho, wo)
    return gx


def conv2d_backward_input_numpy(gout, w, height, width, sh, sw, ph, pw):
    n_batch, _, ho, wo = gout.shape
    _, n_in, kh, kw = w.shape
    # (b, h, w, c, u, v) columns, then scatter back (col2im)
    cols = np.tensordot(gout.astype(np.float64), w.astype(np.float64), axes=([1], [0]))
    gxp = np.zeros((n_batch, n_in, height + 2 * ph, width + 2 * pw))
    for u in range(kh):
        for v in range(kw):
            gxp[:, :, u:u + sh * (ho - 1) + 1:sh, v:v + sw * (wo - 1) + 1:sw] += cols[..., u, v].transpose(0, 3, 1, 2)
    return gxp[:, :, ph:ph + height, pw:pw + width]


# ---------------------------------------------------------------------------
# max pooling; ties go to the first maximum in row-major window order


@njit
def maxpool2d_forward_numba(x, k, stride):
    n_batch, n_ch, height, width = x.shape
    ho = (height - k) // stride + 1
    wo = (width - k) // stride + 1
    out = np.empty((n_batch, n_ch, ho, wo), dtype=np.float64)
    idx = np.empty((n_batch, n_ch, ho, wo), dtype=np.int64)
    for n in range(n_batch):
        for c in range(n_ch):
            for i in range(ho):
                for j in range(wo):
                    r0 = i * stride
                    c0 = j * stride
                    best = np.float64(x[n, c, r0, c0])
                    best_at = r0 * width + c0
                    for u in range(k):
                        for v in range(k):
                            val = np.float64(x[n, c, r0 + u, c0 + v])
                            if val > best:
                                best = val
                                best_at = (r0 + u) * width + c0 + v
                    out[n, c, i, j] = best
                    idx[n, c, i, j] = best_at
    return out, idx


def maxpool2d_forward_numpy(x, k, stride):
    width = x.shape[3]
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    flat = win.reshape(win.shape[:4] + (k * k,))
    arg = np.argmax(flat, axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0].astype(np.float64)
    ho, wo = arg.shape[2:]
    rows = np.arange(ho)[:, None] * stride + arg // k
    cols = np.arange(wo)[None, :] * stride + arg % k
    return out, (rows * width + cols).astype(np.int64)


@njit
def maxpool2d_backward_numba(gout, idx, height, width):
    n_batch, n_ch, ho, wo = gout.shape
    gx = np.zeros((n_batch, n_ch, height * width), dtype=np.float64)
    for n in range(n_batch):
        for c in range(n_ch):
            for i in range(ho):
                for j in range(wo):
                    gx[n, c, idx[n, c, i, j]] += np.float64(gout[n, c, i, j])
    return gx.reshape((n_batch, n_ch, height, width))


def maxpool2d_backward_numpy(gout, idx, height, width):
    n_batch, n_ch = gout.shape[:2]
    gx = np.zeros((n_batch * n_ch, height * width))
    rows = np.repeat(np.arange(n_batch * n_ch), idx[0, 0].size)
    np.add.at(gx, (rows, idx.reshape(-1)), gout.reshape(-1).astype(np.float64))
    return gx.reshape(n_batch, n_ch, height, width)


# ---------------------------------------------------------------------------
# saliency-map kernels


@njit
def total_variation_numba(s):
    h, w = s.shape
    acc = 0.0
    for i in range(h):
        for j in range(w):
            if j + 1 < w:
                acc += abs(np.float64(s[i, j + 1]) - np.float64(s[i, j]))
            if i + 1 < h:
                acc += abs(np.float64(s[i + 1, j]) - np.float64(s[i, j]))
    return acc


def total_variation_numpy(s):
    s = np.asarray(s, dtype=np.float64)
    return float(np.abs(np.diff(s, axis=1)).sum() + np.abs(np.diff(s, axis=0)).sum())


@njit
def window_sums_numba(a, k):
    h, w = a.shape
    out = np.empty((h - k + 1, w - k + 1), dtype=np.float64)
    for i in range(h - k + 1):
        for j in range(w - k + 1):
            acc = 0.0
            for u in range(k):
                for v in range(k):
                    acc += np.float64(a[i + u, j + v])
            out[i, j] = acc
    return out


def window_sums_numpy(a, k):
    win = sliding_window_view(np.asarray(a, dtype=np.float64), (k, k))
    return win.sum(axis=(-2, -1))


@njit
def greedy_select_numba(scores, k, limit):
    hs, ws = scores.shape
    order = np.argsort(-scores.ravel(), kind="mergesort")
    blocked = np.zeros((hs, ws), dtype=np.bool_)
    picked = np.empty((limit, 2), dtype=np.int64)
    n = 0
    for flat in order:
        if n == limit:
            break
        r = flat // ws
        c = flat % ws
        if blocked[r, c]:
            continue
        picked[n, 0] = r
        picked[n, 1] = c
        n += 1
        for rr in range(max(r - k + 1, 0), min(r + k, hs)):
            for cc in range(max(c - k + 1, 0), min(c + k, ws)):
                blocked[rr, cc] = True
    return picked[:n]


def greedy_select_numpy(scores, k, limit):
    hs, ws = scores.shape
    order = np.argsort(-scores.ravel(), kind="stable")
    blocked = np.zeros((hs, ws), dtype=bool)
    picked = []
    for flat in order:
        if len(picked) == limit:
            break
        r, c = divmod(int(flat), ws)
        if blocked[r, c]:
            continue
        picked.append((r, c))
        blocked[max(r - k + 1, 0):r + k, max(c - k + 1, 0):c + k] = True
    return np.array(picked, dtype=np.int64).reshape(-1, 2)


@njit
def _reflect(i, n):
    # whole-sample mirror (d c b | a b c d), folded for any pad width
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i = i % period
    if i >= n:
        i = period - i
    return i


@njit
def blur5_numba(s):
    h, w = s.shape
    taps = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
    tmp = np.empty((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for t in range(5):
                acc += taps[t] * s[i, _reflect(j + t - 2, w)]
            tmp[i, j] = acc
    out = np.empty((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for t in range(5):
                acc += taps[t] * tmp[_reflect(i + t - 2, h), j]
            out[i, j] = acc
    return out


def blur5_numpy(s):
    s = np.asarray(s, dtype=np.float64)
    h, w = s.shape
    p = np.pad(s, ((0, 0), (2, 2)), mode="reflect")
    tmp = np.zeros((h, w))
    for t in range(5):
        tmp += BINOMIAL5[t] * p[:, t:t + w]
    p = np.pad(tmp, ((2, 2), (0, 0)), mode="reflect")
    out = np.zeros((h, w))
    for t in range(5):
        out += BINOMIAL5[t] * p[t:t + h, :]
    return out


def _bilinear_coords(n_in, n_out):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


@njit
def resize_bilinear_numba(s, oh, ow):
    h, w = s.shape
    out = np.empty((oh, ow), dtype=np.float64)
    for i in range(oh):
        y = min(max((i + 0.5) * (h / oh) - 0.5, 0.0), h - 1.0)
        y0 = int(np.floor(y))
        y1 = min(y0 + 1, h - 1)
        fy = y - y0
        for j in range(ow):
            x = min(max((j + 0.5) * (w / ow) - 0.5, 0.0), w - 1.0)
            x0 = int(np.floor(x))
            x1 = min(x0 + 1, w - 1)
            fx = x - x0
            top = s[y0, x0] * (1.0 - fx) + s[y0, x1] * fx
            bot = s[y1, x0] * (1.0 - fx) + s[y1, x1] * fx
            out[i, j] = top * (1.0 - fy) + bot * fy
    return out


def resize_bilinear_numpy(s, oh, ow):
    s = np.asarray(s, dtype=np.float64)
    y0, y1, fy = _bilinear_coords(s.shape[0], oh)
    x0, x1, fx = _bilinear_coords(s.shape[1], ow)
    fx = fx[None, :]
    top = s[y0][:, x0] * (1.0 - fx) + s[y0][:, x1] * fx
    bot = s[y1][:, x0] * (1.0 - fx) + s[y1][:, x1] * fx
    return top * (1.0 - fy[:, None]) + bot * fy[:, None]


_KERNELS = (
    "conv2d_forward",
    "conv2d_backward_input",
    "maxpool2d_forward",
    "maxpool2d_backward",
    "total_variation",
    "window_sums",
    "greedy_select",
    "blur5",
    "resize_bilinear",
)


def implementations(name):
    """Return ``(numba_version, numpy_version)`` for a kernel name."""
    return globals()[name + "_numba"], globals()[name + "_numpy"]


for _name in _KERNELS:
    globals()[_name] = implementations(_name)[0 if BACKEND == "numba" else 1]
del _name
