"""Area under sampled curves."""

import numpy as np


def simpson_auc(points):
    """Composite Simpson's rule over uniformly spaced ``(t, v)`` points.

    Interval pairs are integrated with Simpson's rule; with an odd number of
    intervals the last one falls back to the trapezoid rule.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise ValueError("need at least 2 (t, v) points")
    t, v = pts[:, 0], pts[:, 1]
    dt = np.diff(t)
    step = dt[0]
    if not step > 0 or not np.allclose(dt, step, rtol=1e-9, atol=0.0):
        raise ValueError("points must be uniformly spaced in increasing t")
    n = len(v) - 1
    even = n - (n % 2)
    area = step / 3.0 * np.sum(v[0:even:2] + 4.0 * v[1:even:2] + v[2:even + 1:2])
    if n % 2:
        area += 0.5 * step * (v[-2] + v[-1])
    return float(area)
