"""Atomic file output and small text formats shared by the commands."""

import csv
import io
import os
import tempfile

import numpy as np


def atomic_write(path, data):
    """Write ``data`` (bytes) to ``path`` via a temp file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_bytes(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue().encode()


def write_csv(path, header, rows):
    atomic_write(path, csv_bytes(header, rows))


def fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def pgm_bytes(values):
    """8-bit binary PGM of a [0, 1] map, value*255 rounded half up."""
    values = np.asarray(values, dtype=np.float64)
    h, w = values.shape
    pix = np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    return f"P5\n{w} {h}\n255\n".encode() + pix.tobytes()
