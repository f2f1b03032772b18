"""Atomic file output and the numeric formats shared by the CSV writers."""
import json
import os
import tempfile

import numpy as np


def fmt(value):
    """Decimal text with 17 significant digits (exact float round trip)."""
    return format(float(value), ".16e")


def atomic_write(path, text):
    """Write ``text`` to a temporary file next to ``path``, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows):
    """Comma-separated text; float cells go through :func:`fmt`, others ``str``."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if v is None:
                cells.append("")
            elif isinstance(v, (bool, np.bool_)):
                cells.append(str(int(v)))
            elif isinstance(v, (float, np.floating)):
                cells.append(fmt(v))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows):
    atomic_write(path, csv_text(header, rows))


def matrix_csv(path, M):
    """A matrix as CSV with header ``c0..c{k-1}``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    write_csv(path, [f"c{j}" for j in range(M.shape[1])], [list(map(float, r)) for r in M])


def read_matrix_csv(path):
    return np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # JSON has no inf/nan
        return v if np.isfinite(v) else str(v)
    return obj


def write_json(path, obj):
    atomic_write(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
