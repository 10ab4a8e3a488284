"""Snapshot, marker dump and run summary writers.

Every file is written to a temporary name in the target directory and renamed
into place, so an interrupted run never leaves a truncated file under its
final name.
"""
from __future__ import annotations

import json
import os
import tempfile

import numpy as np


def atomic_write(path, data: bytes) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_field(path, arr: np.ndarray, role: str, geom, **meta) -> None:
    """Raw little-endian float64 data plus a ``.hdr`` text sidecar."""
    arr = np.ascontiguousarray(arr, dtype="<f8")
    head = {
        "shape": "x".join(map(str, arr.shape)),
        "dtype": "<f8",
        "role": role,
        "nx": geom.nx,
        "ny": geom.ny,
        "xsize": repr(float(geom.xsize)),
        "ysize": repr(float(geom.ysize)),
    }
    head.update({k: str(v) for k, v in meta.items()})
    atomic_write(str(path) + ".hdr", "".join(f"{k} = {v}\n" for k, v in head.items()).encode())
    atomic_write(path, arr.tobytes())


def read_field(path) -> tuple[np.ndarray, dict]:
    head = {}
    with open(str(path) + ".hdr", encoding="utf-8") as fh:
        for line in fh:
            k, v = line.split("=", 1)
            head[k.strip()] = v.strip()
    shape = tuple(int(s) for s in head["shape"].split("x"))
    with open(path, "rb") as fh:
        data = np.frombuffer(fh.read(), dtype=head["dtype"]).reshape(shape)
    return data.astype(np.float64), head


def write_markers(path, pool, fmt: str = "csv", **meta) -> None:
    """Marker table with a ``# key=value`` metadata line and a column header."""
    names = ["x", "y"] + sorted(pool.props)
    cols = [pool.xm, pool.ym] + [pool.props[k] for k in sorted(pool.props)]
    table = np.column_stack(cols) if pool.count else np.empty((0, len(cols)))
    header = " ".join(f"{k}={v}" for k, v in meta.items())
    header = f"# {header}\n" + ",".join(names)
    if fmt == "csv":
        lines = [header] + [",".join(repr(float(v)) for v in row) for row in table]
        atomic_write(path, ("\n".join(lines) + "\n").encode())
    elif fmt == "bin":
        atomic_write(path, (header + "\n").encode() + np.ascontiguousarray(table, "<f8").tobytes())
    else:
        raise ValueError(f"unknown marker format {fmt!r}")


def read_markers(path, fmt: str = "csv"):
    with open(path, "rb") as fh:
        raw = fh.read()
    meta = {}
    if raw.startswith(b"#"):
        nl = raw.index(b"\n")
        meta = dict(kv.split("=", 1) for kv in raw[1:nl].decode().split())
        raw = raw[nl + 1:]
    nl = raw.index(b"\n")
    names = raw[:nl].decode().split(",")
    if fmt == "csv":
        body = raw[nl + 1:].decode().strip()
        rows = [[float(v) for v in ln.split(",")] for ln in body.splitlines()] if body else []
        table = np.array(rows, dtype=float).reshape(-1, len(names))
    else:
        table = np.frombuffer(raw[nl + 1:], dtype="<f8").reshape(-1, len(names))
    return names, table, meta


def write_json(path, obj) -> None:
    atomic_write(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def write_log(path, lines) -> None:
    atomic_write(path, ("\n".join(lines) + "\n").encode())
