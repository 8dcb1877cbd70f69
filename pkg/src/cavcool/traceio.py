"""Binary and CSV trace files.

Binary layout::

    b"CAVTRACE" | uint32 LE header length | UTF-8 JSON header | data

The data block holds each column in turn (column-major) as little-endian
float64, ``n_samples`` values per column in the order listed under
``columns`` in the header. The header also records the schema version, the
kind of record, the physics configuration hash, the seed and the sample
period ``dt``.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .dynamics import Trajectory
from .photodetect import PhotocurrentTrace

MAGIC = b"CAVTRACE"
SCHEMA_VERSION = 1
_TRAJ_SCALARS = ("X0", "P0", "omega_t", "zero_point", "capped", "unstable", "truncated")


class TraceFormatError(ValueError):
    """File is not a trace file or has an unsupported schema."""


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def _write(path, header, columns):
    names = list(columns)
    n = len(columns[names[0]])
    header = dict(header, schema_version=SCHEMA_VERSION, columns=names, n_samples=n)
    text = json.dumps(_jsonable(header), sort_keys=True).encode()
    data = np.concatenate([np.asarray(columns[k], dtype="<f8") for k in names]) if names else np.empty(0, "<f8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(text)))
        fh.write(text)
        fh.write(data.tobytes())
    return path


def read_header(path):
    """Return (header dict, byte offset of the data block)."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise TraceFormatError(f"{path}: not a trace file")
        (size,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(size).decode())
    if header.get("schema_version") != SCHEMA_VERSION:
        raise TraceFormatError(f"{path}: unsupported schema version {header.get('schema_version')}")
    return header, len(MAGIC) + 4 + size


def _read(path):
    header, offset = read_header(path)
    n = header["n_samples"]
    names = header["columns"]
    data = np.fromfile(path, dtype="<f8", offset=offset)
    if data.size != n * len(names):
        raise TraceFormatError(f"{path}: expected {n * len(names)} values, found {data.size}")
    cols = {k: data[i * n:(i + 1) * n].astype(float) for i, k in enumerate(names)}
    return header, cols


def write_trajectory(path, trajectory, config_hash=None):
    header = {
        "kind": "trajectory",
        "physics_hash": trajectory.meta.get("physics_hash"),
        "config_hash": config_hash,
        "seed": trajectory.seed,
        "dt": trajectory.sample_period,
        "meta": trajectory.meta,
        **{k: getattr(trajectory, k) for k in _TRAJ_SCALARS},
    }
    return _write(path, header, trajectory.columns)


def read_trajectory(path):
    header, cols = _read(path)
    if header.get("kind") != "trajectory":
        raise TraceFormatError(f"{path}: not a trajectory record")
    return Trajectory(
        t=cols["t"], X=cols["X"], P=cols["P"], photons=cols["photons"], rate=cols["rate"],
        vacuum_counts=cols.get("vacuum_counts"), sample_period=header["dt"], seed=header["seed"],
        meta=header.get("meta", {}), **{k: header[k] for k in _TRAJ_SCALARS},
    )


def write_photocurrent(path, trace, config_hash=None):
    header = {
        "kind": "photocurrent",
        "physics_hash": trace.meta.get("physics_hash"),
        "config_hash": config_hash,
        "seed": trace.seed,
        "dt": trace.bin_width,
        "mode": trace.mode,
        "meta": trace.meta,
    }
    return _write(path, header, {"t": trace.t, "counts": trace.counts})


def read_photocurrent(path):
    header, cols = _read(path)
    if header.get("kind") != "photocurrent":
        raise TraceFormatError(f"{path}: not a photocurrent record")
    return PhotocurrentTrace(t=cols["t"], counts=cols["counts"], bin_width=header["dt"], mode=header["mode"],
                             seed=header["seed"], meta=header.get("meta", {}))


def write_csv(path, columns):
    """Write equal-length columns (dict name -> array) as a CSV table."""
    names = list(columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*(columns[k] for k in names)):
            w.writerow([repr(float(v)) for v in row])
    return Path(path)


def write_records(path, records):
    """Write a list of flat dicts as a CSV table (union of keys, first-seen order)."""
    keys = []
    for r in records:
        for k in r:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in records:
            w.writerow({k: _cell(r.get(k)) for k in keys})
    return Path(path)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, dict, np.ndarray)):
        return json.dumps(_jsonable(v))
    return v


def read_csv(path):
    """Read a numeric CSV table written by :func:`write_csv` into name -> array."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float).reshape(-1, len(names))
    return {k: data[:, i] for i, k in enumerate(names)}
