"""On-disk formats: dataset and embedding CSVs, activation dumps, JSON reports.

Every writer goes through a temp file and ``os.replace`` so a crashed run
never leaves a half-written artifact behind.
"""

from __future__ import annotations

import csv
import io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

ACT_MAGIC = b"DACT"
ACT_VERSION = 1
_ACT_HEADER = struct.Struct("<4sIIIB")
TAPS = "ABCDE"


def atomic_write(path, data: bytes | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode() if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _num(v: float) -> str:
    return repr(float(v))


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# -- datasets ------------------------------------------------------------------


def write_dataset(path, features, labels, superclass=None) -> Path:
    """CSV with columns f0..f{d-1},label[,superclass]; unlabeled rows carry label -1."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if len(x) != len(y):
        raise ValueError("features and labels differ in length")
    header = [f"f{i}" for i in range(x.shape[1])] + ["label"]
    extra = None
    if superclass is not None:
        extra = np.asarray(superclass, dtype=np.int64)
        header.append("superclass")
    rows = []
    for i in range(len(x)):
        row = [_num(v) for v in x[i]] + [str(int(y[i]))]
        if extra is not None:
            row.append(str(int(extra[i])))
        rows.append(row)
    return atomic_write(path, _csv_text(header, rows))


def read_dataset(path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if "label" not in header:
        raise ValueError(f"{path}: missing label column")
    li = header.index("label")
    feats = [c for c in header if c.startswith("f") and c[1:].isdigit()]
    if feats != [f"f{i}" for i in range(len(feats))] or li != len(feats):
        raise ValueError(f"{path}: expected columns f0..f{{d-1}},label[,superclass]")
    has_sc = "superclass" in header
    x = np.array([[float(v) for v in r[:li]] for r in rows], dtype=np.float64).reshape(len(rows), li)
    y = np.array([int(r[li]) for r in rows], dtype=np.int64)
    sc = np.array([int(r[li + 1]) for r in rows], dtype=np.int64) if has_sc else None
    return x, y, sc


# -- embeddings ----------------------------------------------------------------


def write_embedding(path, coords, labels) -> Path:
    c = np.asarray(coords, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    rows = [[_num(a), _num(b), str(int(l))] for (a, b), l in zip(c, y)]
    return atomic_write(path, _csv_text(["x", "y", "label"], rows))


def read_embedding(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["x", "y", "label"]:
            raise ValueError(f"{path}: expected header x,y,label")
        rows = list(reader)
    coords = np.array([[float(r[0]), float(r[1])] for r in rows], dtype=np.float64).reshape(len(rows), 2)
    labels = np.array([int(r[2]) for r in rows], dtype=np.int64)
    return coords, labels


# -- activation dumps ----------------------------------------------------------


def activations_to_bytes(matrix, tap: str) -> bytes:
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("activations must be a 2-D matrix")
    if tap not in TAPS:
        raise ValueError(f"unknown tap {tap!r}")
    head = _ACT_HEADER.pack(ACT_MAGIC, ACT_VERSION, a.shape[0], a.shape[1], TAPS.index(tap))
    return head + a.astype("<f4").tobytes(order="C")


def activations_from_bytes(data: bytes) -> tuple[np.ndarray, str]:
    if len(data) < _ACT_HEADER.size:
        raise ValueError("activation dump truncated")
    magic, version, rows, cols, tag = _ACT_HEADER.unpack_from(data)
    if magic != ACT_MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != ACT_VERSION:
        raise ValueError(f"unsupported activation dump version {version}")
    if tag >= len(TAPS):
        raise ValueError(f"bad tap tag {tag}")
    body = data[_ACT_HEADER.size :]
    if len(body) != rows * cols * 4:
        raise ValueError("activation dump size does not match header")
    a = np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float64)
    return a, TAPS[tag]


def save_activations(path, matrix, tap: str) -> Path:
    return atomic_write(path, activations_to_bytes(matrix, tap))


def load_activations(path) -> tuple[np.ndarray, str]:
    return activations_from_bytes(Path(path).read_bytes())


# -- JSON ----------------------------------------------------------------------


def dumps_json(obj) -> str:
    """Canonical JSON: sorted keys, fixed indent, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write(path, dumps_json(obj))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
