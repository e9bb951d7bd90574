"""File formats: operator cache, field dumps and CSV tables.

Binary layout (operator cache and full-f dumps): an ASCII magic, a JSON
header line, then row-major little-endian float64 data.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

OPERATOR_MAGIC = b"ACLAB-OP1\n"
FIELD_MAGIC = b"ACLAB-F1\n"


def fmt(x) -> str:
    """17 significant digits so text output round-trips bit-exactly."""
    return format(float(x), ".17g")


def _write_binary(path, magic: bytes, header: dict, data: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = dict(header, shape=list(data.shape))
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def _read_binary(path, magic: bytes) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(len(magic)) != magic:
            raise ValueError(f"{path}: not a {magic.strip().decode()} file")
        header = json.loads(fh.readline())
        data = np.frombuffer(fh.read(), dtype="<f8")
    return header, data.reshape(header["shape"]).astype(np.float64)


def write_operator_cache(path, matrix: np.ndarray, grid_digest: str, kernel_digest: str) -> None:
    n = matrix.shape[0]
    _write_binary(path, OPERATOR_MAGIC, {"n": n, "grid": grid_digest, "kernel": kernel_digest}, matrix)


def read_operator_cache(path, grid_digest: str | None = None, kernel_digest: str | None = None):
    """Return the cached matrix, or None when the file is absent or keyed differently."""
    path = Path(path)
    if not path.exists():
        return None
    header, data = _read_binary(path, OPERATOR_MAGIC)
    if grid_digest is not None and header["grid"] != grid_digest:
        return None
    if kernel_digest is not None and header["kernel"] != kernel_digest:
        return None
    return data


def write_field_dump(path, f: np.ndarray, meta: dict) -> None:
    _write_binary(path, FIELD_MAGIC, meta, f)


def read_field_dump(path) -> tuple[dict, np.ndarray]:
    return _read_binary(path, FIELD_MAGIC)


def write_csv(path, header: list[str], rows, comments: list[str] | None = None) -> None:
    """CSV with optional leading '# ' comment lines; floats at 17 digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for c in comments or ():
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (str, int, np.integer)) else fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]], list[str]]:
    """(header, rows, comment lines) of a file written by write_csv."""
    comments, lines = [], []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                comments.append(line[1:].strip())
            else:
                lines.append(line)
    rows = list(csv.reader(lines))
    return rows[0], rows[1:], comments
