"""File formats: matrix JSON, CSV tables and binary grid snapshots.

Snapshot layout: an 8-byte little-endian unsigned header length, a UTF-8
JSON header ``{grid, particles, spin_dims, time_tuple, shape, dtype}``, then
the complex128 values in C order (little-endian).
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ShapeError
from .lattice import Grid, GridFunction
from .operators import operator_from_dict, operator_to_dict


def to_jsonable(obj):
    """Convert numpy scalars/arrays and complex numbers to JSON-ready values.

    Complex numbers become ``{"re": x, "im": y}``; arrays become nested lists.
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj) -> None:
    """Deterministic JSON (sorted keys, shortest round-trip floats)."""
    text = json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_matrix_json(path, a) -> None:
    write_json(path, operator_to_dict(a))


def read_matrix_json(path) -> np.ndarray:
    return operator_from_dict(read_json(path))


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with a header row; floats written with ``repr`` so they round-trip."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ShapeError("row length does not match the header")
            w.writerow([_cell(v) for v in row])


def read_csv(path) -> tuple[list, list]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_snapshot(path, psi: GridFunction, time_tuple: Sequence[float]) -> None:
    header = {
        "grid": psi.grid.to_dict(),
        "particles": psi.n_particles,
        "spin_dims": list(psi.spin_dims),
        "time_tuple": [float(t) for t in time_tuple],
        "shape": list(psi.values.shape),
        "dtype": "complex128",
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    data = np.ascontiguousarray(psi.values, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(data.tobytes(order="C"))


def read_snapshot(path) -> tuple[GridFunction, dict]:
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n).decode("utf-8"))
        raw = fh.read()
    shape = tuple(header["shape"])
    vals = np.frombuffer(raw, dtype="<c16")
    if vals.size != int(np.prod(shape)):
        raise ShapeError("snapshot payload does not match its header")
    grid = Grid(**header["grid"])
    psi = GridFunction(grid, header["particles"], header["spin_dims"], vals.reshape(shape).copy())
    return psi, header
