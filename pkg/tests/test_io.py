"""Serialization formats."""
import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multitime.errors import ShapeError
from multitime.io import (
    read_csv, read_json, read_matrix_json, read_snapshot, to_jsonable, write_csv, write_json,
    write_matrix_json, write_snapshot,
)
from multitime.lattice import Grid, gaussian_state, product_state


def test_matrix_roundtrip(tmp_path):
    a = np.array([[1, 2j], [-0.5, 3 + 1e-17j]])
    write_matrix_json(tmp_path / "m.json", a)
    doc = read_json(tmp_path / "m.json")
    assert doc["dim"] == 2 and len(doc["re"]) == 4
    assert np.array_equal(read_matrix_json(tmp_path / "m.json"), a)


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=6))
@settings(max_examples=30, deadline=None)
def test_csv_floats_roundtrip(tmp_path_factory, xs):
    path = tmp_path_factory.mktemp("csv") / "t.csv"
    write_csv(path, ["k", "x"], [(k, x) for k, x in enumerate(xs)])
    header, rows = read_csv(path)
    assert header == ["k", "x"]
    assert [float(r[1]) for r in rows] == xs


def test_csv_row_length_checked(tmp_path):
    with pytest.raises(ShapeError):
        write_csv(tmp_path / "t.csv", ["a", "b"], [(1,)])


def test_json_is_deterministic(tmp_path):
    obj = {"b": np.float64(0.1), "a": [1 + 2j, np.int64(3)], "c": np.arange(2)}
    write_json(tmp_path / "1.json", obj)
    write_json(tmp_path / "2.json", dict(reversed(list(obj.items()))))
    assert (tmp_path / "1.json").read_bytes() == (tmp_path / "2.json").read_bytes()
    assert to_jsonable(1 + 2j) == {"re": 1.0, "im": 2.0}


def test_snapshot_roundtrip(tmp_path):
    g = Grid(1, 16, 0.5)
    psi = product_state([gaussian_state(g, 3.0, 1.0, (1, 1j)), gaussian_state(g, 4.0, 1.0, (1, 0))])
    write_snapshot(tmp_path / "s.bin", psi, [0.5, 1.0])
    back, header = read_snapshot(tmp_path / "s.bin")
    assert np.array_equal(back.values, psi.values)
    assert back.grid == g and back.spin_dims == (2, 2)
    assert header["time_tuple"] == [0.5, 1.0]
    raw = (tmp_path / "s.bin").read_bytes()
    (n,) = struct.unpack("<Q", raw[:8])
    assert json.loads(raw[8:8 + n])["particles"] == 2
    assert len(raw) == 8 + n + psi.values.size * 16


def test_truncated_snapshot(tmp_path):
    g = Grid(1, 8, 1.0)
    write_snapshot(tmp_path / "s.bin", gaussian_state(g, 3.0, 1.0, (1, 0)), [0.0])
    raw = (tmp_path / "s.bin").read_bytes()
    (tmp_path / "s.bin").write_bytes(raw[:-16])
    with pytest.raises(ShapeError):
        read_snapshot(tmp_path / "s.bin")
