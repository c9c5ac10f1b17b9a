import json

import numpy as np

from schrolab.io import read_csv, read_field, table_to_csv, write_csv, write_field


def test_field_roundtrip_real(tmp_path, cube7, rng):
    u = rng.standard_normal(cube7.shape)
    write_field(tmp_path / "u.bin", u, cube7)
    v, meta = read_field(tmp_path / "u.bin")
    assert np.array_equal(u, v)
    assert meta["dims"] == [7, 7, 7]
    assert meta["box"] == list(cube7.box.side_lengths)
    # little-endian float64, last axis fastest
    raw = np.frombuffer((tmp_path / "u.bin").read_bytes(), dtype="<f8")
    assert raw[1] == u[0, 0, 1]


def test_field_roundtrip_complex(tmp_path, rng):
    z = rng.standard_normal((4, 5)) + 1j * rng.standard_normal((4, 5))
    write_field(tmp_path / "z.bin", z, shift=[0.5, 0.5])
    w, meta = read_field(tmp_path / "z.bin")
    assert np.array_equal(z, w)
    assert meta["dtype"] == "complex128-interleaved"
    raw = np.frombuffer((tmp_path / "z.bin").read_bytes(), dtype="<f8")
    assert raw[0] == z[0, 0].real and raw[1] == z[0, 0].imag
    assert json.loads((tmp_path / "z.bin.json").read_text())["shift"] == [0.5, 0.5]


def test_csv_header_only():
    assert table_to_csv(["a", "b"], []) == "a,b\n"


def test_csv_roundtrip(tmp_path):
    rows = [{"a": 1, "b": 0.1}, {"a": 2, "b": None}]
    write_csv(tmp_path / "t.csv", ["a", "b"], rows)
    back = read_csv(tmp_path / "t.csv")
    assert back == [{"a": "1", "b": "0.1"}, {"a": "2", "b": ""}]
    assert not list(tmp_path.glob(".*tmp"))
