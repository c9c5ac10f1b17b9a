"""Binary field/matrix files with JSON sidecars, CSV tables, atomic writes."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _sidecar(path) -> Path:
    return Path(str(path) + ".json")


def _encode(values: np.ndarray) -> tuple[bytes, str]:
    values = np.ascontiguousarray(values)
    if np.iscomplexobj(values):
        inter = np.empty(values.shape + (2,), dtype="<f8")
        inter[..., 0] = values.real
        inter[..., 1] = values.imag
        return inter.tobytes(order="C"), "complex128-interleaved"
    return np.asarray(values, dtype="<f8").tobytes(order="C"), "float64"


def _decode(raw: bytes, shape, dtype: str) -> np.ndarray:
    data = np.frombuffer(raw, dtype="<f8")
    if dtype == "complex128-interleaved":
        data = data.reshape(tuple(shape) + (2,))
        return data[..., 0] + 1j * data[..., 1]
    return data.reshape(shape).copy()


def write_field(path, values: np.ndarray, grid=None, **header) -> None:
    """Little-endian float64, row-major; complex data interleaved (re, im)."""
    raw, dtype = _encode(values)
    meta = {"dims": list(np.shape(values)), "dtype": dtype}
    if grid is not None:
        meta["spacing"] = list(grid.spacing)
        meta["box"] = list(grid.box.side_lengths)
    meta.update(header)
    atomic_write_bytes(path, raw)
    atomic_write_text(_sidecar(path), dump_json(meta))


def read_field(path) -> tuple[np.ndarray, dict]:
    meta = json.loads(_sidecar(path).read_text())
    values = _decode(Path(path).read_bytes(), meta["dims"], meta.get("dtype", "float64"))
    return values, meta


# matrices share the layout; header carries the operator metadata
write_matrix = write_field
read_matrix = read_field


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def table_to_csv(columns: Sequence[str], rows: Iterable[Mapping | Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if isinstance(row, Mapping):
            row = [row.get(c) for c in columns]
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns: Sequence[str], rows) -> None:
    atomic_write_text(path, table_to_csv(columns, rows))


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
