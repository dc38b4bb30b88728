"""Deterministic artifact writers: CSV, JSON, and the checkpoint container.

Floats are rendered with ``repr`` (shortest round-trip) so a seeded run
produces bitwise-identical files every time. The checkpoint container is a
small versioned binary format: magic, a sorted-key JSON header describing the
config and the array index, then raw little-endian float64 data. ``np.savez``
is avoided because zip members embed timestamps.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

__all__ = ["fmt_float", "write_csv", "write_json", "save_container", "load_container"]

_MAGIC = b"LSAC"
_VERSION = 1


def fmt_float(x) -> str:
    return repr(float(x))


def write_csv(path, header: list[str], rows) -> None:
    """Write rows of mixed str/int/float cells with deterministic formatting."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, (float, np.floating)):
                cells.append(fmt_float(cell))
            else:
                cells.append(str(cell))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def save_container(path, config: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write a flat name->float64-array container with a config manifest."""
    index = []
    offset = 0
    names = sorted(arrays)
    for name in names:
        arr = np.ascontiguousarray(arrays[name], dtype=np.float64)
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.nbytes
    header = {
        "format_version": _VERSION,
        "config": config,
        "arrays": index,
        "dtype": "<f8",
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.uint32(_VERSION).tobytes())
        fh.write(np.uint64(len(blob)).tobytes())
        fh.write(blob)
        for name in names:
            fh.write(np.ascontiguousarray(arrays[name], dtype=np.float64).tobytes())


def load_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint container (bad magic {magic!r})")
        version = int(np.frombuffer(fh.read(4), dtype=np.uint32)[0])
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported container version {version}")
        hlen = int(np.frombuffer(fh.read(8), dtype=np.uint64)[0])
        header = json.loads(fh.read(hlen).decode("utf-8"))
        arrays: dict[str, np.ndarray] = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return header["config"], arrays
