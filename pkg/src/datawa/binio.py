"""Byte-stable array container: magic, version, JSON header, raw little-endian arrays.

``np.savez`` embeds zip timestamps, so two identical saves differ on disk;
this format does not.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np

MAGIC = b"DATAWA\0\0"
FORMAT_VERSION = 1


def write_arrays(path: str | Path, header: Mapping[str, Any],
                 arrays: Mapping[str, np.ndarray]) -> None:
    names = sorted(arrays)
    blobs = []
    layout = []
    for name in names:
        arr = np.ascontiguousarray(arrays[name])
        dtype = arr.dtype.newbyteorder("<")
        arr = arr.astype(dtype, copy=False)
        layout.append({"name": name, "dtype": dtype.str, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    meta = {"header": dict(header), "arrays": layout}
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(meta_bytes)))
        fh.write(meta_bytes)
        for blob in blobs:
            fh.write(blob)


def read_arrays(path: str | Path) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a datawa binary file")
    version, meta_len = struct.unpack("<II", raw[8:16])
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    meta = json.loads(raw[16:16 + meta_len])
    offset = 16 + meta_len
    arrays = {}
    for spec in meta["arrays"]:
        dtype = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"], dtype=np.int64))
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
        arrays[spec["name"]] = arr.reshape(spec["shape"]).astype(dtype.newbyteorder("="))
        offset += count * dtype.itemsize
    return meta["header"], arrays
