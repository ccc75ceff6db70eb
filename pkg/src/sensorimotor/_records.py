"""
Deterministic binary framing shared by the manifold-set and distance-matrix
files:

    magic (8 bytes) | header length (<u4) | canonical JSON header | arrays

The header lists every array's name, dtype and shape in storage order plus
free metadata. Arrays are stored little-endian and C-contiguous.
"""

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ArtifactError
from .utils import canonical_json

_LENGTH = struct.Struct("<I")


def write_record(
    path: Path | str,
    magic: bytes,
    meta: dict[str, Any],
    arrays: dict[str, np.ndarray],
) -> Path:
    if len(magic) != 8:
        raise ValueError("magic must be 8 bytes")
    layout = []
    blobs = []
    for name, array in arrays.items():
        array = np.ascontiguousarray(array)
        dtype = array.dtype.newbyteorder("<")
        layout.append({"name": name, "dtype": dtype.str, "shape": list(array.shape)})
        blobs.append(array.astype(dtype, copy=False).tobytes(order="C"))
    header = canonical_json({"meta": meta, "arrays": layout}).encode("utf-8")
    path = Path(path)
    with open(path, "wb") as fd:
        fd.write(magic)
        fd.write(_LENGTH.pack(len(header)))
        fd.write(header)
        for blob in blobs:
            fd.write(blob)
    return path


def read_record(path: Path | str, magic: bytes) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"missing artifact: {path}")
    data = path.read_bytes()
    if data[:8] != magic:
        raise ArtifactError(f"{path}: not a {magic.decode(errors='replace')!r} record")
    try:
        (length,) = _LENGTH.unpack_from(data, 8)
        header = json.loads(data[12 : 12 + length].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ArtifactError(f"{path}: corrupt header ({e})") from e
    offset = 12 + length
    arrays = {}
    for item in header["arrays"]:
        dtype = np.dtype(item["dtype"])
        shape = tuple(item["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(data):
            raise ArtifactError(f"{path}: truncated array {item['name']!r}")
        arrays[item["name"]] = (
            np.frombuffer(data, dtype=dtype, count=count, offset=offset)
            .reshape(shape)
            .astype(dtype.newbyteorder("="))
        )
        offset += nbytes
    return header["meta"], arrays
