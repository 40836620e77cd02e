"""
Binary array containers
=======================

One file format for checkpoints, corpus feature files and cached teacher logits:

    MAGIC (4 bytes) | header length (uint32, little-endian) | header (UTF-8 JSON)
    | raw little-endian float64 arrays, in header order

The header carries `format_version`, a `kind` tag, free-form `meta` (structured
config text for checkpoints) and the name and shape of every array. Readers reject
unknown format versions.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from .errors import CheckpointFormatError

MAGIC = b"PHAL"
FORMAT_VERSION = 1
_DTYPE = np.dtype("<f8")

PathLike = Union[str, Path]


def write_arrays(path: PathLike, arrays: Dict[str, np.ndarray], kind: str,
                 meta: Optional[Dict[str, Any]] = None):
    """
    Write named float64 arrays to `path`.

    Args:
        path: Destination file; parent directories are created.
        arrays: Name -> array, written in insertion order.
        kind (str): Container kind, checked by `read_arrays`.
        meta (dict, optional): JSON-serializable metadata stored in the header.
    """
    header = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "meta": meta or {},
        "arrays": [{"name": name, "shape": list(np.shape(a))} for name, a in arrays.items()],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for a in arrays.values():
            f.write(np.ascontiguousarray(a, dtype=_DTYPE).tobytes())
    logging.debug(f"Phonalign: wrote {len(arrays)} arrays ({kind}) to {path}")


def read_arrays(path: PathLike, kind: Optional[str] = None) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """
    Read a container written by `write_arrays`.

    Returns:
        (meta, arrays): The header metadata and the named arrays (float64, native order).

    Raises:
        CheckpointFormatError: Bad magic, unknown format version, wrong kind or truncated data.
    """
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointFormatError(f"{path}: not a phonalign array file")
    (header_len,) = struct.unpack("<I", data[4:8])
    try:
        header = json.loads(data[8:8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"{path}: unreadable header: {e}") from e
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(
            f"{path}: unknown format_version {version!r} (supported: {FORMAT_VERSION})")
    if kind is not None and header.get("kind") != kind:
        raise CheckpointFormatError(f"{path}: expected a {kind!r} file, found {header.get('kind')!r}")

    arrays: Dict[str, np.ndarray] = {}
    offset = 8 + header_len
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + count * _DTYPE.itemsize
        if end > len(data):
            raise CheckpointFormatError(f"{path}: truncated while reading {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(data[offset:end], dtype=_DTYPE).astype(np.float64).reshape(shape)
        offset = end
    return header.get("meta", {}), arrays
