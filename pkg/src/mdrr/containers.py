"""Binary array container: a JSON header followed by little-endian float64 data.

Layout::

    8 bytes   magic  b"MDRRBIN1"
    8 bytes   header length L (little-endian uint64)
    L bytes   UTF-8 JSON header {"meta": {...}, "arrays": [{"name", "shape", "offset"}]}
    ...       concatenated float64 ('<f8') array payloads, C order

``offset`` counts float64 elements from the start of the payload.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np

MAGIC = b"MDRRBIN1"


def dumps(arrays: Mapping[str, np.ndarray], meta: Mapping[str, Any] | None = None) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        a = np.asarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes(order="C"))
        offset += a.size
    header = json.dumps({"meta": dict(meta or {}), "arrays": entries}, sort_keys=True).encode()
    return MAGIC + struct.pack("<Q", len(header)) + header + b"".join(chunks)


def loads(blob: bytes) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    if blob[:8] != MAGIC:
        raise ValueError("not an MDRR container (bad magic)")
    (hlen,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16 : 16 + hlen].decode())
    payload = np.frombuffer(blob, dtype="<f8", offset=16 + hlen)
    arrays = {}
    for e in header["arrays"]:
        n = int(np.prod(e["shape"], dtype=np.int64))
        if e["offset"] + n > payload.size:
            raise ValueError(f"container truncated in array {e['name']!r}")
        arrays[e["name"]] = payload[e["offset"] : e["offset"] + n].reshape(e["shape"]).astype(np.float64)
    return arrays, header["meta"]


def save(path: str | os.PathLike, arrays: Mapping[str, np.ndarray], meta: Mapping[str, Any] | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps(arrays, meta))
    os.replace(tmp, path)


def load(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    return loads(Path(path).read_bytes())
