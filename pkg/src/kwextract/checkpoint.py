"""
Parameter checkpoint container.

Layout::

    b"KWXCKPT\\n"                  magic
    uint64 little-endian           header length in bytes
    header (UTF-8 JSON)            {"format_version", "meta", "params": [{name, shape, offset, nbytes}]}
    payload                        concatenated little-endian float64 arrays

Output is byte-for-byte deterministic for identical inputs.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"KWXCKPT\n"
FORMAT_VERSION = 1


def save_checkpoint(path, params, meta=None):
    """Write ``params`` (name -> array or Tensor) and a JSON-serializable ``meta`` dict."""
    entries = []
    blobs = []
    offset = 0
    for name, value in params.items():
        arr = np.ascontiguousarray(getattr(value, "data", value), dtype="<f8")
        blob = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "meta": meta or {}, "params": entries},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)
    return path


def load_checkpoint(path):
    """Return ``(params, meta)``; params preserve the saved order."""
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise FormatError(f"{path}: not a kwextract checkpoint")
    pos = len(MAGIC)
    (hlen,) = struct.unpack_from("<Q", raw, pos)
    pos += 8
    header = json.loads(raw[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint format version {version}")
    params = {}
    for entry in header["params"]:
        start = pos + entry["offset"]
        chunk = raw[start:start + entry["nbytes"]]
        if len(chunk) != entry["nbytes"]:
            raise FormatError(f"{path}: truncated payload for {entry['name']}")
        arr = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(entry["shape"])
        params[entry["name"]] = arr
    return params, header["meta"]
