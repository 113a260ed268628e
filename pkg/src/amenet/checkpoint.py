"""Versioned named-array checkpoint container.

Layout: an 8-byte magic, an 8-byte big-endian header length, a JSON header
(format version, the config used, and per-array name/dtype/shape/offset),
then the raw little-endian array bytes back to back.  The encoding embeds
no timestamps, so identical params + config give identical files.
"""

from __future__ import annotations

import json

import numpy as np

FORMAT_VERSION = 1
_MAGIC = b"AMECKPT1"


def _as_array(value) -> np.ndarray:
    if hasattr(value, "detach"):
        value = value.detach().cpu().numpy()
    arr = np.ascontiguousarray(value)
    return arr.astype(arr.dtype.newbyteorder("<")) if arr.dtype.byteorder == ">" else arr


def save_checkpoint(path, params: dict, config: dict) -> None:
    """Write named parameter arrays with the config that produced them."""
    arrays = {name: _as_array(value) for name, value in params.items()}
    entries = []
    offset = 0
    for name in arrays:
        arr = arrays[name]
        entries.append(
            {
                "name": name,
                "dtype": arr.dtype.str,
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": arr.nbytes,
            }
        )
        offset += arr.nbytes
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "config": config, "arrays": entries},
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(header).to_bytes(8, "big"))
        fh.write(header)
        for name in arrays:
            fh.write(arrays[name].tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read back (params, config), verifying magic, version, and sizes."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint (bad magic {magic!r})")
        header_len = int.from_bytes(fh.read(8), "big")
        header = json.loads(fh.read(header_len).decode())
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(
                f"{path}: unsupported checkpoint version {header.get('format_version')}"
            )
        blob = fh.read()
    params: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        lo, hi = entry["offset"], entry["offset"] + entry["nbytes"]
        if hi > len(blob):
            raise ValueError(f"{path}: truncated checkpoint at {entry['name']!r}")
        arr = np.frombuffer(blob[lo:hi], dtype=np.dtype(entry["dtype"]))
        params[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return params, header["config"]
