"""Model checkpoint file: JSON manifest line + little-endian f32 payload."""

from __future__ import annotations

import json

import numpy as np

from ..io import FormatError
from .tensor import Tensor

FORMAT_NAME = "holterbeat-checkpoint"
FORMAT_VERSION = 1


def save_checkpoint(path, kind: str, config: dict, params: dict,
                    extra: dict | None = None) -> None:
    """Write named parameters (insertion order preserved) as float32."""
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "kind": kind,
        "config": config,
        "extra": extra or {},
        "params": [{"name": name, "shape": list(t.data.shape)}
                   for name, t in params.items()],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(manifest, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for t in params.values():
            fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Return (manifest dict, params dict name -> Tensor float64)."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        manifest = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable checkpoint manifest: {exc}") from exc
    if manifest.get("format") != FORMAT_NAME:
        raise FormatError(f"{path}: not a {FORMAT_NAME} file")
    if manifest.get("version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {manifest.get('version')}")
    params = {}
    offset = 0
    for spec in manifest["params"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = 4 * count
        chunk = payload[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise FormatError(f"{path}: checkpoint payload truncated at {spec['name']}")
        arr = np.frombuffer(chunk, dtype="<f4").reshape(shape).astype(np.float64)
        params[spec["name"]] = Tensor(arr, requires_grad=True)
        offset += nbytes
    if offset != len(payload):
        raise FormatError(f"{path}: {len(payload) - offset} trailing bytes in payload")
    return manifest, params
