"""Binary checkpoint container: JSON header + raw little-endian float data."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import ModelDims, ModelParams, param_shapes

MAGIC = b"MMTC"
FORMAT_VERSION = 1

_DTYPES = {"<f8": np.dtype("<f8"), "<f4": np.dtype("<f4")}


def save_params(params: ModelParams, path: str | Path) -> None:
    """Write magic, header length, JSON header, then the parameter blobs."""
    entries = []
    offset = 0
    blobs = []
    for name, arr in params.arrays.items():
        dtype = "<f8" if arr.dtype == np.float64 else "<f4"
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dtype, "offset": offset})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "format_version": FORMAT_VERSION,
        "dims": {
            "src_vocab": params.dims.src_vocab,
            "trg_vocab": params.dims.trg_vocab,
            "d_emb": params.dims.d_emb,
            "d_state": params.dims.d_state,
            "d_att": params.dims.d_att,
        },
        "params": entries,
    }
    head = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for raw in blobs:
            fh.write(raw)


def load_params(path: str | Path, dims: ModelDims | None = None) -> ModelParams:
    """Read a checkpoint; every shape is validated against the model dims."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (head_len,) = struct.unpack("<Q", raw[4:12])
    try:
        header = json.loads(raw[12 : 12 + head_len].decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError("unreadable checkpoint header: %s" % exc) from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError("unsupported checkpoint format version %r" % header.get("format_version"))
    file_dims = ModelDims(**header["dims"])
    if dims is not None and dims != file_dims:
        raise CheckpointError("checkpoint dims %s do not match configured dims %s" % (file_dims, dims))
    expected = param_shapes(file_dims)
    data = raw[12 + head_len :]
    arrays: dict[str, np.ndarray] = {}
    for entry in header["params"]:
        name = entry["name"]
        if name not in expected:
            raise CheckpointError("unexpected parameter %r in checkpoint" % name)
        shape = tuple(entry["shape"])
        if shape != expected[name]:
            raise CheckpointError("parameter %s has shape %s, expected %s" % (name, shape, expected[name]))
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise CheckpointError("unsupported dtype %r" % entry["dtype"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        stop = start + count * dtype.itemsize
        if stop > len(data):
            raise CheckpointError("checkpoint data truncated for %s" % name)
        arrays[name] = np.frombuffer(data[start:stop], dtype=dtype).reshape(shape).astype(np.float64)
    missing = set(expected) - set(arrays)
    if missing:
        raise CheckpointError("checkpoint missing parameters: %s" % sorted(missing))
    params = ModelParams(arrays, file_dims)
    params.validate()
    return params
