"""Versioned weight checkpoints.

Layout::

    b"SACK"  u32 version  u32 header_len  header (UTF-8 JSON)  payload

The header carries the architecture id, its config, the ordered tensor list
(name, shape) and a SHA-256 digest of that list. The payload is every
tensor as little-endian float32, in header order.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import CheckpointMismatch

MAGIC = b"SACK"
VERSION = 1


def layout_digest(arch: str, layout) -> str:
    text = arch + "|" + ";".join(f"{name}:{'x'.join(map(str, shape))}" for name, shape in layout)
    return hashlib.sha256(text.encode()).hexdigest()


def save_checkpoint(model, path: Union[str, Path], extra: dict = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = model.state_dict()
    layout = [(name, list(arr.shape)) for name, arr in state.items()]
    header = {
        "arch": model.arch,
        "config": model.config_dict(),
        "tensors": [{"name": n, "shape": s} for n, s in layout],
        "digest": layout_digest(model.arch, layout),
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with path.open("wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(blob)) + blob)
        for arr in state.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return path


def read_header(path: Union[str, Path]):
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointMismatch(f"{path}: not a checkpoint")
    version, n = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise CheckpointMismatch(f"{path}: unsupported checkpoint version {version}")
    return json.loads(data[12 : 12 + n]), data[12 + n :]


def load_checkpoint(path: Union[str, Path], dtype=np.float32, model=None):
    """Rebuild the model named in the header and load its weights.

    If ``model`` is given it is filled instead, after checking that its
    tensor layout matches the stored digest.
    """
    from ..models import build_model

    header, payload = read_header(path)
    if model is None:
        model = build_model(header["arch"], header["config"], dtype=dtype)
    state = model.state_dict()
    layout = [(name, list(arr.shape)) for name, arr in state.items()]
    if model.arch != header["arch"] or layout_digest(model.arch, layout) != header["digest"]:
        raise CheckpointMismatch(f"{path}: weights do not match the {model.arch} layout")
    expected = 4 * sum(int(np.prod(t["shape"], dtype=np.int64)) for t in header["tensors"])
    if expected != len(payload):
        raise CheckpointMismatch(f"{path}: payload size {len(payload)} != expected {expected}")
    offset = 0
    loaded = {}
    for item in header["tensors"]:
        count = int(np.prod(item["shape"], dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        loaded[item["name"]] = arr.reshape(item["shape"]).astype(model.dtype)
        offset += 4 * count
    model.load_state_dict(loaded)
    return model, header
