#!/usr/bin/env python3
"""
Checkpoint Module

Binary parameter snapshots in the LGCV1 format:

    b"LGCV1"
    per parameter, in store order:
        u32 LE   name length in bytes
        bytes    UTF-8 name
        4 x u32 LE shape dims
        float32 LE values, row-major

The loader walks the records and rejects files whose length does not match
the sum of the record sizes exactly. Input normalization statistics travel
beside a checkpoint in a small YAML sidecar.
"""

import logging
import os
import struct
import tempfile
from collections import OrderedDict
from typing import Dict, Optional

import numpy as np
import yaml

from .data import Normalization
from .errors import CheckpointError
from .tensor import ParamStore

logger = logging.getLogger(__name__)

MAGIC = b"LGCV1"
_U32 = struct.Struct("<I")
_SHAPE = struct.Struct("<4I")
_FLOAT = np.dtype("<f4")


def _to_4d(shape) -> tuple:
    if len(shape) > 4:
        raise CheckpointError(f"cannot store rank-{len(shape)} parameter")
    return (1,) * (4 - len(shape)) + tuple(shape)


def encode_checkpoint(params: ParamStore) -> bytes:
    """Serialize every parameter of the store."""
    chunks = [MAGIC]
    for name, param in params.items():
        encoded = name.encode("utf-8")
        chunks.append(_U32.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_SHAPE.pack(*_to_4d(param.shape)))
        chunks.append(np.ascontiguousarray(param.data, dtype=_FLOAT).tobytes())
    return b"".join(chunks)


def decode_checkpoint(blob: bytes) -> "OrderedDict[str, np.ndarray]":
    """Parse LGCV1 bytes into an ordered name -> float32 array mapping."""
    if not blob.startswith(MAGIC):
        raise CheckpointError("not an LGCV1 checkpoint (bad magic)")

    state: "OrderedDict[str, np.ndarray]" = OrderedDict()
    offset = len(MAGIC)
    total = len(blob)
    while offset < total:
        if offset + _U32.size > total:
            raise CheckpointError(f"truncated record header at byte {offset}")
        (name_len,) = _U32.unpack_from(blob, offset)
        offset += _U32.size

        if offset + name_len + _SHAPE.size > total:
            raise CheckpointError(f"truncated record name/shape at byte {offset}")
        try:
            name = blob[offset:offset + name_len].decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError(f"parameter name at byte {offset} is not UTF-8") from e
        offset += name_len
        shape = _SHAPE.unpack_from(blob, offset)
        offset += _SHAPE.size

        count = int(np.prod(shape))
        nbytes = count * _FLOAT.itemsize
        if offset + nbytes > total:
            raise CheckpointError(
                f"parameter '{name}' needs {nbytes} bytes, only {total - offset} left"
            )
        values = np.frombuffer(blob, dtype=_FLOAT, count=count, offset=offset)
        state[name] = values.reshape(shape).astype(np.float32)
        offset += nbytes

    return state


def save_checkpoint(params: ParamStore, path: str) -> str:
    """Write the store to path atomically; the previous file survives a failed write."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    blob = encode_checkpoint(params)

    fd, tmp_path = tempfile.mkstemp(prefix=".ckpt-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp_path, path)
    except OSError:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
    logger.debug("wrote %d parameters (%d bytes) to %s", len(params), len(blob), path)
    return path


def load_checkpoint(path: str) -> "OrderedDict[str, np.ndarray]":
    """Read an LGCV1 file into a name -> array mapping."""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except FileNotFoundError as e:
        raise CheckpointError(f"checkpoint not found: {path}") from e
    return decode_checkpoint(blob)


def restore_into(params: ParamStore, path: str) -> ParamStore:
    """Load a checkpoint into an existing store, checking names and shapes."""
    state = load_checkpoint(path)
    expected = params.names()
    if list(state) != expected:
        missing = sorted(set(expected) - set(state))
        extra = sorted(set(state) - set(expected))
        raise CheckpointError(
            f"checkpoint {path} does not match the model (missing: {missing}, unexpected: {extra})"
        )

    converted: Dict[str, np.ndarray] = {}
    for name, param in params.items():
        value = state[name]
        if value.shape != _to_4d(param.shape):
            raise CheckpointError(
                f"parameter '{name}' has shape {param.shape} in the model, {value.shape} on disk"
            )
        converted[name] = value.reshape(param.shape)
    params.load_state(converted)
    return params


def normalization_path(checkpoint_path: str) -> str:
    """Sidecar holding the input statistics a checkpoint was trained with."""
    return f"{os.path.splitext(checkpoint_path)[0]}.norm.yaml"


def save_normalization(stats: Normalization, checkpoint_path: str) -> str:
    path = normalization_path(checkpoint_path)
    with open(path, "w") as f:
        yaml.safe_dump({"mean": [float(m) for m in stats.mean], "std": [float(s) for s in stats.std]},
                       f, sort_keys=False)
    return path


def load_normalization(checkpoint_path: str) -> Optional[Normalization]:
    """Statistics saved beside checkpoint_path, or None when there is no sidecar."""
    path = normalization_path(checkpoint_path)
    if not os.path.isfile(path):
        return None
    try:
        with open(path, "r") as f:
            document = yaml.safe_load(f)
        mean = np.asarray(document["mean"], dtype=np.float64)
        std = np.asarray(document["std"], dtype=np.float64)
    except (yaml.YAMLError, KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"unreadable normalization file {path}: {e}") from e
    if mean.shape != std.shape or mean.ndim != 1:
        raise CheckpointError(f"normalization file {path} has mismatched mean/std")
    return Normalization(mean=mean, std=std)
