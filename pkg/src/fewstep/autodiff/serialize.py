"""Versioned binary weight files.

Layout (all integers little-endian ``uint32``)::

    b"FSWT"                      magic
    version                      currently 1
    n_layers
    per layer: name_len, name (utf-8), ndim, dims...
    payload: every array, in manifest order, as little-endian float64

Hyperparameters go in a JSON sidecar next to the weights (``<path>.json``).
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

MAGIC = b"FSWT"
VERSION = 1


class WeightFormatError(ValueError):
    pass


def save_weights(path, state, hyperparams=None):
    path = Path(path)
    header = [MAGIC, struct.pack("<II", VERSION, len(state))]
    for name, arr in state.items():
        raw = name.encode("utf-8")
        header.append(struct.pack("<I", len(raw)))
        header.append(raw)
        header.append(struct.pack("<I", arr.ndim))
        header.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    payload = [np.ascontiguousarray(a, dtype="<f8").tobytes() for a in state.values()]
    path.write_bytes(b"".join(header + payload))
    if hyperparams is not None:
        sidecar_path(path).write_text(json.dumps(hyperparams, indent=2, sort_keys=True) + "\n")


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def load_weights(path):
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise WeightFormatError(f"{path}: bad magic {buf[:4]!r}")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise WeightFormatError(f"{path}: unsupported version {version}")
    off = 12
    manifest = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", buf, off)
        off += 4
        name = buf[off : off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<I", buf, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", buf, off)
        off += 4 * ndim
        manifest.append((name, shape))
    state = OrderedDict()
    for name, shape in manifest:
        size = int(np.prod(shape, dtype=np.int64))
        end = off + 8 * size
        if end > len(buf):
            raise WeightFormatError(f"{path}: truncated payload at {name}")
        state[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64)
        off = end
    if off != len(buf):
        raise WeightFormatError(f"{path}: {len(buf) - off} trailing bytes")
    return state


def load_hyperparams(path):
    return json.loads(sidecar_path(path).read_text())
