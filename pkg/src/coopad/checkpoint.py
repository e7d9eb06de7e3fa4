"""Binary parameter checkpoints.

Layout (little-endian): magic b"COOP", format version u32, config block
(T, P, H, K, layers as u32, lambda as f64), then one record per tensor:
name length u32, name bytes (utf-8), rows u32, cols u32, rows*cols f64
values in row-major order. Round-trips are bit-exact.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"COOP"
VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(path, config_block, tensors):
    """config_block = (T, P, H, K, layers, lam); tensors = {name: ndarray}."""
    t, p, hdim, k, layers, lam = config_block
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<5I", t, p, hdim, k, layers))
        f.write(struct.pack("<d", float(lam)))
        f.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype="<f8")
            if arr.ndim == 1:
                rows, cols = 1, arr.shape[0]
            elif arr.ndim == 2:
                rows, cols = arr.shape
            else:
                raise CheckpointError(f"tensor {name} has unsupported rank {arr.ndim}")
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<II", rows, cols))
            f.write(arr.tobytes())


def load_checkpoint(path):
    """Returns (config_block, {name: 2-D ndarray})."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise CheckpointError("bad magic, not a checkpoint file")
    off = 4
    (version,) = struct.unpack_from("<I", data, off)
    off += 4
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    t, p, hdim, k, layers = struct.unpack_from("<5I", data, off)
    off += 20
    (lam,) = struct.unpack_from("<d", data, off)
    off += 8
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off:off + nlen].decode("utf-8")
        off += nlen
        rows, cols = struct.unpack_from("<II", data, off)
        off += 8
        n = rows * cols
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(rows, cols)
        off += 8 * n
        tensors[name] = arr.copy()
    if off != len(data):
        raise CheckpointError("trailing bytes after last tensor record")
    return (t, p, hdim, k, layers, lam), tensors
