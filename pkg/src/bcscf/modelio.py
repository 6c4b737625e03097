"""Binary model files.

Layout (all integers and reals little-endian)::

    8 bytes   magic b"BCSCFMDL"
    1 byte    format version (1)
    4 bytes   uint32 header length H
    H bytes   UTF-8 JSON header: M, N, rank, mu_g, delta, solver config,
              has_ids
    M   f8    user biases
    N   f8    item biases
    M*k f8    U, row-major
    k*N f8    V, row-major
    M   u1    warm user flags
    N   u1    warm item flags
    M   i8    original user ids   (only if has_ids)
    N   i8    original item ids   (only if has_ids)
"""

import json
import struct

import numpy as np

from .baseline import BaselineModel
from .errors import ModelFormatError
from .solver import FactorModel, SolverConfig

MAGIC = b"BCSCFMDL"
VERSION = 1


def save_model(model: FactorModel, path):
    M, N = model.shape
    k = model.U.shape[1]
    has_ids = model.user_ids is not None and model.item_ids is not None
    header = {
        "M": M, "N": N, "rank": k,
        "mu_g": model.baseline.mu_g,
        "delta": model.baseline.delta,
        "config": model.config.to_dict(),
        "has_ids": has_ids,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [
        MAGIC, bytes([VERSION]), struct.pack("<I", len(hbytes)), hbytes,
        np.ascontiguousarray(model.baseline.b_user, dtype="<f8").tobytes(),
        np.ascontiguousarray(model.baseline.b_item, dtype="<f8").tobytes(),
        np.ascontiguousarray(model.U, dtype="<f8").tobytes(),
        np.ascontiguousarray(model.V, dtype="<f8").tobytes(),
        np.asarray(model.warm_users, dtype="u1").tobytes(),
        np.asarray(model.warm_items, dtype="u1").tobytes(),
    ]
    if has_ids:
        parts.append(np.asarray(model.user_ids, dtype="<i8").tobytes())
        parts.append(np.asarray(model.item_ids, dtype="<i8").tobytes())
    with open(path, "wb") as fh:
        for p in parts:
            fh.write(p)


def load_model(path) -> FactorModel:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:len(MAGIC)] != MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic)")
    pos = len(MAGIC)
    if len(buf) < pos + 5:
        raise ModelFormatError(f"{path}: truncated header")
    version = buf[pos]
    if version != VERSION:
        raise ModelFormatError(f"{path}: unsupported model version {version}")
    (hlen,) = struct.unpack_from("<I", buf, pos + 1)
    pos += 5
    try:
        header = json.loads(buf[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: corrupt header") from exc
    pos += hlen
    M, N, k = header["M"], header["N"], header["rank"]

    def take(count, dtype):
        nonlocal pos
        nbytes = count * np.dtype(dtype).itemsize
        if pos + nbytes > len(buf):
            raise ModelFormatError(f"{path}: truncated data")
        arr = np.frombuffer(buf, dtype=dtype, count=count, offset=pos).copy()
        pos += nbytes
        return arr

    b_user = take(M, "<f8").astype(np.float64)
    b_item = take(N, "<f8").astype(np.float64)
    U = take(M * k, "<f8").astype(np.float64).reshape(M, k)
    V = take(k * N, "<f8").astype(np.float64).reshape(k, N)
    warm_users = take(M, "u1").astype(bool)
    warm_items = take(N, "u1").astype(bool)
    user_ids = item_ids = None
    if header["has_ids"]:
        user_ids = take(M, "<i8").astype(np.int64)
        item_ids = take(N, "<i8").astype(np.int64)
    if pos != len(buf):
        raise ModelFormatError(f"{path}: {len(buf) - pos} trailing bytes")
    bl = BaselineModel(header["mu_g"], b_user, b_item, header["delta"])
    return FactorModel(U, V, bl, SolverConfig.from_dict(header["config"]),
                       user_ids=user_ids, item_ids=item_ids,
                       warm_users=warm_users, warm_items=warm_items)
