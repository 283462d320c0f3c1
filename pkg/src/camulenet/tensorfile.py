"""Binary tensor container and the named-parameter checkpoint format.

Tensor file layout (all integers little-endian):

    magic   4 bytes  b"CMLT"
    version u16      currently 1
    dtype   u8       0 = float32, 1 = float64
    rank    u8
    shape   rank x u32
    mlen    u32      length of UTF-8 JSON metadata blob
    meta    mlen bytes (clip_id, source_tag, free-form keys)
    payload row-major little-endian values
    crc     u32      CRC32 of everything before it

Checkpoint layout:

    magic   4 bytes  b"CMCK"
    version u16
    hlen    u32      JSON header length
    header  {"params": [{"name", "shape"}...], "extra": {...}} ordered
    payload concatenated float32 little-endian buffers, header order
    crc     u32      CRC32 of everything before it
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from typing import Optional

import numpy as np

from .errors import CorruptFile, ManifestMismatch, ShapeError

MAGIC_TENSOR = b"CMLT"
MAGIC_CHECKPOINT = b"CMCK"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


def write_tensor(path, array: np.ndarray, metadata: Optional[dict] = None) -> None:
    """Atomic write (temp + rename) of one tensor with optional metadata."""
    array = np.asarray(array, order="C")
    code = _DTYPE_CODES.get(array.dtype)
    if code is None:
        array = array.astype(np.float32)
        code = 0
    meta = json.dumps(metadata or {}, sort_keys=True).encode()
    blob = bytearray()
    blob += MAGIC_TENSOR
    blob += struct.pack("<HBB", VERSION, code, array.ndim)
    blob += struct.pack(f"<{array.ndim}I", *array.shape)
    blob += struct.pack("<I", len(meta))
    blob += meta
    blob += array.astype(_DTYPES[code], copy=False).tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def read_tensor(path) -> tuple[np.ndarray, dict]:
    """Read and CRC-validate one tensor file; returns (array, metadata)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != MAGIC_TENSOR:
        raise CorruptFile(f"{path}: not a tensor file")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CorruptFile(f"{path}: CRC mismatch")
    version, code, rank = struct.unpack("<HBB", blob[4:8])
    if version != VERSION:
        raise CorruptFile(f"{path}: unsupported version {version}")
    if code not in _DTYPES:
        raise CorruptFile(f"{path}: unknown dtype code {code}")
    off = 8
    shape = struct.unpack(f"<{rank}I", blob[off:off + 4 * rank])
    off += 4 * rank
    mlen = struct.unpack("<I", blob[off:off + 4])[0]
    off += 4
    meta = json.loads(blob[off:off + mlen].decode()) if mlen else {}
    off += mlen
    dtype = _DTYPES[code]
    expected = int(np.prod(shape)) * dtype.itemsize
    payload = blob[off:-4]
    if len(payload) != expected:
        raise CorruptFile(f"{path}: payload length {len(payload)} != expected {expected}")
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy(), meta


def read_embedding(path, expected_clip_id: Optional[str] = None) -> tuple[np.ndarray, dict]:
    """Read a rank-2 (frames x width) embedding, checking clip identity."""
    array, meta = read_tensor(path)
    if array.ndim != 2:
        raise ShapeError(f"{path}: expected rank-2 embedding, got rank {array.ndim}")
    if expected_clip_id is not None and meta.get("clip_id") != expected_clip_id:
        raise ManifestMismatch(
            f"{path}: clip_id {meta.get('clip_id')!r} != expected {expected_clip_id!r}")
    return array, meta


def save_checkpoint(path, params: dict[str, np.ndarray], extra: Optional[dict] = None) -> None:
    names = sorted(params)
    header = json.dumps(
        {"params": [{"name": n, "shape": list(params[n].shape)} for n in names],
         "extra": extra or {}},
        sort_keys=True).encode()
    blob = bytearray()
    blob += MAGIC_CHECKPOINT
    blob += struct.pack("<HI", VERSION, len(header))
    blob += header
    for n in names:
        blob += np.ascontiguousarray(params[n], dtype="<f4").tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 14 or blob[:4] != MAGIC_CHECKPOINT:
        raise CorruptFile(f"{path}: not a checkpoint file")
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != struct.unpack("<I", blob[-4:])[0]:
        raise CorruptFile(f"{path}: CRC mismatch")
    version, hlen = struct.unpack("<HI", blob[4:10])
    if version != VERSION:
        raise CorruptFile(f"{path}: unsupported version {version}")
    header = json.loads(blob[10:10 + hlen].decode())
    off = 10 + hlen
    params = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape)) * 4
        params[entry["name"]] = np.frombuffer(
            blob[off:off + nbytes], dtype="<f4").reshape(shape).copy()
        off += nbytes
    if off != len(blob) - 4:
        raise CorruptFile(f"{path}: payload size inconsistent with header")
    return params, header.get("extra", {})
