"""Writer/reader for the CMLT binary tensor container.

Implements the interchange format independently so the exporter has no
code dependency on its consumers. Layout (integers little-endian):

    magic   4 bytes  b"CMLT"
    version u16      currently 1
    dtype   u8       0 = float32, 1 = float64
    rank    u8
    shape   rank x u32
    mlen    u32      length of UTF-8 JSON metadata blob
    meta    mlen bytes
    payload row-major little-endian values
    crc     u32      CRC32 of everything before it
"""

from __future__ import annotations

import json
import os
import struct
import zlib

import numpy as np

MAGIC = b"CMLT"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class CorruptFile(Exception):
    pass


def write_tensor(path, array: np.ndarray, metadata: dict | None = None) -> None:
    """Atomic write (temp + rename) of one tensor with optional metadata."""
    array = np.asarray(array, order="C")
    code = _DTYPE_CODES.get(array.dtype)
    if code is None:
        array = array.astype(np.float32)
        code = 0
    meta = json.dumps(metadata or {}, sort_keys=True).encode()
    blob = bytearray()
    blob += MAGIC
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
    if len(blob) < 16 or blob[:4] != MAGIC:
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
