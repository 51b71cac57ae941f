"""Bit packing of {-1,+1} code matrices and the code file formats.

Packed layout: ``ceil(c/8)`` bytes per row, most significant bit first,
bit set exactly when the code entry is +1. Binary files carry the header
``DSAHCODE`` followed by little-endian u32 ``n`` and ``c``.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

CODES_MAGIC = b"DSAHCODE"


def as_codes(codes) -> np.ndarray:
    codes = np.asarray(codes)
    if codes.ndim == 1:
        codes = codes.reshape(1, -1)
    if codes.ndim != 2:
        raise DataError(f"code matrix must be 2-d, got shape {codes.shape}")
    if not np.all((codes == 1) | (codes == -1)):
        raise DataError("code entries must be -1 or +1")
    return codes.astype(np.int8)


def pack_codes(codes) -> np.ndarray:
    """``n x c`` matrix over {-1,+1} -> ``n x ceil(c/8)`` uint8."""
    codes = as_codes(codes)
    return np.packbits(codes > 0, axis=1, bitorder="big")


def unpack_codes(packed, c: int) -> np.ndarray:
    bits = np.unpackbits(np.asarray(packed, dtype=np.uint8), axis=1, count=c, bitorder="big")
    return np.where(bits == 1, 1, -1).astype(np.int8)


def write_codes(path, codes, packed: bool = False) -> None:
    codes = as_codes(codes)
    if packed:
        n, c = codes.shape
        with open(path, "wb") as fh:
            fh.write(CODES_MAGIC + struct.pack("<II", n, c))
            fh.write(pack_codes(codes).tobytes())
        return
    with open(path, "w") as fh:
        for row in codes:
            fh.write(" ".join("1" if v > 0 else "-1" for v in row) + "\n")


def read_codes(path) -> np.ndarray:
    """Read either code format; the binary one is recognised by its magic."""
    raw = Path(path).read_bytes()
    if raw[:8] == CODES_MAGIC:
        if len(raw) < 16:
            raise DataError(f"{path}: truncated code header")
        n, c = struct.unpack("<II", raw[8:16])
        width = (c + 7) // 8
        body = raw[16:]
        if len(body) != n * width:
            raise DataError(f"{path}: expected {n * width} code bytes, found {len(body)}")
        packed = np.frombuffer(body, dtype=np.uint8).reshape(n, width)
        return unpack_codes(packed, c)
    rows = []
    for lineno, line in enumerate(raw.decode().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([int(tok) for tok in line.split()])
        except ValueError:
            raise DataError(f"{path}:{lineno}: malformed code row") from None
        if len(rows[-1]) != len(rows[0]):
            raise DataError(f"{path}:{lineno}: code length {len(rows[-1])} != {len(rows[0])}")
    if not rows:
        raise DataError(f"{path}: no codes")
    return as_codes(np.array(rows))
