"""On-disk formats: binary PGM (P5) for masks and label maps, and a small
binary tensor container for key maps and feature vectors.

Tensor container layout, all little-endian:

    bytes 0..3   magic "STGT"
    byte  4      format version (currently 1)
    byte  5      rank (number of dimensions, 1..8)
    next 4*rank  uint32 dimensions, outermost first
    rest         float32 payload, row-major (innermost dimension contiguous)
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"STGT"
VERSION = 1
_MAX_RANK = 8


class FormatError(Exception):
    pass


# ---------------------------------------------------------------------------
# PGM (P5)

def write_pgm(path, values: np.ndarray) -> None:
    """Write a 2-D uint8 array as a maxval-255 binary graymap."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise FormatError(f"PGM payload must be 2-D, got shape {values.shape}")
    if values.dtype != np.uint8:
        if values.min() < 0 or values.max() > 255:
            raise FormatError("PGM values must fit in a byte")
        values = values.astype(np.uint8)
    h, w = values.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(values.tobytes())


def _read_header_token(f) -> bytes:
    # Skip whitespace and `#` comment lines, then collect one token.
    tok = b""
    while True:
        ch = f.read(1)
        if ch == b"":
            raise FormatError("truncated PGM header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = f.read(1)
            continue
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def read_pgm(path) -> np.ndarray:
    """Read a binary graymap; only P5 with maxval 255 is accepted."""
    with open(path, "rb") as f:
        magic = f.read(2)
        if magic != b"P5":
            raise FormatError(f"{path}: not a binary PGM (magic {magic!r})")
        try:
            w = int(_read_header_token(f))
            h = int(_read_header_token(f))
            maxval = int(_read_header_token(f))
        except ValueError as e:
            raise FormatError(f"{path}: bad PGM header: {e}") from None
        if w <= 0 or h <= 0:
            raise FormatError(f"{path}: bad PGM dimensions {w}x{h}")
        if maxval != 255:
            raise FormatError(f"{path}: unsupported maxval {maxval} (need 255)")
        payload = f.read(w * h)
        if len(payload) != w * h:
            raise FormatError(f"{path}: truncated PGM payload ({len(payload)} of {w * h} bytes)")
        return np.frombuffer(payload, dtype=np.uint8).reshape(h, w)


def write_mask(path, mask: np.ndarray) -> None:
    """Binary mask to PGM: foreground saves as 255, background as 0."""
    mask = np.asarray(mask, dtype=bool)
    write_pgm(path, mask.astype(np.uint8) * 255)


def read_mask(path) -> np.ndarray:
    """PGM to binary mask: values >= 128 are foreground."""
    return read_pgm(path) >= 128


def write_label_map(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > 255:
        raise FormatError("label ids must fit in a byte")
    write_pgm(path, labels.astype(np.uint8))


def read_label_map(path) -> np.ndarray:
    return read_pgm(path)


# ---------------------------------------------------------------------------
# Tensor container

def write_tensor(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim < 1 or arr.ndim > _MAX_RANK:
        raise FormatError(f"tensor rank {arr.ndim} out of range 1..{_MAX_RANK}")
    if arr.size == 0:
        raise FormatError("zero-length tensor dimension")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<BB", VERSION, arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(np.ascontiguousarray(arr).tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        head = f.read(6)
        if len(head) < 6 or head[:4] != MAGIC:
            raise FormatError(f"{path}: not a tensor file (magic {head[:4]!r})")
        version, rank = head[4], head[5]
        if version != VERSION:
            raise FormatError(f"{path}: unsupported tensor format version {version}")
        if rank < 1 or rank > _MAX_RANK:
            raise FormatError(f"{path}: tensor rank {rank} out of range 1..{_MAX_RANK}")
        dim_bytes = f.read(4 * rank)
        if len(dim_bytes) != 4 * rank:
            raise FormatError(f"{path}: truncated tensor dimension list")
        dims = struct.unpack(f"<{rank}I", dim_bytes)
        count = 1
        for d in dims:
            if d == 0:
                raise FormatError(f"{path}: zero-length tensor dimension")
            count *= d
        payload = f.read(4 * count)
        if len(payload) != 4 * count:
            raise FormatError(f"{path}: truncated tensor payload ({len(payload)} of {4 * count} bytes)")
        extra = f.read(1)
        if extra:
            raise FormatError(f"{path}: trailing bytes after tensor payload")
        return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
