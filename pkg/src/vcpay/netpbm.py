"""Netpbm codecs: PBM (P1/P4) for binary images, PGM (P2/P5) for grayscale.

Writers always emit the binary variants (P4/P5) with the canonical header
``<magic>\\n<width> <height>\\n`` so that encode/decode round-trips are
byte-exact. Readers accept both the ASCII and binary variants, comments
included.

Pixel conventions follow the formats: PBM stores 1 for black and 0 for
white, PGM stores 8-bit luminance.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

_WHITESPACE = b" \t\n\r\x0b\x0c"


def _tokens(data: bytes, count: int, start: int) -> tuple[list[int], int]:
    """Read `count` ASCII integer tokens, skipping whitespace and # comments."""
    out: list[int] = []
    i = start
    n = len(data)
    while len(out) < count:
        while i < n and data[i : i + 1] in (b"#",) + tuple(
            bytes([c]) for c in _WHITESPACE
        ):
            if data[i : i + 1] == b"#":
                j = data.find(b"\n", i)
                i = n if j < 0 else j + 1
            else:
                i += 1
        j = i
        while j < n and data[j : j + 1] not in tuple(bytes([c]) for c in _WHITESPACE):
            j += 1
        if j == i:
            raise ValidationError("truncated netpbm header")
        try:
            out.append(int(data[i:j]))
        except ValueError as exc:
            raise ValidationError(f"bad netpbm header token {data[i:j]!r}") from exc
        i = j
    return out, i


def write_pbm(pixels: np.ndarray) -> bytes:
    """Encode a 2D {0,1} array as binary PBM (P4), rows padded to byte edges."""
    arr = np.ascontiguousarray(pixels, dtype=np.uint8)
    if arr.ndim != 2:
        raise ValidationError("PBM payload must be a 2D array")
    height, width = arr.shape
    header = f"P4\n{width} {height}\n".encode("ascii")
    packed = np.packbits(arr, axis=1)
    return header + packed.tobytes()


def read_pbm(data: bytes) -> np.ndarray:
    """Decode PBM bytes (P4 or P1) to a uint8 {0,1} array of shape (h, w)."""
    magic = data[:2]
    if magic == b"P4":
        (width, height), pos = _tokens(data, 2, 2)
        _check_dims(width, height)
        pos += 1  # single whitespace byte separates header from raster
        row_bytes = (width + 7) // 8
        raster = data[pos : pos + row_bytes * height]
        if len(raster) != row_bytes * height:
            raise ValidationError("PBM raster shorter than header promises")
        rows = np.frombuffer(raster, dtype=np.uint8).reshape(height, row_bytes)
        return np.unpackbits(rows, axis=1)[:, :width].copy()
    if magic == b"P1":
        (width, height), pos = _tokens(data, 2, 2)
        _check_dims(width, height)
        bits = _p1_bits(data, pos, width * height)
        return np.array(bits, dtype=np.uint8).reshape(height, width)
    raise ValidationError(f"not a PBM file (magic {magic!r})")


def _p1_bits(data: bytes, start: int, count: int) -> list[int]:
    """P1 raster: digits need no separators; comments and whitespace skipped."""
    bits: list[int] = []
    i = start
    n = len(data)
    while i < n and len(bits) < count:
        byte = data[i : i + 1]
        if byte == b"#":
            j = data.find(b"\n", i)
            i = n if j < 0 else j + 1
        elif byte in (b"0", b"1"):
            bits.append(byte == b"1")
            i += 1
        elif byte in tuple(bytes([c]) for c in _WHITESPACE):
            i += 1
        else:
            raise ValidationError(f"unexpected byte {byte!r} in P1 raster")
    if len(bits) < count:
        raise ValidationError("P1 raster shorter than header promises")
    return [int(b) for b in bits]


def write_pgm(samples: np.ndarray) -> bytes:
    """Encode a 2D uint8 array as binary PGM (P5), maxval 255."""
    arr = np.ascontiguousarray(samples, dtype=np.uint8)
    if arr.ndim != 2:
        raise ValidationError("PGM payload must be a 2D array")
    height, width = arr.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    return header + arr.tobytes()


def read_pgm(data: bytes) -> np.ndarray:
    """Decode PGM bytes (P5 or P2) to a uint8 array of shape (h, w)."""
    magic = data[:2]
    if magic == b"P5":
        (width, height, maxval), pos = _tokens(data, 3, 2)
        _check_dims(width, height)
        if not 0 < maxval < 256:
            raise ValidationError(f"unsupported PGM maxval {maxval}")
        pos += 1
        raster = data[pos : pos + width * height]
        if len(raster) != width * height:
            raise ValidationError("PGM raster shorter than header promises")
        return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()
    if magic == b"P2":
        (width, height, maxval), pos = _tokens(data, 3, 2)
        _check_dims(width, height)
        if not 0 < maxval < 256:
            raise ValidationError(f"unsupported PGM maxval {maxval}")
        values, _ = _tokens(data, width * height, pos)
        arr = np.array(values, dtype=np.int64)
        if arr.min() < 0 or arr.max() > maxval:
            raise ValidationError("P2 sample out of range")
        return arr.astype(np.uint8).reshape(height, width)
    raise ValidationError(f"not a PGM file (magic {magic!r})")


def sniff(data: bytes) -> str:
    """Return 'pbm' or 'pgm' for the given bytes, or raise ValidationError."""
    magic = data[:2]
    if magic in (b"P1", b"P4"):
        return "pbm"
    if magic in (b"P2", b"P5"):
        return "pgm"
    raise ValidationError(f"unrecognized netpbm magic {magic!r}")


def _check_dims(width: int, height: int) -> None:
    if width < 1 or height < 1:
        raise ValidationError(f"degenerate image dimensions {width}x{height}")
