"""Minimal binary image formats: PFM (float depth), PPM/P6 (RGB), PGM/P5 (masks).

All readers/writers are bit-exact round trips at their native precision
(32-bit float for PFM, 8-bit for PPM/PGM).
"""

from __future__ import annotations

import numpy as np


class FileFormatError(IOError):
    """Raised on malformed headers or inconsistent payloads."""


def _read_token(f) -> bytes:
    # skip whitespace and '#' comment lines, return the next token
    tok = b""
    while True:
        c = f.read(1)
        if c == b"":
            raise FileFormatError("unexpected end of file in header")
        if c == b"#":
            while c not in (b"\n", b""):
                c = f.read(1)
            continue
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def write_pfm(values: np.ndarray, path) -> None:
    """Write a single-channel float32 map as little-endian PFM ("Pf")."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 2:
        raise FileFormatError(f"expected 2-D map, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise FileFormatError("refusing to write non-finite values")
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{arr.shape[1]} {arr.shape[0]}\n".encode())
        f.write(b"-1.0\n")  # negative scale -> little endian
        # PFM stores rows bottom-to-top
        f.write(np.flipud(arr).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = _read_token(f)
        if magic == b"PF":
            raise FileFormatError("expected single-channel 'Pf', got color 'PF'")
        if magic != b"Pf":
            raise FileFormatError(f"not a PFM file (magic {magic!r})")
        try:
            width = int(_read_token(f))
            height = int(_read_token(f))
            scale = float(_read_token(f))
        except ValueError as e:
            raise FileFormatError(f"malformed PFM header: {e}") from None
        if width <= 0 or height <= 0 or width * height > 2**28:
            raise FileFormatError(f"bad dimensions {width}x{height}")
        dtype = "<f4" if scale < 0 else ">f4"
        data = f.read(width * height * 4)
        if len(data) != width * height * 4:
            raise FileFormatError("truncated PFM payload")
        arr = np.frombuffer(data, dtype=dtype).reshape(height, width)
        return np.flipud(arr).astype(np.float32)


def write_ppm(values: np.ndarray, path) -> None:
    """Write an HxWx3 array in [0,1] as binary PPM (P6), 8-bit."""
    arr = np.asarray(values)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise FileFormatError(f"expected HxWx3 image, got shape {arr.shape}")
    q = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode())
        f.write(q.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        if _read_token(f) != b"P6":
            raise FileFormatError("not a binary PPM (P6) file")
        width = int(_read_token(f))
        height = int(_read_token(f))
        maxval = int(_read_token(f))
        if maxval != 255:
            raise FileFormatError(f"unsupported maxval {maxval}")
        data = f.read(width * height * 3)
        if len(data) != width * height * 3:
            raise FileFormatError("truncated PPM payload")
        arr = np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3)
        return arr.astype(np.float32) / 255.0


def write_pgm(mask: np.ndarray, path) -> None:
    """Write a boolean mask as binary PGM (P5): 255 = valid, 0 = invalid."""
    arr = np.asarray(mask, dtype=bool)
    if arr.ndim != 2:
        raise FileFormatError(f"expected 2-D mask, got shape {arr.shape}")
    with open(path, "wb") as f:
        f.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode())
        f.write((arr.astype(np.uint8) * 255).tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        if _read_token(f) != b"P5":
            raise FileFormatError("not a binary PGM (P5) file")
        width = int(_read_token(f))
        height = int(_read_token(f))
        maxval = int(_read_token(f))
        if maxval != 255:
            raise FileFormatError(f"unsupported maxval {maxval}")
        data = f.read(width * height)
        if len(data) != width * height:
            raise FileFormatError("truncated PGM payload")
        return np.frombuffer(data, dtype=np.uint8).reshape(height, width) > 127
