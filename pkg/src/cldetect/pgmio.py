"""Binary 8-bit PGM (P5) reading and writing.

PGM is the on-disk exchange format for externally supplied tasks: trivially
parseable, bit-exact, no image library required.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .exceptions import IngestionError


def read_pgm(path) -> np.ndarray:
    """Read a binary P5 PGM with maxval <= 255 into a uint8 (h, w) array."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc

    pos = 0

    def next_token() -> bytes:
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise IngestionError(f"truncated PGM header in {path}")
        return data[start:pos]

    magic = next_token()
    if magic != b"P5":
        raise IngestionError(f"{path} is not a binary PGM (magic {magic!r})")
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as exc:
        raise IngestionError(f"malformed PGM header in {path}") from exc
    if maxval <= 0 or maxval > 255:
        raise IngestionError(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise IngestionError(f"{path}: raster shorter than {width}x{height}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(path, image: np.ndarray) -> None:
    """Write a uint8 (h, w) array as binary P5 with maxval 255."""
    image = np.asarray(image)
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValueError("write_pgm expects a uint8 (h, w) array")
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.tobytes())
