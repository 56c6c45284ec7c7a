"""Portable graymap (PGM) reading and writing, P2 and P5 variants."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def _tokens(data: bytes):
    """Header tokens, skipping whitespace and # comments."""
    i = 0
    n = len(data)
    while True:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] != b"\n":
                i += 1
            continue
        if i >= n:
            return
        start = i
        while i < n and not data[i : i + 1].isspace():
            i += 1
        yield data[start:i], i


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a graymap as (rows x cols uint16 array, maxval)."""
    with open(path, "rb") as fh:
        data = fh.read()
    toks = _tokens(data)
    try:
        magic, _ = next(toks)
        if magic not in (b"P2", b"P5"):
            raise DataError(f"{path}: not a PGM file (magic {magic!r})")
        width, _ = next(toks)
        height, _ = next(toks)
        maxval, end = next(toks)
        width, height, maxval = int(width), int(height), int(maxval)
    except (StopIteration, ValueError) as exc:
        raise DataError(f"{path}: malformed PGM header") from exc
    if not 0 < maxval < 65536:
        raise DataError(f"{path}: maxval {maxval} out of range")
    if magic == b"P2":
        values = []
        for tok, _ in _tokens(data[end:]):
            values.append(int(tok))
        arr = np.array(values, dtype=np.uint16)
    else:
        body = data[end + 1 :]  # single whitespace byte after maxval
        if maxval < 256:
            arr = np.frombuffer(body[: width * height], dtype=np.uint8)
            arr = arr.astype(np.uint16)
        else:
            arr = np.frombuffer(body[: 2 * width * height],
                                dtype=">u2").astype(np.uint16)
    if arr.size != width * height:
        raise DataError(
            f"{path}: expected {width * height} pixels, found {arr.size}"
        )
    if arr.max(initial=0) > maxval:
        raise DataError(f"{path}: pixel exceeds declared maxval {maxval}")
    return arr.reshape(height, width), maxval


def write_pgm(path, grid, maxval: int = 255, binary: bool = True) -> None:
    """Write a rows x cols integer grid as P5 (binary) or P2 (ASCII)."""
    arr = np.asarray(grid)
    if arr.ndim != 2:
        raise ValueError("PGM grid must be 2-d")
    if arr.min(initial=0) < 0 or arr.max(initial=0) > maxval:
        raise ValueError(f"pixel values must lie in [0, {maxval}]")
    rows, cols = arr.shape
    header = f"{'P5' if binary else 'P2'}\n{cols} {rows}\n{maxval}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            if maxval < 256:
                fh.write(arr.astype(np.uint8).tobytes())
            else:
                fh.write(arr.astype(">u2").tobytes())
        else:
            body = "\n".join(" ".join(str(int(v)) for v in row) for row in arr)
            fh.write(body.encode("ascii"))
            fh.write(b"\n")
