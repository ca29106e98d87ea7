"""PGM and PFM image files.

PGM covers 8- and 16-bit grayscale inputs and outputs (both the binary
``P5`` and ASCII ``P2`` flavors, 16-bit samples big-endian as required by
the format).  PFM (grayscale ``Pf``, little-endian, scanlines stored
bottom-to-top) carries real-valued maps such as probability maps.
"""

from __future__ import annotations

import numpy as np

__all__ = ["read_pgm", "write_pgm", "read_pfm", "write_pfm"]


def _tokens(data: bytes):
    """Yield whitespace-separated header tokens, skipping # comments."""
    i = 0
    n = len(data)
    while i < n:
        c = data[i : i + 1]
        if c.isspace():
            i += 1
        elif c == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        else:
            j = i
            while j < n and not data[j : j + 1].isspace() and data[j : j + 1] != b"#":
                j += 1
            yield data[i:j], j
            i = j


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a PGM file.  Returns ``(image, maxval)`` with float64 pixels.

    Sample values are kept on their stored scale ([0, maxval]); no
    rescaling is applied.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    it = _tokens(data)
    magic, _ = next(it)
    if magic not in (b"P2", b"P5"):
        raise ValueError(f"not a PGM file (magic {magic!r})")
    width, _ = next(it)
    height, _ = next(it)
    maxval, end = next(it)
    width, height, maxval = int(width), int(height), int(maxval)
    if not (0 < maxval < 65536):
        raise ValueError(f"invalid PGM maxval {maxval}")
    n = width * height
    if magic == b"P2":
        vals = []
        for tok, _ in it:
            vals.append(int(tok))
            if len(vals) == n:
                break
        if len(vals) != n:
            raise ValueError("truncated ASCII PGM")
        arr = np.array(vals, dtype=np.float64)
    else:
        # Binary data begins after exactly one whitespace byte.
        start = end + 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[start : start + n * dtype.itemsize]
        if len(raw) != n * dtype.itemsize:
            raise ValueError("truncated binary PGM")
        arr = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    return arr.reshape(height, width), maxval


def write_pgm(path, image, maxval: int = 255, binary: bool = True) -> None:
    """Write a PGM file, clipping and rounding samples to ``[0, maxval]``."""
    u = np.asarray(image, dtype=np.float64)
    if u.ndim != 2:
        raise ValueError("PGM image must be 2-D")
    if not (0 < maxval < 65536):
        raise ValueError(f"invalid PGM maxval {maxval}")
    q = np.clip(np.rint(u), 0, maxval)
    height, width = u.shape
    if binary:
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
        body = q.astype(dtype).tobytes()
        with open(path, "wb") as fh:
            fh.write(header + body)
    else:
        lines = [f"P2\n{width} {height}\n{maxval}\n"]
        for row in q.astype(np.int64):
            lines.append(" ".join(str(v) for v in row) + "\n")
        with open(path, "w", encoding="ascii") as fh:
            fh.writelines(lines)


def read_pfm(path) -> np.ndarray:
    """Read a grayscale PFM file into a float64 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    it = _tokens(data)
    magic, _ = next(it)
    if magic != b"Pf":
        raise ValueError(f"not a grayscale PFM file (magic {magic!r})")
    width, _ = next(it)
    height, _ = next(it)
    scale, end = next(it)
    width, height, scale = int(width), int(height), float(scale)
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    start = end + 1
    n = width * height
    raw = data[start : start + 4 * n]
    if len(raw) != 4 * n:
        raise ValueError("truncated PFM")
    arr = np.frombuffer(raw, dtype=dtype).astype(np.float64).reshape(height, width)
    if scale not in (-1.0, 1.0):
        arr = arr * abs(scale)
    # PFM stores rows bottom-to-top.
    return np.flipud(arr).copy()


def write_pfm(path, image) -> None:
    """Write a float map as little-endian grayscale PFM."""
    u = np.asarray(image, dtype=np.float64)
    if u.ndim != 2:
        raise ValueError("PFM image must be 2-D")
    height, width = u.shape
    header = f"Pf\n{width} {height}\n-1.0\n".encode("ascii")
    body = np.flipud(u).astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header + body)
