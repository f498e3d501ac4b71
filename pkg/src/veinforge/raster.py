"""Raster value types, binary PGM (P5) I/O and coordinate rasterization.

Images are stored row-major with the origin at the top-left corner. A
coordinate is ``(x, y)`` with ``x`` the column and ``y`` the row, both
0-indexed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CoordinateOutOfBounds,
    IoFailure,
    MalformedHeader,
    MissingFile,
    TruncatedPayload,
    UnsupportedFormat,
)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Grayscale raster with intensities in [0, 255].

    ``pixels`` has shape ``(height, width)``. Images loaded from disk carry
    ``uint8`` data; filter stages produce ``float64`` data so precision is
    kept through the pipeline and only quantized on save.
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"image must be a non-empty 2-D array, got shape {px.shape}")
        if px.dtype != np.uint8:
            px = px.astype(np.float64)
            if not np.all(np.isfinite(px)) or px.min() < 0 or px.max() > 255:
                raise ValueError("intensities must lie in [0, 255]")
        object.__setattr__(self, "pixels", _frozen(px))

    @classmethod
    def from_data(cls, width: int, height: int, data: Sequence[float]) -> "GrayImage":
        """Build from a flat row-major sequence."""
        arr = np.asarray(data)
        if arr.size != width * height:
            raise ValueError(f"data length {arr.size} != {width}*{height}")
        if arr.dtype.kind in "iu" and arr.size and arr.min() >= 0 and arr.max() <= 255:
            arr = arr.astype(np.uint8)
        return cls(arr.reshape(height, width))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def data(self) -> np.ndarray:
        return self.pixels.ravel()

    def to_uint8(self) -> np.ndarray:
        """Quantize to bytes, rounding half away from zero."""
        if self.pixels.dtype == np.uint8:
            return self.pixels
        return np.clip(np.floor(self.pixels + 0.5), 0, 255).astype(np.uint8)

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Bitmask raster; ``mask`` is a ``(height, width)`` array of 0/1 bytes."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise ValueError(f"mask must be a non-empty 2-D array, got shape {m.shape}")
        if m.dtype == bool:
            m = m.astype(np.uint8)
        elif not np.all((m == 0) | (m == 1)):
            raise ValueError("binary image elements must be 0 or 1")
        object.__setattr__(self, "mask", _frozen(m.astype(np.uint8)))

    @classmethod
    def zeros(cls, width: int, height: int) -> "BinaryImage":
        return cls(np.zeros((height, width), dtype=np.uint8))

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def data(self) -> np.ndarray:
        return self.mask.ravel()

    def count(self) -> int:
        return int(self.mask.sum())

    def to_gray(self) -> GrayImage:
        """Foreground rendered as 255, background as 0."""
        return GrayImage((self.mask * 255).astype(np.uint8))

    @classmethod
    def from_gray(cls, img: GrayImage) -> "BinaryImage":
        """Any nonzero intensity counts as foreground."""
        return cls((img.pixels > 0).astype(np.uint8))

    def __eq__(self, other):
        if not isinstance(other, BinaryImage):
            return NotImplemented
        return self.mask.shape == other.mask.shape and np.array_equal(self.mask, other.mask)

    __hash__ = None


def _header_tokens(raw: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset of the single whitespace byte that
    terminates the last token.
    """
    tokens = []
    pos = 0
    n = len(raw)
    while len(tokens) < count:
        while pos < n and raw[pos : pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise MalformedHeader("header ended early")
        if raw[pos : pos + 1] == b"#":
            end = raw.find(b"\n", pos)
            if end < 0:
                raise MalformedHeader("unterminated comment in header")
            pos = end + 1
            continue
        start = pos
        while pos < n and not raw[pos : pos + 1].isspace() and raw[pos : pos + 1] != b"#":
            pos += 1
        tokens.append(raw[start:pos])
    if pos >= n or not raw[pos : pos + 1].isspace():
        raise MalformedHeader("missing whitespace after maxval")
    return tokens, pos


def load_pgm(path) -> GrayImage:
    """Load a binary (P5) PGM file with maxval <= 255; bytes are kept as-is."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    raw = path.read_bytes()
    if len(raw) < 2:
        raise MalformedHeader("file too short for a PNM magic number")
    magic = raw[:2]
    if magic in (b"P1", b"P2", b"P3", b"P4", b"P6", b"P7"):
        raise UnsupportedFormat(f"{magic.decode()} is not supported, only P5")
    if magic != b"P5":
        raise MalformedHeader(f"bad magic {magic!r}")
    tokens, pos = _header_tokens(raw[2:], 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise MalformedHeader(f"non-integer header field in {tokens}") from exc
    if width < 1 or height < 1 or maxval < 1:
        raise MalformedHeader(f"invalid dimensions {width}x{height} maxval {maxval}")
    if maxval > 255:
        raise UnsupportedFormat(f"maxval {maxval} > 255 (16-bit PGM)")
    start = 2 + pos + 1
    payload = raw[start : start + width * height]
    if len(payload) < width * height:
        raise TruncatedPayload(f"expected {width * height} bytes, found {len(payload)}")
    return GrayImage(np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy())


def save_pgm(img: GrayImage, path) -> None:
    """Write ``img`` as P5 with the fixed header ``P5\\n<w> <h>\\n255\\n``."""
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    try:
        with open(os.fspath(path), "wb") as fh:
            fh.write(header)
            fh.write(img.to_uint8().tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def rasterize(coords: Iterable[tuple[int, int]], width: int, height: int) -> BinaryImage:
    """Set exactly the listed ``(x, y)`` pixels; duplicates are idempotent."""
    mask = np.zeros((height, width), dtype=np.uint8)
    for x, y in coords:
        if not (0 <= x < width and 0 <= y < height):
            raise CoordinateOutOfBounds((x, y), width, height)
        mask[y, x] = 1
    return BinaryImage(mask)
