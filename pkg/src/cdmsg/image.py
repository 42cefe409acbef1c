"""Grayscale intensity images and binary PGM (P5) file I/O.

Pixel values are real-valued in [0, 255] internally; quantization to the
8-bit grid happens only at simulated capture and at file boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PgmError(Exception):
    """Base class for portable-graymap I/O failures."""


class PgmMagicError(PgmError):
    """File is not a binary P5 graymap."""


class PgmHeaderError(PgmError):
    """Header tokens are missing or not parseable."""


class PgmDepthError(PgmError):
    """Maxval is not 255 (only 8-bit graymaps are supported)."""


class PgmTruncatedError(PgmError):
    """Pixel payload is shorter than width*height bytes."""


@dataclass(frozen=True, eq=False)
class IntensityImage:
    """2-D grid of gray levels, row-major, each value in [0, 255]."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be a 2-D array with at least one pixel")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 255.0:
            raise ValueError("image values must lie in [0, 255]")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def values(self) -> np.ndarray:
        """Row-major flattened view of the pixel grid."""
        return self.pixels.ravel()

    def is_quantized(self) -> bool:
        return bool(np.all(self.pixels == np.floor(self.pixels)))


def quantize_values(values) -> np.ndarray:
    """Clamp raw gray levels to [0, 255] and round half-up to integers."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 255.0)
    return np.minimum(np.floor(v + 0.5), 255.0)


def quantize(img: IntensityImage) -> IntensityImage:
    """Quantize an image to the 8-bit gray grid.

    Idempotent; round-half-up (127.5 -> 128) keeps golden files reproducible.
    """
    return IntensityImage(quantize_values(img.pixels))


def _read_header_tokens(data: bytes, count: int, start: int) -> tuple[list[int], int]:
    """Parse whitespace-separated integer tokens, skipping '#' comments."""
    tokens: list[int] = []
    i = start
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < n and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise PgmHeaderError("header ended before all size tokens were read")
        try:
            tokens.append(int(data[i:j]))
        except ValueError:
            raise PgmHeaderError(f"non-numeric header token {data[i:j]!r}") from None
        i = j
    return tokens, i


def read_image(path) -> IntensityImage:
    """Read a binary P5 graymap with maxval 255."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 2 or data[:2] not in (b"P5",):
        magic = data[:2].decode("ascii", "replace") if len(data) >= 2 else "<empty>"
        raise PgmMagicError(f"unsupported format magic {magic!r}, expected P5")
    (width, height, maxval), pos = _read_header_tokens(data, 3, 2)
    if width < 1 or height < 1:
        raise PgmHeaderError(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise PgmDepthError(f"maxval {maxval} unsupported, only 8-bit (255) graymaps")
    pos += 1  # single whitespace byte after maxval
    payload = data[pos : pos + width * height]
    if len(payload) < width * height:
        raise PgmTruncatedError(
            f"payload holds {len(payload)} bytes, expected {width * height}"
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
    return IntensityImage(pixels.reshape(height, width))


def write_image(img: IntensityImage, path) -> None:
    """Write a quantized image as a binary P5 graymap with maxval 255."""
    if not img.is_quantized():
        raise ValueError("image must be quantized before writing (call quantize)")
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(img.pixels.astype(np.uint8).tobytes())
