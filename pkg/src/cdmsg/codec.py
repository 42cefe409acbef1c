"""Block-grid message codec: layout, ratex calibration patches, additive embedding.

A message frame pair is (original, embedded): the embedded frame adds a
constant kappa to every block carrying a 1-bit. Ratex blocks hold a
left-to-right full-range intensity ramp; in the embedded frame their even
2-px horizontal stripes also receive +kappa, so a single captured pair
yields labeled two-class training pixels spanning the whole gray range.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .image import IntensityImage


class LayoutError(ValueError):
    """Grid geometry is degenerate or inconsistent."""


class SaturationWarning(UserWarning):
    """More than half of an embedded block clipped at 255."""


STRIPE_HEIGHT = 2  # px; even stripes of a ratex block carry +kappa


@dataclass(frozen=True)
class BitMessage:
    bits: tuple[int, ...]

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("message bits must be 0 or 1")
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))

    def __len__(self) -> int:
        return len(self.bits)

    def to_bitstring(self) -> str:
        return "".join(str(b) for b in self.bits)


def parse_message(text: str, length: int) -> BitMessage:
    """Parse a raw bit string or hex string into a message of `length` bits.

    A string of only 0/1 characters whose length equals the message length
    is taken as raw bits; anything else is parsed as hex, MSB first, and
    must supply at least `length` bits.
    """
    s = text.strip().lower().removeprefix("0x")
    if set(s) <= {"0", "1"} and len(s) == length:
        return BitMessage(tuple(int(c) for c in s))
    try:
        value = int(s, 16)
    except ValueError:
        raise ValueError(f"message {text!r} is neither a bit string nor hex") from None
    nbits = 4 * len(s)
    if nbits < length:
        raise ValueError(f"hex message supplies {nbits} bits, need {length}")
    allbits = [(value >> (nbits - 1 - i)) & 1 for i in range(nbits)]
    return BitMessage(tuple(allbits[:length]))


@dataclass(frozen=True)
class GridLayout:
    """Partition of an image into message blocks and ratex blocks.

    block_regions are (x, y, w, h) rectangles in row-major block order;
    they tile the image exactly (remainder pixels go to the last row and
    column of blocks).
    """

    rows: int
    cols: int
    block_regions: tuple[tuple[int, int, int, int], ...]
    ratex_indices: frozenset[int]
    margin_fraction: float

    def __post_init__(self):
        n = self.rows * self.cols
        if len(self.block_regions) != n:
            raise LayoutError("block_regions count does not match rows*cols")
        if not self.ratex_indices or len(self.ratex_indices) >= n:
            raise LayoutError("ratex blocks must be a nonempty strict subset")
        if not (0.0 <= self.margin_fraction < 0.5):
            raise LayoutError("margin_fraction must lie in [0, 0.5)")

    @property
    def width(self) -> int:
        x, _, w, _ = self.block_regions[self.cols - 1]
        return x + w

    @property
    def height(self) -> int:
        _, y, _, h = self.block_regions[-1]
        return y + h

    @property
    def message_indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.rows * self.cols) if i not in self.ratex_indices)

    def interior(self, index: int) -> tuple[int, int, int, int]:
        """(x0, y0, x1, y1) of a block after margin trimming.

        The trim per side is round-half-up of dimension*margin_fraction.
        """
        x, y, w, h = self.block_regions[index]
        tx = int(np.floor(w * self.margin_fraction + 0.5))
        ty = int(np.floor(h * self.margin_fraction + 0.5))
        if w - 2 * tx < 1 or h - 2 * ty < 1:
            raise LayoutError(f"block {index} has empty interior after margins")
        return x + tx, y + ty, x + w - tx, y + h - ty


def layout_grid(
    width: int,
    height: int,
    rows: int,
    cols: int,
    ratex_count: int,
    margin_fraction: float = 0.1,
) -> GridLayout:
    """Tile width x height into rows x cols blocks and reserve ratex blocks.

    Ratex blocks go to the four grid corners first, then along the top
    edge left to right, then row-major through whatever remains.
    """
    if rows < 1 or cols < 1:
        raise LayoutError("grid must have at least one row and column")
    if width < cols or height < rows:
        raise LayoutError("image smaller than the block grid")
    if ratex_count < 1 or rows * cols < ratex_count + 1:
        raise LayoutError("need at least one ratex block and one message block")
    bw, bh = width // cols, height // rows
    if bw < 2 or bh < 2:
        raise LayoutError(f"blocks of {bw}x{bh} px are below the 2x2 minimum")

    regions = []
    for r in range(rows):
        y = r * bh
        h = bh if r < rows - 1 else height - y
        for c in range(cols):
            x = c * bw
            w = bw if c < cols - 1 else width - x
            regions.append((x, y, w, h))

    order: list[int] = []
    corners = [0, cols - 1, (rows - 1) * cols, rows * cols - 1]
    for i in corners + list(range(1, cols - 1)) + list(range(rows * cols)):
        if i not in order:
            order.append(i)
    ratex = frozenset(order[:ratex_count])
    return GridLayout(rows, cols, tuple(regions), ratex, margin_fraction)


def ratex_patch(width: int, height: int) -> np.ndarray:
    """Full-range left-to-right ramp: column c holds round(255*c/(width-1))."""
    if width < 2 or height < 1:
        raise LayoutError("ratex patch must be at least 2 px wide")
    ramp = np.floor(255.0 * np.arange(width) / (width - 1) + 0.5)
    return np.tile(ramp, (height, 1))


def ratex_fill(layout: GridLayout) -> dict[int, np.ndarray]:
    """Ramp content for every ratex block, keyed by block index.

    This is a protocol constant: transmitter and receiver derive the same
    displayed values from the layout alone.
    """
    out = {}
    for i in sorted(layout.ratex_indices):
        _, _, w, h = layout.block_regions[i]
        out[i] = ratex_patch(w, h)
    return out


def _stripe_mask(y0: int, height: int, block_y: int) -> np.ndarray:
    """True on rows belonging to even (kappa-carrying) stripes of a ratex block."""
    rows = np.arange(y0, y0 + height)
    return ((rows - block_y) // STRIPE_HEIGHT) % 2 == 0


def ratex_painted(carrier: IntensityImage, layout: GridLayout) -> IntensityImage:
    """The displayed original frame: carrier with ratex blocks overwritten.

    This frame (not the bare carrier) is what a receiver observes, so its
    histogram is the transmit-side reference for hidden-ratex calibration.
    """
    if carrier.width != layout.width or carrier.height != layout.height:
        raise LayoutError("carrier dimensions do not match layout")
    original = carrier.pixels.copy()
    for i, patch in ratex_fill(layout).items():
        x, y, w, h = layout.block_regions[i]
        original[y : y + h, x : x + w] = patch
    return IntensityImage(original)


@dataclass(frozen=True)
class FramePair:
    """Original/embedded display frames plus the ground truth they encode."""

    original: IntensityImage
    embedded: IntensityImage
    kappa: float
    layout: GridLayout
    truth: BitMessage

    def __post_init__(self):
        if self.original.pixels.shape != self.embedded.pixels.shape:
            raise ValueError("frame pair dimensions differ")


def embed(
    carrier: IntensityImage, msg: BitMessage, kappa: float, layout: GridLayout
) -> FramePair:
    """Build the (original, embedded) frame pair for one message.

    original = carrier with ratex blocks overwritten by their ramp fill;
    embedded = original + kappa on 1-bit blocks and on the even stripes of
    every ratex block, clamped to [0, 255]. kappa=0 is allowed and yields
    embedded == original.
    """
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    message_blocks = layout.message_indices
    if len(msg) != len(message_blocks):
        raise ValueError(
            f"message has {len(msg)} bits but layout has {len(message_blocks)} message blocks"
        )
    original = ratex_painted(carrier, layout).pixels.copy()
    embedded = original.copy()
    saturated: list[int] = []
    for i, bit in zip(message_blocks, msg.bits):
        if not bit:
            continue
        x, y, w, h = layout.block_regions[i]
        block = embedded[y : y + h, x : x + w] + kappa
        if kappa > 0 and np.mean(block > 255.0) > 0.5:
            saturated.append(i)
        embedded[y : y + h, x : x + w] = block
    for i in layout.ratex_indices:
        x, y, w, h = layout.block_regions[i]
        mask = _stripe_mask(y, h, y)
        block = embedded[y : y + h, x : x + w]
        block[mask, :] += kappa
        if kappa > 0 and np.mean(block[mask, :] > 255.0) > 0.5:
            saturated.append(i)
    if saturated:
        warnings.warn(
            f"kappa={kappa} saturates more than half of block(s) {sorted(saturated)}",
            SaturationWarning,
            stacklevel=2,
        )
    embedded = np.clip(embedded, 0.0, 255.0)
    return FramePair(IntensityImage(original), IntensityImage(embedded), kappa, layout, msg)


def make_sequence(
    carrier: IntensityImage,
    msgs: list[BitMessage],
    kappa: float,
    layout: GridLayout,
) -> list[IntensityImage]:
    """Interleave original and embedded frames: o, e(m1), o, e(m2), ..."""
    if not msgs:
        raise ValueError("need at least one message")
    frames: list[IntensityImage] = []
    for msg in msgs:
        pair = embed(carrier, msg, kappa, layout)
        frames.append(pair.original)
        frames.append(pair.embedded)
    return frames


@dataclass(frozen=True)
class BlockSamples:
    """Interior pixel pairs of one block from a captured frame pair.

    For ratex blocks, `labels` marks the kappa-carrying stripe pixels (1)
    versus untouched ones (0) and `displayed` holds the protocol-known ramp
    values; both are None for message blocks.
    """

    index: int
    is_ratex: bool
    original: np.ndarray
    embedded: np.ndarray
    labels: np.ndarray | None = field(default=None)
    displayed: np.ndarray | None = field(default=None)


def block_samples(
    captured_original: IntensityImage,
    captured_embedded: IntensityImage,
    layout: GridLayout,
) -> list[BlockSamples]:
    """Extract per-block interior (original, embedded) pixel pairs."""
    if captured_original.pixels.shape != captured_embedded.pixels.shape:
        raise ValueError("captured frames differ in size")
    if captured_original.width != layout.width or captured_original.height != layout.height:
        raise LayoutError("captured frames do not match layout dimensions")
    fills = ratex_fill(layout)
    out = []
    for i in range(layout.rows * layout.cols):
        x0, y0, x1, y1 = layout.interior(i)
        orig = captured_original.pixels[y0:y1, x0:x1]
        emb = captured_embedded.pixels[y0:y1, x0:x1]
        labels = displayed = None
        if i in layout.ratex_indices:
            bx, by, _, _ = layout.block_regions[i]
            mask = _stripe_mask(y0, y1 - y0, by)
            labels = np.broadcast_to(mask[:, None], orig.shape).ravel().astype(np.int64)
            displayed = fills[i][y0 - by : y1 - by, x0 - bx : x1 - bx].ravel()
        out.append(
            BlockSamples(
                index=i,
                is_ratex=i in layout.ratex_indices,
                original=orig.ravel(),
                embedded=emb.ravel(),
                labels=labels,
                displayed=displayed,
            )
        )
    return out
