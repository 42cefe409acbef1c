"""Inverse radiometric calibration: quartic curve fitting and histogram maps.

Two routes to undo the channel curve: fit a quartic inverse polynomial to
(displayed, captured) ratex samples, or match the captured intensity
histogram back to a known transmitted distribution.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .image import IntensityImage, quantize


class CalibrationError(ValueError):
    """Calibration input is degenerate or insufficient."""


class MonotonicityWarning(UserWarning):
    """Fitted inverse curve needed a monotone projection."""


class FitRangeWarning(UserWarning):
    """Fitted inverse curve endpoints stray outside the sane [-0.05, 1.05] band."""


_GRID_POINTS = 256


@dataclass(frozen=True)
class InversePoly:
    """g(i) = a4*i^4 + a3*i^3 + a2*i^2 + a1*i + a0 over normalized i in [0, 1]."""

    a0: float
    a1: float
    a2: float
    a3: float
    a4: float

    def coefficients(self) -> np.ndarray:
        return np.array([self.a0, self.a1, self.a2, self.a3, self.a4])

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        return (((self.a4 * x + self.a3) * x + self.a2) * x + self.a1) * x + self.a0

    def is_monotone_on_grid(self, lo: float = 0.0, hi: float = 1.0, tol: float = 1e-9) -> bool:
        grid = np.linspace(lo, hi, _GRID_POINTS)
        return bool(np.all(np.diff(self(grid)) >= -tol))


def _lstsq_quartic(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    V = np.vander(x, 5, increasing=True)
    coef, *_ = np.linalg.lstsq(V, y, rcond=None)
    return coef


def fit_inverse_poly(samples) -> InversePoly:
    """Least-squares fit of displayed = g(captured), both normalized by 255.

    Needs >= 25 samples whose displayed values span at least 80% of the
    gray range (a full-range ramp is the normal source). Raises on a
    rank-deficient design (all captured values equal). Monotonicity is
    checked on a 256-point grid over the captured data span; a violating
    fit is projected by clipping its gridded derivative at zero and
    refitting, with a warning.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise CalibrationError("samples must be an (N, 2) array of (displayed, captured)")
    displayed, captured = arr[:, 0], arr[:, 1]
    if np.ptp(captured) < 1e-9:
        raise CalibrationError("rank-deficient design: all captured values are equal")
    if arr.shape[0] < 25:
        raise CalibrationError(f"need at least 25 samples, got {arr.shape[0]}")
    if np.ptp(displayed) < 0.8 * 255.0:
        raise CalibrationError(
            "insufficient span: displayed samples must cover >= 80% of [0, 255]"
        )

    x = captured / 255.0
    y = displayed / 255.0
    coef = _lstsq_quartic(x, y)
    poly = InversePoly(*coef)

    lo, hi = float(x.min()), float(x.max())
    grid = np.linspace(lo, hi, _GRID_POINTS)
    values = poly(grid)
    diffs = np.diff(values)
    if np.any(diffs < -1e-9):
        warnings.warn(
            "fitted inverse curve is not monotone on the data span; "
            "projecting by clipping its derivative at zero",
            MonotonicityWarning,
            stacklevel=2,
        )
        projected = values[0] + np.concatenate([[0.0], np.cumsum(np.clip(diffs, 0.0, None))])
        poly = InversePoly(*_lstsq_quartic(grid, projected))

    ends = poly(np.array([lo, hi]))
    if ends.min() < -0.05 or ends.max() > 1.05:
        warnings.warn(
            f"fitted curve endpoints ({ends[0]:.3f}, {ends[1]:.3f}) leave [-0.05, 1.05]",
            FitRangeWarning,
            stacklevel=2,
        )
    return poly


def apply_inverse(img: IntensityImage, poly: InversePoly) -> IntensityImage:
    """Per-pixel 255*g(v/255), clamped to [0, 255]."""
    out = 255.0 * poly(img.pixels / 255.0)
    return IntensityImage(np.clip(out, 0.0, 255.0))


def histogram_256(img: IntensityImage) -> np.ndarray:
    """256-bin counts of the quantized image."""
    q = quantize(img).pixels.astype(np.int64)
    return np.bincount(q.ravel(), minlength=256)


def equalize_with_record(img: IntensityImage) -> tuple[IntensityImage, np.ndarray]:
    """Exact-CDF histogram equalization; also returns the output histogram.

    The returned histogram is the transmit-side record a receiver compares
    captured distributions against. Constant (zero-entropy) images cannot
    be equalized and raise.
    """
    q = quantize(img).pixels.astype(np.int64)
    hist = np.bincount(q.ravel(), minlength=256)
    cdf = np.cumsum(hist) / q.size
    cdf_min = cdf[np.nonzero(hist)[0][0]]
    if cdf_min >= 1.0:
        raise CalibrationError("constant image has no distribution to equalize")
    lut = np.floor(255.0 * (cdf - cdf_min) / (1.0 - cdf_min) + 0.5)
    out = lut[q]
    return IntensityImage(out), np.bincount(out.astype(np.int64).ravel(), minlength=256)


@dataclass(frozen=True)
class HistogramMap:
    """256-entry non-decreasing lookup table: captured level -> corrected level."""

    lut: np.ndarray

    def __post_init__(self):
        lut = np.asarray(self.lut, dtype=np.int64)
        if lut.shape != (256,):
            raise ValueError("lut must have 256 entries")
        if lut.min() < 0 or lut.max() > 255:
            raise ValueError("lut entries must lie in [0, 255]")
        if np.any(np.diff(lut) < 0):
            raise ValueError("lut must be non-decreasing")
        lut = lut.copy()
        lut.setflags(write=False)
        object.__setattr__(self, "lut", lut)


def build_hist_map(reference: np.ndarray, captured: np.ndarray) -> HistogramMap:
    """Histogram specification by CDF matching.

    lut(v) = argmin_u |CDF_ref(u) - CDF_cap(v)| with ties broken toward the
    smaller u; the result is non-decreasing.
    """
    ref = np.asarray(reference, dtype=np.float64)
    cap = np.asarray(captured, dtype=np.float64)
    if ref.shape != (256,) or cap.shape != (256,):
        raise CalibrationError("histograms must have 256 bins")
    if ref.sum() <= 0 or cap.sum() <= 0:
        raise CalibrationError("histograms must have nonzero total mass")
    cdf_ref = np.cumsum(ref) / ref.sum()
    cdf_cap = np.cumsum(cap) / cap.sum()
    # argmin over u for every v; argmin returns the first (smallest) index on ties
    lut = np.abs(cdf_ref[None, :] - cdf_cap[:, None]).argmin(axis=1)
    lut = np.maximum.accumulate(lut)
    return HistogramMap(lut)


def apply_hist_map(img: IntensityImage, hmap: HistogramMap) -> IntensityImage:
    """Remap a captured image through the lookup table (quantizing first)."""
    q = quantize(img).pixels.astype(np.int64)
    return IntensityImage(hmap.lut[q].astype(np.float64))
