"""Hidden camera-display messaging: codec, channel simulator, and recovery."""

__version__ = "0.1.0"

from .calibrate import (
    HistogramMap,
    InversePoly,
    apply_hist_map,
    apply_inverse,
    build_hist_map,
    equalize_with_record,
    fit_inverse_poly,
)
from .cdtf import CdtfModel, apply_cdtf, forward, list_presets, preset
from .codec import (
    BitMessage,
    FramePair,
    GridLayout,
    block_samples,
    embed,
    layout_grid,
    make_sequence,
    ratex_fill,
)
from .image import IntensityImage, quantize, read_image, write_image
from .recovery import (
    ALL_METHODS,
    RecoveryResult,
    recover_hidden_ratex,
    recover_naive,
    recover_oorc,
    recover_two_step,
)
from .svm import SvmModel, decide, phi, train

__all__ = [
    "ALL_METHODS",
    "BitMessage",
    "CdtfModel",
    "FramePair",
    "GridLayout",
    "HistogramMap",
    "IntensityImage",
    "InversePoly",
    "RecoveryResult",
    "SvmModel",
    "apply_cdtf",
    "apply_hist_map",
    "apply_inverse",
    "block_samples",
    "build_hist_map",
    "decide",
    "embed",
    "equalize_with_record",
    "fit_inverse_poly",
    "forward",
    "layout_grid",
    "list_presets",
    "make_sequence",
    "phi",
    "preset",
    "quantize",
    "ratex_fill",
    "read_image",
    "recover_hidden_ratex",
    "recover_naive",
    "recover_oorc",
    "recover_two_step",
    "train",
    "write_image",
]
