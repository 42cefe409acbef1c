"""The four message-recovery methods and block-level bit decisions.

Every method aggregates by taking the mean over a block's interior before
the sign/threshold decision, and decodes ties as bit 0. Ratex blocks are
the sole source of training/calibration data; message-block truth is never
consulted except to score accuracy afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibrate import (
    CalibrationError,
    apply_hist_map,
    apply_inverse,
    build_hist_map,
    fit_inverse_poly,
    histogram_256,
)
from .codec import BitMessage, BlockSamples, GridLayout, block_samples
from .image import IntensityImage
from .svm import SvmModel, TrainingError, decide, phi, train

METHOD_NAIVE = "naive"
METHOD_TWO_STEP = "two-step"
METHOD_OORC = "oorc"
METHOD_HIDDEN_RATEX = "hidden-ratex"
ALL_METHODS = (METHOD_NAIVE, METHOD_TWO_STEP, METHOD_OORC, METHOD_HIDDEN_RATEX)

DEFAULT_NAIVE_THRESHOLD = 2.5  # gray levels; fixed uncalibrated-receiver convention


class RecoveryError(RuntimeError):
    """A recovery method could not decode; message carries the method tag."""


@dataclass(frozen=True)
class RecoveryResult:
    bits: BitMessage
    per_block_scores: np.ndarray
    method: str
    accuracy: float | None = None
    model_params: dict | None = None  # fitted curve/classifier, report-serializable

    def __post_init__(self):
        scores = np.asarray(self.per_block_scores, dtype=np.float64)
        if scores.shape != (len(self.bits),):
            raise ValueError("one score per decoded bit required")
        scores = scores.copy()
        scores.setflags(write=False)
        object.__setattr__(self, "per_block_scores", scores)


def _score_accuracy(bits: list[int], truth: BitMessage | None) -> float | None:
    if truth is None:
        return None
    if len(truth) != len(bits):
        raise ValueError("truth length does not match decoded bit count")
    return float(np.mean([b == t for b, t in zip(bits, truth.bits)]))


def _result(method, scores, threshold, truth, model_params=None) -> RecoveryResult:
    bits = [1 if s > threshold else 0 for s in scores]
    return RecoveryResult(
        bits=BitMessage(tuple(bits)),
        per_block_scores=np.asarray(scores),
        method=method,
        accuracy=_score_accuracy(bits, truth),
        model_params=model_params,
    )


def _message_blocks(samples: list[BlockSamples], layout: GridLayout) -> list[BlockSamples]:
    by_index = {s.index: s for s in samples}
    return [by_index[i] for i in layout.message_indices]


def _ratex_blocks(samples: list[BlockSamples]) -> list[BlockSamples]:
    return [s for s in samples if s.is_ratex]


def _train_checked(features: np.ndarray, labels: np.ndarray, self_check: bool) -> SvmModel:
    """Train; optionally verify convexity by retraining from a second start.

    The check requires the two runs to reach objectives within 10*tol
    (relative) and to agree in decision sign on >= 99.9% of the training
    points, which a convex objective with a deterministic descent must.
    """
    tol = 1e-6
    model = train(features, labels, tol=tol)
    if self_check:
        other = train(
            features, labels, tol=tol, init=np.full(features.shape[1] + 1, 0.5)
        )
        j1, j2 = model.training_meta.final_objective, other.training_meta.final_objective
        gap = abs(j1 - j2) / max(j1, j2, 1e-12)
        if gap > 10 * tol:
            raise RecoveryError(f"optimizer self-check: objective gap {gap:.3e} > {10 * tol:.0e}")
        agree = np.mean((decide(model, features) > 0) == (decide(other, features) > 0))
        if agree < 0.999:
            raise RecoveryError(f"optimizer self-check: sign agreement {agree:.5f} < 0.999")
    return model


def recover_naive(
    captured_pair: tuple[IntensityImage, IntensityImage],
    layout: GridLayout,
    threshold: float = DEFAULT_NAIVE_THRESHOLD,
    truth: BitMessage | None = None,
) -> RecoveryResult:
    """Uncalibrated differencing: bit = 1 iff mean(embedded - original) > threshold."""
    samples = block_samples(*captured_pair, layout)
    scores = [float(np.mean(s.embedded - s.original)) for s in _message_blocks(samples, layout)]
    return _result(METHOD_NAIVE, scores, threshold, truth)


def recover_two_step(
    captured_pair: tuple[IntensityImage, IntensityImage],
    layout: GridLayout,
    truth: BitMessage | None = None,
    self_check: bool = False,
) -> RecoveryResult:
    """Calibrate first, then classify calibrated differences.

    The inverse curve is fit from ratex pixels of the captured original
    frame against the protocol-known displayed ramp; a 1-D classifier is
    then trained on calibrated ratex differences.
    """
    samples = block_samples(*captured_pair, layout)
    ratex = _ratex_blocks(samples)
    fit_pairs = np.concatenate(
        [np.stack([s.displayed, s.original], axis=1) for s in ratex]
    )
    try:
        poly = fit_inverse_poly(fit_pairs)
    except CalibrationError as exc:
        raise RecoveryError(f"{METHOD_TWO_STEP}: calibration fit failed: {exc}") from exc

    cal_o = apply_inverse(captured_pair[0], poly)
    cal_e = apply_inverse(captured_pair[1], poly)
    cal_samples = block_samples(cal_o, cal_e, layout)

    diffs, labels = [], []
    for s in _ratex_blocks(cal_samples):
        diffs.append((s.embedded - s.original) / 255.0)
        labels.append(np.where(s.labels == 1, 1.0, -1.0))
    try:
        model = _train_checked(np.concatenate(diffs)[:, None], np.concatenate(labels), self_check)
    except TrainingError as exc:
        raise RecoveryError(f"{METHOD_TWO_STEP}: classifier training failed: {exc}") from exc

    scores = [
        float(np.mean(decide(model, ((s.embedded - s.original) / 255.0)[:, None])))
        for s in _message_blocks(cal_samples, layout)
    ]
    params = {
        "inverse_poly": poly.coefficients().tolist(),
        "svm_w": model.w.tolist(),
        "svm_b": model.b,
    }
    return _result(METHOD_TWO_STEP, scores, 0.0, truth, params)


def recover_oorc(
    captured_pair: tuple[IntensityImage, IntensityImage],
    layout: GridLayout,
    truth: BitMessage | None = None,
    self_check: bool = False,
) -> RecoveryResult:
    """Joint calibration and classification in the 4-D feature space.

    Ratex pixels train the hyperplane directly on raw captured intensities;
    each message block is decided by the score of its mean feature vector.
    """
    samples = block_samples(*captured_pair, layout)
    feats, labels = [], []
    for s in _ratex_blocks(samples):
        feats.append(phi(s.original / 255.0, s.embedded / 255.0))
        labels.append(np.where(s.labels == 1, 1.0, -1.0))
    try:
        model = _train_checked(np.concatenate(feats), np.concatenate(labels), self_check)
    except TrainingError as exc:
        raise RecoveryError(f"{METHOD_OORC}: classifier training failed: {exc}") from exc

    scores = []
    for s in _message_blocks(samples, layout):
        mean_feature = phi(s.original / 255.0, s.embedded / 255.0).mean(axis=0)
        scores.append(float(decide(model, mean_feature)))
    params = {"svm_w": model.w.tolist(), "svm_b": model.b}
    return _result(METHOD_OORC, scores, 0.0, truth, params)


def recover_hidden_ratex(
    captured_pair: tuple[IntensityImage, IntensityImage],
    layout: GridLayout,
    reference_histogram: np.ndarray,
    threshold: float,
    truth: BitMessage | None = None,
) -> RecoveryResult:
    """Distribution-driven calibration without reading any ratex content.

    Requires frames that were histogram-equalized before embedding, with
    the equalized histogram known to the receiver. One map is built from
    the captured original's histogram and applied to both frames.
    """
    try:
        hmap = build_hist_map(reference_histogram, histogram_256(captured_pair[0]))
    except CalibrationError as exc:
        raise RecoveryError(f"{METHOD_HIDDEN_RATEX}: degenerate histogram: {exc}") from exc
    remapped_o = apply_hist_map(captured_pair[0], hmap)
    remapped_e = apply_hist_map(captured_pair[1], hmap)
    samples = block_samples(remapped_o, remapped_e, layout)
    scores = [float(np.mean(s.embedded - s.original)) for s in _message_blocks(samples, layout)]
    params = {"histogram_lut": hmap.lut.tolist()}
    return _result(METHOD_HIDDEN_RATEX, scores, threshold, truth, params)
