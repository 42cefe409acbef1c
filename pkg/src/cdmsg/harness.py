"""Experiment orchestration: preset x angle x kappa sweeps and report files.

A run embeds seeded random messages into equalized carriers, simulates
capture per preset/angle, decodes with every requested method, and writes
a report directory: report.csv holds the deterministic result body (same
config + seed => byte-identical file) and run_meta.json holds config echo,
timings, and per-cell detail. All files are written atomically.
"""

from __future__ import annotations

import dataclasses
import json
import os
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .calibrate import equalize_with_record, histogram_256
from .cdtf import apply_cdtf, list_presets, preset
from .codec import BitMessage, embed, layout_grid, ratex_painted
from .image import IntensityImage, quantize, read_image, write_image
from .recovery import (
    ALL_METHODS,
    DEFAULT_NAIVE_THRESHOLD,
    METHOD_HIDDEN_RATEX,
    METHOD_NAIVE,
    METHOD_OORC,
    METHOD_TWO_STEP,
    recover_hidden_ratex,
    recover_naive,
    recover_oorc,
    recover_two_step,
)

CONFIG_VERSION = 1
CSV_HEADER = "preset,angle,kappa,method,bits_total,bits_correct,accuracy"

# Seed-stream namespaces: message bits for (carrier c, message m) come from
# default_rng([seed, _STREAM_BITS, c, m]); the capture-noise seed for frame f
# of that pair in cell (preset p, angle a, kappa k) is derived from
# SeedSequence([seed, _STREAM_NOISE, p, a, k, c, m, f]). Any single cell can
# therefore be regenerated in isolation.
_STREAM_BITS = 1
_STREAM_NOISE = 2


class ConfigError(ValueError):
    def __init__(self, field_name: str, problem: str):
        self.field = field_name
        super().__init__(f"config field '{field_name}': {problem}")


@dataclass(frozen=True)
class ExperimentConfig:
    carriers: tuple[str, ...]
    rows: int = 8
    cols: int = 8
    ratex_count: int = 5
    margin_fraction: float = 0.1
    kappas: tuple[float, ...] = (3.0, 5.0)
    angles: tuple[float, ...] = (0.0, 45.0)
    presets: tuple[str, ...] = tuple(f"d{i}c{j}" for i in (1, 2, 3) for j in (1, 2, 3))
    messages_per_carrier: int = 6
    seed: int = 1729
    methods: tuple[str, ...] = ALL_METHODS
    naive_threshold: float = DEFAULT_NAIVE_THRESHOLD
    out_dir: str = "runs/latest"
    svm_self_check: bool = False
    version: int = CONFIG_VERSION

    def validate(self) -> None:
        if self.version != CONFIG_VERSION:
            raise ConfigError("version", f"expected {CONFIG_VERSION}, got {self.version}")
        if not self.carriers:
            raise ConfigError("carriers", "at least one carrier image is required")
        if self.rows < 1 or self.cols < 1:
            raise ConfigError("rows", "grid must be at least 1x1")
        if not (1 <= self.ratex_count < self.rows * self.cols):
            raise ConfigError("ratex_count", "must leave at least one message block")
        if not (0.0 <= self.margin_fraction < 0.5):
            raise ConfigError("margin_fraction", "must lie in [0, 0.5)")
        if not self.kappas or any(k <= 0 for k in self.kappas):
            raise ConfigError("kappas", "must be a nonempty list of positive gray levels")
        if not self.angles or any(not (0 <= a < 90) for a in self.angles):
            raise ConfigError("angles", "must be a nonempty list of degrees in [0, 90)")
        known = set(list_presets())
        if not self.presets:
            raise ConfigError("presets", "must name at least one preset")
        for p in self.presets:
            if p not in known:
                raise ConfigError("presets", f"unknown preset {p!r}")
        if self.messages_per_carrier < 1:
            raise ConfigError("messages_per_carrier", "must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed", "must be a non-negative integer")
        if not self.methods:
            raise ConfigError("methods", "must name at least one method")
        for m in self.methods:
            if m not in ALL_METHODS:
                raise ConfigError("methods", f"unknown method {m!r}")
        if self.naive_threshold < 0:
            raise ConfigError("naive_threshold", "must be non-negative")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)


_FIELD_TYPES = {
    "carriers": (list, tuple),
    "rows": int,
    "cols": int,
    "ratex_count": int,
    "margin_fraction": (int, float),
    "kappas": (list, tuple),
    "angles": (list, tuple),
    "presets": (list, tuple),
    "messages_per_carrier": int,
    "seed": int,
    "methods": (list, tuple),
    "naive_threshold": (int, float),
    "out_dir": str,
    "svm_self_check": bool,
    "version": int,
}


def config_from_json(text: str) -> ExperimentConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<document>", f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("<document>", "top level must be a JSON object")
    for key, value in doc.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(key, "unknown field")
        expected = _FIELD_TYPES[key]
        if not isinstance(value, expected) or isinstance(value, bool) != (expected is bool):
            raise ConfigError(key, f"wrong type {type(value).__name__}")
    kwargs = dict(doc)
    for name in ("carriers", "presets", "methods"):
        if name in kwargs:
            kwargs[name] = tuple(str(v) for v in kwargs[name])
    for name in ("kappas", "angles"):
        if name in kwargs:
            kwargs[name] = tuple(float(v) for v in kwargs[name])
    cfg = ExperimentConfig(**kwargs)
    cfg.validate()
    return cfg


@dataclass(frozen=True)
class CellRow:
    preset: str
    angle: float
    kappa: float
    method: str
    bits_total: int
    bits_correct: int
    accuracy: float
    runtime_s: float


@dataclass(frozen=True)
class AccuracyReport:
    rows: tuple[CellRow, ...]
    config: ExperimentConfig
    artifact_version: str
    errors: tuple[str, ...] = ()
    per_video: dict = field(default_factory=dict)
    model_params: dict = field(default_factory=dict)  # first fitted model per cell

    def csv_body(self) -> str:
        """Deterministic CSV: excludes wall-clock columns by design."""
        lines = [CSV_HEADER]
        for r in self.rows:
            lines.append(
                f"{r.preset},{r.angle:g},{r.kappa:g},{r.method},"
                f"{r.bits_total},{r.bits_correct},{r.accuracy:.6f}"
            )
        return "\n".join(lines) + "\n"

    def mean_accuracy(self, method: str, angle=None, kappa=None) -> float:
        vals = [
            r.accuracy
            for r in self.rows
            if r.method == method
            and (angle is None or r.angle == angle)
            and (kappa is None or r.kappa == kappa)
        ]
        if not vals:
            raise ValueError(f"no report rows for method {method!r}")
        return float(np.mean(vals))


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def message_bits(seed: int, carrier_idx: int, msg_idx: int, nbits: int) -> BitMessage:
    rng = np.random.default_rng([seed, _STREAM_BITS, carrier_idx, msg_idx])
    return BitMessage(tuple(int(b) for b in rng.integers(0, 2, nbits)))


def _decode(method, cap_pair, layout, ref_hist, kappa, cfg, truth):
    check = cfg.svm_self_check
    if method == METHOD_NAIVE:
        return recover_naive(cap_pair, layout, cfg.naive_threshold, truth)
    if method == METHOD_TWO_STEP:
        return recover_two_step(cap_pair, layout, truth, self_check=check)
    if method == METHOD_OORC:
        return recover_oorc(cap_pair, layout, truth, self_check=check)
    if method == METHOD_HIDDEN_RATEX:
        return recover_hidden_ratex(cap_pair, layout, ref_hist, kappa / 2.0, truth)
    raise ValueError(f"unknown method {method!r}")


def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None) -> AccuracyReport:
    """Run the full sweep and write the report directory atomically.

    Carriers are histogram-equalized before embedding (the hidden-ratex
    protocol applies to every transmitted frame; the other methods decode
    the same captured pairs, keeping the comparison fair). Per-cell
    failures are recorded in the report errors without aborting the run.
    """
    cfg.validate()
    target = out_dir if out_dir is not None else cfg.out_dir

    prepared = []
    for path in cfg.carriers:
        carrier = read_image(path)
        eq, _ = equalize_with_record(carrier)
        layout = layout_grid(
            eq.width, eq.height, cfg.rows, cfg.cols, cfg.ratex_count, cfg.margin_fraction
        )
        # hidden-ratex reference: histogram of the frame actually displayed
        # (equalized carrier with ratex blocks painted in)
        ref_hist = histogram_256(ratex_painted(eq, layout))
        prepared.append((eq, ref_hist, layout))
    nbits = len(prepared[0][2].message_indices)

    rows: list[CellRow] = []
    errors: list[str] = []
    per_video: dict[str, list[float]] = {}
    model_params: dict[str, dict] = {}
    for pi, preset_name in enumerate(cfg.presets):
        for ai, angle in enumerate(cfg.angles):
            for ki, kappa in enumerate(cfg.kappas):
                cell = f"{preset_name}/angle={angle:g}/kappa={kappa:g}"
                try:
                    stats = _run_cell(
                        cfg, prepared, pi, preset_name, ai, angle, ki, kappa, nbits, errors, cell
                    )
                except Exception as exc:  # isolate cell failures
                    errors.append(f"{cell}: {type(exc).__name__}: {exc}")
                    continue
                for method in cfg.methods:
                    total, correct, runtime, videos, first_params = stats[method]
                    if total == 0:
                        continue
                    rows.append(
                        CellRow(
                            preset=preset_name,
                            angle=float(angle),
                            kappa=float(kappa),
                            method=method,
                            bits_total=total,
                            bits_correct=correct,
                            accuracy=correct / total,
                            runtime_s=runtime,
                        )
                    )
                    per_video[f"{cell}/{method}"] = videos
                    if first_params is not None:
                        model_params[f"{cell}/{method}"] = first_params

    report = AccuracyReport(
        rows=tuple(rows),
        config=cfg,
        artifact_version=__version__,
        errors=tuple(errors),
        per_video=per_video,
        model_params=model_params,
    )
    write_report(report, target)
    return report


def _run_cell(cfg, prepared, pi, preset_name, ai, angle, ki, kappa, nbits, errors, cell):
    stats = {m: [0, 0, 0.0, [], None] for m in cfg.methods}
    for ci, (eq, ref_hist, layout) in enumerate(prepared):
        video_counts = {m: [0, 0] for m in cfg.methods}
        for mi in range(cfg.messages_per_carrier):
            truth = message_bits(cfg.seed, ci, mi, nbits)
            pair = embed(eq, truth, kappa, layout)
            cap = []
            for fi, frame in enumerate((pair.original, pair.embedded)):
                model = preset(
                    preset_name,
                    angle_deg=angle,
                    seed=_derive_seed(cfg.seed, _STREAM_NOISE, pi, ai, ki, ci, mi, fi),
                )
                cap.append(apply_cdtf(frame, model))
            cap_pair = (cap[0], cap[1])
            for method in cfg.methods:
                t0 = time.perf_counter()
                try:
                    res = _decode(method, cap_pair, layout, ref_hist, kappa, cfg, truth)
                except Exception as exc:
                    errors.append(f"{cell}/{method}: {type(exc).__name__}: {exc}")
                    continue
                elapsed = time.perf_counter() - t0
                correct = int(round(res.accuracy * len(res.bits)))
                stats[method][0] += len(res.bits)
                stats[method][1] += correct
                stats[method][2] += elapsed
                if stats[method][4] is None:
                    stats[method][4] = res.model_params
                video_counts[method][0] += len(res.bits)
                video_counts[method][1] += correct
        for method in cfg.methods:
            vt, vc = video_counts[method]
            if vt:
                stats[method][3].append(vc / vt)
    return stats


def _atomic_write(path: str, data: bytes) -> None:
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-report-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(report: AccuracyReport, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    _atomic_write(os.path.join(out_dir, "report.csv"), report.csv_body().encode("ascii"))
    meta = {
        "artifact_version": report.artifact_version,
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "config": dataclasses.asdict(report.config),
        "errors": list(report.errors),
        "runtimes_s": {
            f"{r.preset}/angle={r.angle:g}/kappa={r.kappa:g}/{r.method}": round(r.runtime_s, 4)
            for r in report.rows
        },
        "per_video_accuracy": {k: [round(a, 6) for a in v] for k, v in report.per_video.items()},
    }
    _atomic_write(
        os.path.join(out_dir, "run_meta.json"),
        json.dumps(meta, indent=2, sort_keys=True).encode("ascii"),
    )


def read_report_rows(report_dir: str) -> list[dict]:
    with open(os.path.join(report_dir, "report.csv"), "r", encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("report.csv header does not match the fixed schema")
    rows = []
    for ln in lines[1:]:
        preset_name, angle, kappa, method, total, correct, acc = ln.split(",")
        rows.append(
            {
                "preset": preset_name,
                "angle": float(angle),
                "kappa": float(kappa),
                "method": method,
                "bits_total": int(total),
                "bits_correct": int(correct),
                "accuracy": float(acc),
            }
        )
    return rows


def render_tables(rows: list[dict], fmt: str = "md") -> str:
    """Pivot report rows into per-(angle, kappa) tables, presets by methods."""
    if fmt not in ("md", "csv"):
        raise ValueError("format must be 'md' or 'csv'")
    groups: dict[tuple[float, float], dict[str, dict[str, float]]] = {}
    preset_order: list[str] = []
    method_order: list[str] = []
    for r in rows:
        key = (r["angle"], r["kappa"])
        groups.setdefault(key, {}).setdefault(r["preset"], {})[r["method"]] = r["accuracy"]
        if r["preset"] not in preset_order:
            preset_order.append(r["preset"])
        if r["method"] not in method_order:
            method_order.append(r["method"])
    method_order = [m for m in ALL_METHODS if m in method_order]

    out: list[str] = []
    for (angle, kappa), table in sorted(groups.items()):
        presets_here = [p for p in preset_order if p in table]
        means = {
            m: np.mean([table[p][m] for p in presets_here if m in table[p]])
            for m in method_order
        }
        if fmt == "md":
            out.append(f"### angle={angle:g} deg, kappa=+{kappa:g}")
            out.append("| preset | " + " | ".join(method_order) + " |")
            out.append("|" + "---|" * (len(method_order) + 1))
            for p in presets_here:
                cells = [f"{table[p].get(m, float('nan')):.4f}" for m in method_order]
                out.append(f"| {p} | " + " | ".join(cells) + " |")
            out.append("| average | " + " | ".join(f"{means[m]:.4f}" for m in method_order) + " |")
            out.append("")
        else:
            if not out:
                out.append("angle,kappa,preset," + ",".join(method_order))
            for p in presets_here:
                cells = [f"{table[p].get(m, float('nan')):.6f}" for m in method_order]
                out.append(f"{angle:g},{kappa:g},{p}," + ",".join(cells))
            out.append(
                f"{angle:g},{kappa:g},average," + ",".join(f"{means[m]:.6f}" for m in method_order)
            )
    return "\n".join(out) + "\n"


def synthetic_carrier(width: int = 512, height: int = 512, seed: int = 0) -> IntensityImage:
    """Deterministic pseudo-natural grayscale carrier.

    Low-frequency waves and blobs give image-scale structure; a random-phase
    mid-frequency field adds the fine texture natural display content has,
    so intensity extremes are never confined to a single message block
    (a solid near-white block would absorb any additive message).
    """
    rng = np.random.default_rng([seed, 3])
    yy, xx = np.mgrid[0:height, 0:width]
    xn, yn = xx / width, yy / height
    img = np.zeros((height, width))
    for _ in range(6):
        fx, fy = rng.uniform(0.3, 3.0, size=2)
        phx, phy = rng.uniform(0.0, 1.0, size=2)
        img += rng.uniform(12.0, 40.0) * np.cos(2 * np.pi * (fx * xn + phx)) * np.cos(
            2 * np.pi * (fy * yn + phy)
        )
    for _ in range(5):
        cx, cy = rng.uniform(0.1, 0.9, size=2)
        s = rng.uniform(0.05, 0.25)
        img += rng.uniform(-60.0, 60.0) * np.exp(
            -((xn - cx) ** 2 + (yn - cy) ** 2) / (2 * s * s)
        )
    for _ in range(32):
        f = rng.uniform(4.0, 28.0)
        angle = rng.uniform(0.0, np.pi)
        phase = rng.uniform(0.0, 1.0)
        img += rng.uniform(4.0, 10.0) * np.cos(
            2 * np.pi * (f * (np.cos(angle) * xn + np.sin(angle) * yn) + phase)
        )
    lo, hi = np.percentile(img, [0.5, 99.5])
    img = (img - lo) / max(hi - lo, 1e-9) * 235.0 + 10.0
    return quantize(IntensityImage(np.clip(img, 0.0, 255.0)))


def make_default_carriers(directory: str, count: int = 5, size: int = 512) -> tuple[str, ...]:
    """Write the default synthetic carrier set as PGM files; returns their paths."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for i in range(count):
        path = os.path.join(directory, f"carrier_{i:02d}.pgm")
        write_image(synthetic_carrier(size, size, seed=100 + i), path)
        paths.append(path)
    return tuple(paths)


def default_config(carriers: tuple[str, ...], out_dir: str, **overrides) -> ExperimentConfig:
    """The frozen default sweep: 9 presets x 2 angles x 2 kappas x 4 methods."""
    cfg = ExperimentConfig(carriers=tuple(carriers), out_dir=out_dir, **overrides)
    cfg.validate()
    return cfg
