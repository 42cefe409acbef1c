"""Simulated camera-display transfer function (CDTF).

The channel composes three monotone power laws — display nonlinearity,
observation-angle attenuation, camera response — then adds Gaussian sensor
noise and quantizes. Stand-in curves for device pairs live in a versioned
preset catalog (presets.json).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources

import numpy as np

from .image import IntensityImage, quantize


class PresetError(KeyError):
    """Unknown preset identifier."""


@dataclass(frozen=True)
class CdtfModel:
    display_gamma: float
    angle_deg: float
    falloff_power: float
    camera_gamma: float
    sensor_noise_sigma: float
    quantize_output: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.display_gamma <= 0 or self.camera_gamma <= 0:
            raise ValueError("gammas must be positive")
        if self.falloff_power < 0:
            raise ValueError("falloff_power must be non-negative")
        if not (0.0 <= self.angle_deg < 90.0):
            raise ValueError("angle_deg must lie in [0, 90)")
        if self.sensor_noise_sigma < 0:
            raise ValueError("sensor_noise_sigma must be non-negative")

    def with_view(self, angle_deg: float | None = None, seed: int | None = None) -> "CdtfModel":
        """Copy with a different observation angle and/or noise seed."""
        kw = {}
        if angle_deg is not None:
            kw["angle_deg"] = float(angle_deg)
        if seed is not None:
            kw["seed"] = int(seed)
        return replace(self, **kw)


def forward(value, model: CdtfModel):
    """Noiseless channel: 255 * ((cos(angle)^p * (v/255)^dg))^(1/cg).

    Strictly increasing in v; black maps to black, frontal white to white.
    Accepts scalars or arrays.
    """
    v = np.asarray(value, dtype=np.float64)
    attenuation = np.cos(np.deg2rad(model.angle_deg)) ** model.falloff_power
    display = (v / 255.0) ** model.display_gamma
    out = 255.0 * (attenuation * display) ** (1.0 / model.camera_gamma)
    return float(out) if np.isscalar(value) else out


def apply_cdtf(img: IntensityImage, model: CdtfModel) -> IntensityImage:
    """Simulate capture: forward curve, seeded Gaussian noise, clamp, quantize.

    Deterministic for a fixed (model, seed); the entire noise field is drawn
    in one call so results do not depend on evaluation order.
    """
    out = forward(img.pixels, model)
    if model.sensor_noise_sigma > 0:
        rng = np.random.default_rng(model.seed)
        out = out + rng.normal(0.0, model.sensor_noise_sigma, out.shape)
    captured = IntensityImage(np.clip(out, 0.0, 255.0))
    return quantize(captured) if model.quantize_output else captured


@lru_cache(maxsize=1)
def _catalog() -> dict:
    text = resources.files("cdmsg").joinpath("presets.json").read_text("utf-8")
    return json.loads(text)


def catalog_version() -> int:
    return int(_catalog()["version"])


def list_presets() -> tuple[str, ...]:
    return tuple(_catalog()["presets"].keys())


def preset(name: str, angle_deg: float = 0.0, seed: int = 0) -> CdtfModel:
    """Look up a catalog entry; angle and seed come from the run, not the catalog."""
    entries = _catalog()["presets"]
    if name not in entries:
        known = ", ".join(sorted(entries))
        raise PresetError(f"unknown preset {name!r}; known presets: {known}")
    e = entries[name]
    return CdtfModel(
        display_gamma=float(e["display_gamma"]),
        angle_deg=float(angle_deg),
        falloff_power=float(e["falloff_power"]),
        camera_gamma=float(e["camera_gamma"]),
        sensor_noise_sigma=float(e["sensor_noise_sigma"]),
        seed=int(seed),
    )


DEVICE_PRESETS = tuple(f"d{i}c{j}" for i in (1, 2, 3) for j in (1, 2, 3))
