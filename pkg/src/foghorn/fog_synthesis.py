"""Atmospheric light, fog compositing and the full scene simulation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import minimum_filter

from .depth_completion import CompletionParams, complete_transmittance
from .dual_bilateral import DEFAULT_MAX_GRID_BYTES, FilterParams, filter_grid
from .imaging import CameraModel, as_rgb, linear_to_srgb, luminance, srgb_to_lab, srgb_to_linear

MOR_CONTRAST = 2.996  # -ln(0.05): 5% contrast threshold
MIN_FOG_BETA = MOR_CONTRAST / 1000.0  # MOR below 1 km
DARK_CHANNEL_WINDOW = 15


class FogDensityError(ValueError):
    pass


def mor_from_beta(beta: float) -> float:
    """Meteorological optical range (meters) of homogeneous fog."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return MOR_CONTRAST / beta


def beta_from_mor(mor: float) -> float:
    if not mor > 0:
        raise ValueError(f"MOR must be positive, got {mor}")
    return MOR_CONTRAST / mor


def validate_beta(beta: float, allow_haze: bool = False) -> float:
    """Accept 0 (clear) or a fog density with MOR under 1 km."""
    beta = float(beta)
    if not np.isfinite(beta) or beta < 0:
        raise FogDensityError(f"beta must be a non-negative number, got {beta}")
    if 0 < beta < MIN_FOG_BETA and not allow_haze:
        raise FogDensityError(
            f"beta={beta:g} gives MOR {mor_from_beta(beta):.0f} m, which is haze, not fog: "
            f"fog requires MOR < 1 km, i.e. beta >= 2.996e-3 1/m (allow_haze, or --allow-haze on the command line, overrides this)"
        )
    return beta


@dataclass(frozen=True)
class FogConfig:
    beta: float
    atmospheric_light: tuple[float, float, float] | None = None  # None: estimate from the image
    allow_haze: bool = False

    def __post_init__(self):
        validate_beta(self.beta, self.allow_haze)
        if self.atmospheric_light is not None:
            light = np.asarray(self.atmospheric_light, dtype=np.float64)
            if light.shape != (3,) or light.min() < 0 or light.max() > 1:
                raise ValueError("atmospheric light must be three values in [0, 1]")


def dark_channel(img, window: int = DARK_CHANNEL_WINDOW) -> np.ndarray:
    """Per-pixel channel minimum followed by a ``window`` x ``window`` minimum filter."""
    return minimum_filter(np.asarray(img, dtype=np.float64).min(axis=2), size=window, mode="nearest")


def estimate_atmospheric_light(img, quantile: float = 0.001, override=None) -> np.ndarray:
    """Color of the most luminous pixel among the top ``quantile`` of the dark channel.

    An explicit ``override`` is returned unchanged.
    """
    if override is not None:
        return np.asarray(override, dtype=np.float64)
    img = as_rgb(img)
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise ValueError("cannot estimate atmospheric light of an empty image")
    if not 0 < quantile <= 1:
        raise ValueError(f"quantile must lie in (0, 1], got {quantile}")
    dark = dark_channel(img).ravel()
    n = max(1, int(np.ceil(quantile * dark.size)))
    # stable ordering keeps ties deterministic
    candidates = np.argsort(-dark, kind="stable")[:n]
    lum = luminance(img.reshape(-1, 3)[candidates])
    return img.reshape(-1, 3)[candidates[int(np.argmax(lum))]].copy()


def synthesize_fog(clear, t, light) -> np.ndarray:
    """Blend ``clear * t + light * (1 - t)`` in linear RGB and re-encode to sRGB."""
    clear = as_rgb(clear)
    t = np.asarray(t, dtype=np.float64)
    if t.shape != clear.shape[:2]:
        raise ValueError(f"transmittance {t.shape} does not match image {clear.shape[:2]}")
    light = np.asarray(light, dtype=np.float64).reshape(1, 1, 3)
    tt = t[..., None]
    foggy = srgb_to_linear(clear) * tt + srgb_to_linear(light) * (1.0 - tt)
    out = np.clip(linear_to_srgb(foggy), 0.0, 1.0)
    # exact pass-through where nothing is attenuated or the scene already equals the light
    out = np.where(tt == 1.0, clear, out)
    return np.where(np.all(clear == light, axis=2, keepdims=True), np.broadcast_to(light, clear.shape), out)


def simulate_scene(
    clear,
    disparity,
    labels,
    cam: CameraModel,
    fog: FogConfig,
    completion: CompletionParams = CompletionParams(),
    filt: FilterParams = FilterParams(),
    seed: int = 0,
    workers: int = 1,
    max_grid_bytes: int = DEFAULT_MAX_GRID_BYTES,
    return_transmittance: bool = False,
):
    """Render fog onto a clear scene: complete depth, filter t, composite.

    Returns the foggy image, or ``(foggy, t)`` with ``return_transmittance``.
    """
    clear = as_rgb(clear)
    labels = np.asarray(labels)
    if labels.shape != clear.shape[:2] or np.shape(disparity) != clear.shape[:2]:
        raise ValueError(
            f"dimension mismatch: image {clear.shape[:2]}, disparity {np.shape(disparity)}, labels {labels.shape}"
        )
    if fog.beta == 0:
        t = np.ones(clear.shape[:2])
        foggy = clear.copy()
        return (foggy, t) if return_transmittance else foggy
    lab = srgb_to_lab(clear)
    t_hat = complete_transmittance(disparity, lab, cam, fog.beta, completion, seed=seed, workers=workers)
    t = filter_grid(t_hat, lab, labels, filt, workers=workers, max_grid_bytes=max_grid_bytes)
    light = estimate_atmospheric_light(clear, override=fog.atmospheric_light)
    foggy = synthesize_fog(clear, t, light)
    return (foggy, t) if return_transmittance else foggy
