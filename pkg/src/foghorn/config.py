"""Shared JSON configuration for the batch tools.

Example::

    {
      "camera": {"baseline": 0.209313, "focal_length": 2262.52},
      "fog": {"atmospheric_light": null, "allow_haze": false},
      "completion": {"k": 2048, "compactness": 10, "ransac_iters": 500,
                     "inlier_tol": 0.5, "min_valid_fraction": 0.2},
      "filter": {"mu": 5, "sigma_s": 20, "sigma_c": 10},
      "density_model": null,
      "workers": null,
      "seed": 0
    }

Every section is optional. ``workers: null`` means one per available core.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .depth_completion import CompletionParams
from .dual_bilateral import DEFAULT_MAX_GRID_BYTES, FilterParams
from .imaging import CITYSCAPES_CAMERA, CameraModel

CONFIG_ENV = "FOGHORN_CONFIG"


class ConfigError(ValueError):
    pass


def _build(cls, data, section):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"config section '{section}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in '{section}': {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{section}' section: {exc}") from exc


@dataclass(frozen=True)
class FogOptions:
    atmospheric_light: tuple[float, float, float] | None = None
    allow_haze: bool = False


@dataclass(frozen=True)
class ToolConfig:
    camera: CameraModel = CITYSCAPES_CAMERA
    fog: FogOptions = field(default_factory=FogOptions)
    completion: CompletionParams = field(default_factory=CompletionParams)
    filter: FilterParams = field(default_factory=FilterParams)
    density_model: str | None = None
    workers: int | None = None
    seed: int = 0
    max_grid_bytes: int = DEFAULT_MAX_GRID_BYTES

    @property
    def parallelism(self) -> int:
        return self.workers if self.workers else (os.cpu_count() or 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("workers")  # never affects outputs
        return d

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "ToolConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        light = (data.get("fog") or {}).get("atmospheric_light")
        fog = _build(FogOptions, data.get("fog"), "fog")
        if light is not None:
            if len(light) != 3 or not all(0 <= float(v) <= 1 for v in light):
                raise ConfigError("fog.atmospheric_light must be three values in [0, 1]")
            fog = FogOptions(tuple(float(v) for v in light), fog.allow_haze)
        model = data.get("density_model")
        if model is not None and base_dir is not None and not Path(model).is_absolute():
            model = str(base_dir / model)
        if model is not None and not Path(model).is_file():
            raise ConfigError(f"density model not found: {model}")
        workers = data.get("workers")
        if workers is not None and int(workers) < 1:
            raise ConfigError("workers must be a positive integer")
        return cls(
            camera=_build(CameraModel, data.get("camera"), "camera") if "camera" in data else CITYSCAPES_CAMERA,
            fog=fog,
            completion=_build(CompletionParams, data.get("completion"), "completion"),
            filter=_build(FilterParams, data.get("filter"), "filter"),
            density_model=model,
            workers=None if workers is None else int(workers),
            seed=int(data.get("seed", 0)),
            max_grid_bytes=int(data.get("max_grid_bytes", DEFAULT_MAX_GRID_BYTES)),
        )


def load_config(path=None) -> ToolConfig:
    """Read ``path``, else ``$FOGHORN_CONFIG``, else return defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is None:
        return ToolConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return ToolConfig.from_dict(data, base_dir=path.parent)
