"""Fog density regression and ranking.

Five hand-picked statistics respond monotonically to fog: airlight raises the
dark channel and the share of bright pixels, and it flattens contrast,
gradients and saturation. A ridge regressor on those statistics, trained on
renderings with known attenuation, stands in for a learned density network
behind the same image -> beta contract.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from .fog_synthesis import dark_channel
from .imaging import as_rgb, luminance

FEATURE_NAMES = (
    "dark_channel_mean",
    "local_contrast_mean",
    "gradient_magnitude_mean",
    "bright_fraction",
    "saturation_mean",
)
FEATURE_SCHEMA_VERSION = 1
CONTRAST_WINDOW = 7
BRIGHT_THRESHOLD = 0.7


class NotFittedError(RuntimeError):
    pass


def local_contrast(lum, window: int = CONTRAST_WINDOW) -> np.ndarray:
    """Standard deviation of every fully contained ``window`` x ``window`` patch."""
    lum = np.asarray(lum, dtype=np.float64)
    h, w = lum.shape
    if h < window or w < window:
        return np.array([lum.std()])
    centered = lum - lum.mean()
    mean = uniform_filter(centered, window, mode="constant")
    mean_sq = uniform_filter(centered**2, window, mode="constant")
    r = window // 2
    var = (mean_sq - mean**2)[r : h - r, r : w - r]
    return np.sqrt(np.maximum(var, 0.0))


def saturation(img) -> np.ndarray:
    """HSV saturation; black pixels have saturation 0."""
    img = np.asarray(img, dtype=np.float64)
    hi = img.max(axis=2)
    lo = img.min(axis=2)
    return np.divide(hi - lo, hi, out=np.zeros_like(hi), where=hi > 0)


def extract_features(img) -> np.ndarray:
    img = as_rgb(img)
    lum = luminance(img)
    gy, gx = np.gradient(lum)
    return np.array(
        [
            dark_channel(img).mean(),
            local_contrast(lum).mean(),
            np.hypot(gx, gy).mean(),
            (lum > BRIGHT_THRESHOLD).mean(),
            saturation(img).mean(),
        ]
    )


@dataclass
class DensityModel:
    weights: np.ndarray | None = None
    bias: float = 0.0
    ridge: float = 0.0
    feature_names: tuple[str, ...] = FEATURE_NAMES
    schema_version: int = FEATURE_SCHEMA_VERSION
    extra: dict = field(default_factory=dict)

    @property
    def fitted(self) -> bool:
        return self.weights is not None

    def predict(self, features) -> np.ndarray:
        if not self.fitted:
            raise NotFittedError("density model has not been fitted")
        raw = np.asarray(features, dtype=np.float64) @ self.weights + self.bias
        return np.maximum(raw, 0.0)

    def to_json(self) -> str:
        if not self.fitted:
            raise NotFittedError("refusing to save an unfitted density model")
        payload = {
            "schema_version": self.schema_version,
            "features": list(self.feature_names),
            "weights": [float(v) for v in self.weights],
            "bias": float(self.bias),
            "ridge": float(self.ridge),
        }
        payload.update(self.extra)
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DensityModel":
        data = json.loads(text)
        if data.get("schema_version") != FEATURE_SCHEMA_VERSION:
            raise ValueError(f"unsupported density model schema {data.get('schema_version')!r}")
        if tuple(data["features"]) != FEATURE_NAMES:
            raise ValueError("density model was trained on a different feature set")
        known = {"schema_version", "features", "weights", "bias", "ridge"}
        return cls(
            weights=np.asarray(data["weights"], dtype=np.float64),
            bias=float(data["bias"]),
            ridge=float(data["ridge"]),
            extra={k: v for k, v in data.items() if k not in known},
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DensityModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def fit_density_regressor(features, betas, ridge: float = 1e-3, sample_weight=None) -> DensityModel:
    """Weighted ridge regression of beta on standardized features.

    The penalty acts on the standardized coefficients; the returned weights are
    mapped back to raw feature units. Duplicating a sample is the same as
    doubling its ``sample_weight``.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(betas, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("features must be (n, d) with one beta per row")
    n, d = X.shape
    if n < d + 1:
        raise ValueError(f"need at least {d + 1} samples for {d} features, got {n}")
    if ridge < 0:
        raise ValueError(f"ridge must be non-negative, got {ridge}")
    sw = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    if sw.shape != (n,) or np.any(sw < 0) or sw.sum() <= 0:
        raise ValueError("sample weights must be non-negative with a positive sum")

    total = sw.sum()
    mean = sw @ X / total
    scale = np.sqrt(sw @ (X - mean) ** 2 / total)
    scale[scale == 0] = 1.0
    Z = (X - mean) / scale
    y_mean = sw @ y / total
    gram = Z.T @ (Z * sw[:, None])
    if ridge == 0 and np.linalg.matrix_rank(gram) < d:
        raise np.linalg.LinAlgError("features are rank deficient; use a positive ridge")
    coef = np.linalg.solve(gram + ridge * np.eye(d), Z.T @ (sw * (y - y_mean)))
    weights = coef / scale
    return DensityModel(weights=weights, bias=float(y_mean - mean @ weights), ridge=float(ridge))


def estimate_beta(model: DensityModel, img) -> float:
    if model is None or not model.fitted:
        raise NotFittedError("density model has not been fitted")
    return float(model.predict(extract_features(img)))


@dataclass(frozen=True)
class RankedEntry:
    image: str
    beta_hat: float
    percentile: float


def rank_estimates(estimates: dict[str, float]) -> list[RankedEntry]:
    """Sort ascending by estimate, ties by id; percentile = 100 * rank / (n - 1)."""
    if not estimates:
        raise ValueError("cannot rank an empty dataset")
    order = sorted(estimates, key=lambda k: (estimates[k], k))
    n = len(order)
    return [
        RankedEntry(k, float(estimates[k]), 0.0 if n == 1 else 100.0 * i / (n - 1))
        for i, k in enumerate(order)
    ]


def rank_dataset(model: DensityModel, images, workers: int = 1, loader=None) -> list[RankedEntry]:
    """Estimate beta for every image in ``images`` (mapping id -> image) and rank them.

    Values may be arrays or paths; ``loader`` turns a value into an RGB array.
    """
    if model is None or not model.fitted:
        raise NotFittedError("density model has not been fitted")
    ids = sorted(images)

    def one(key):
        img = images[key]
        return estimate_beta(model, loader(img) if loader is not None else img)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            betas = list(pool.map(one, ids))
    else:
        betas = [one(k) for k in ids]
    return rank_estimates(dict(zip(ids, betas)))


def pairwise_agreement(ranked: list[RankedEntry], truth: dict[str, float], min_gap: float = 20.0) -> float:
    """Fraction of pairs at least ``min_gap`` percentiles apart whose order matches ``truth``.

    Pairs with equal true values carry no ordering and are skipped.
    """
    agree = total = 0
    for i, a in enumerate(ranked):
        for b in ranked[i + 1 :]:
            if abs(b.percentile - a.percentile) < min_gap or truth[a.image] == truth[b.image]:
                continue
            total += 1
            agree += truth[a.image] < truth[b.image]
    if total == 0:
        raise ValueError("no pairs satisfy the percentile gap")
    return agree / total


def write_ranking(entries: list[RankedEntry], stream) -> None:
    """JSON lines: {"image", "beta_hat", "percentile"}."""
    for e in entries:
        stream.write(json.dumps({"image": e.image, "beta_hat": e.beta_hat, "percentile": e.percentile}) + "\n")


def read_ranking(path) -> list[RankedEntry]:
    entries = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            d = json.loads(line)
            entries.append(RankedEntry(d["image"], float(d["beta_hat"]), float(d["percentile"])))
    return entries
