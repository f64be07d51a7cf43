"""PNG readers and writers for images, disparity, labels and transmittance."""
from __future__ import annotations

import os
from pathlib import Path

import cv2
import numpy as np


def _read_raw(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image: {path}")
    data = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if data is None:
        raise ValueError(f"could not decode {path}")
    return data


def _write_raw(path, data: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp.png")
    if not cv2.imwrite(str(tmp), data, [cv2.IMWRITE_PNG_COMPRESSION, 6]):
        raise OSError(f"could not write {path}")
    os.replace(tmp, path)


def read_rgb(path) -> np.ndarray:
    """Read an 8- or 16-bit RGB(A) PNG as float64 in [0, 1]."""
    data = _read_raw(path)
    scale = 65535.0 if data.dtype == np.uint16 else 255.0
    if data.ndim == 2:
        data = np.repeat(data[..., None], 3, axis=2)
    else:
        data = cv2.cvtColor(data[..., :3], cv2.COLOR_BGR2RGB)
    return data.astype(np.float64) / scale


def write_rgb(path, img, bit_depth: int = 8) -> None:
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    if bit_depth == 8:
        data = np.rint(img * 255.0).astype(np.uint8)
    elif bit_depth == 16:
        data = np.rint(img * 65535.0).astype(np.uint16)
    else:
        raise ValueError(f"bit depth must be 8 or 16, got {bit_depth}")
    _write_raw(path, cv2.cvtColor(data, cv2.COLOR_RGB2BGR))


def read_disparity(path) -> np.ndarray:
    """Cityscapes disparity: raw 0 is missing, otherwise ``(raw - 1) / 256`` px."""
    raw = _read_raw(path)
    if raw.ndim != 2:
        raise ValueError(f"disparity PNG must be single-channel: {path}")
    raw = raw.astype(np.float64)
    out = np.full(raw.shape, np.nan)
    valid = raw > 0
    out[valid] = (raw[valid] - 1.0) / 256.0
    return out


def write_disparity(path, disparity) -> None:
    d = np.asarray(disparity, dtype=np.float64)
    raw = np.zeros(d.shape, dtype=np.uint16)
    valid = np.isfinite(d)
    raw[valid] = np.clip(np.rint(d[valid] * 256.0 + 1.0), 1, 65535).astype(np.uint16)
    _write_raw(path, raw)


def read_labels(path) -> np.ndarray:
    raw = _read_raw(path)
    if raw.ndim != 2:
        raise ValueError(f"label PNG must be single-channel: {path}")
    return raw.astype(np.int32)


def write_labels(path, labels) -> None:
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 65535:
        raise ValueError("label ids must fit in 16 bits")
    dtype = np.uint8 if labels.max(initial=0) < 256 else np.uint16
    _write_raw(path, labels.astype(dtype))


def write_transmittance(path, t) -> None:
    """Store a transmittance map as a 16-bit grayscale PNG."""
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    _write_raw(path, np.rint(t * 65535.0).astype(np.uint16))


def read_transmittance(path) -> np.ndarray:
    return _read_raw(path).astype(np.float64) / 65535.0


def list_pngs(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"no such directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png" and not p.name.endswith(".tmp.png"))
