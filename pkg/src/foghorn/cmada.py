"""Curriculum adaptation datasets: sweeps, light-fog selection, mixed manifests.

The curriculum runs in seven stages:

1. render the clear dataset at several fog densities;
2. fit a density regressor on those renderings;
3. rank the real foggy images by estimated density;
4. emit a manifest of light synthetic fog for the first fine-tuning round;
5. pick the lightest real images and pair them with the labels an external
   model (trained on stage 4) produced for them;
6. render the dense synthetic set;
7. emit the mixed manifest: dense synthetic and light real in a 1:w stream.

Training itself happens outside this package; the contract with the trainer
is the manifests and, in the other direction, a directory of label PNGs.

Dataset layout. A clear dataset has ``images/``, ``disparity/`` and
``labels/`` (plus optional ``instances/``) holding PNGs that share a file
stem. A rendered dataset has ``images/`` and ``labels/``. A real dataset is
a directory of images.
"""
from __future__ import annotations

import hashlib
import json
import os
import shutil
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .config import ToolConfig
from .fog_density import DensityModel, extract_features, fit_density_regressor, rank_dataset, write_ranking
from .fog_synthesis import FogConfig, simulate_scene, validate_beta
from .imaging import instance_aware_labels

SYNTH_LIGHT = "SYNTH_LIGHT"
SYNTH_DENSE = "SYNTH_DENSE"
REAL_LIGHT = "REAL_LIGHT"
SOURCES = (SYNTH_LIGHT, SYNTH_DENSE, REAL_LIGHT)
DENSITY_BETAS = (0.0, 0.005, 0.01, 0.02)
_MARKER = ".foghorn-stage.json"


class CurriculumError(RuntimeError):
    pass


def beta_dirname(beta: float) -> str:
    return f"beta_{beta:g}"


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


def _image_seed(seed: int, image_id: str) -> int:
    return (seed * 1_000_003 + zlib.crc32(image_id.encode())) % (2**32)


def _stage_cached(directory: Path, key: str) -> bool:
    marker = directory / _MARKER
    if not marker.is_file():
        return False
    return json.loads(marker.read_text()).get("key") == key


def _mark_stage(directory: Path, key: str) -> None:
    (directory / _MARKER).write_text(json.dumps({"key": key}) + "\n")


def scan_clear_dataset(root) -> dict[str, dict[str, Path]]:
    """Map image id to its image, disparity, labels and optional instances."""
    root = Path(root)
    out = {}
    for img in io.list_pngs(root / "images"):
        entry = {"image": img}
        for kind in ("disparity", "labels"):
            p = root / kind / img.name
            if not p.is_file():
                raise FileNotFoundError(f"missing {kind} for image {img.stem}: {p}")
            entry[kind] = p
        inst = root / "instances" / img.name
        if inst.is_file():
            entry["instances"] = inst
        out[img.stem] = entry
    if not out:
        raise FileNotFoundError(f"no images under {root / 'images'}")
    return out


def _render_one(image_id, entry, beta, cfg: ToolConfig, out_dir: Path):
    clear = io.read_rgb(entry["image"])
    disparity = io.read_disparity(entry["disparity"])
    classes = io.read_labels(entry["labels"])
    instances = io.read_labels(entry["instances"]) if "instances" in entry else None
    reference = instance_aware_labels(classes, instances)
    fog = FogConfig(beta, cfg.fog.atmospheric_light, allow_haze=cfg.fog.allow_haze)
    foggy = simulate_scene(
        clear, disparity, reference, cfg.camera, fog, cfg.completion, cfg.filter,
        seed=_image_seed(cfg.seed, image_id), max_grid_bytes=cfg.max_grid_bytes,
    )
    io.write_rgb(out_dir / "images" / entry["image"].name, foggy)
    (out_dir / "labels").mkdir(parents=True, exist_ok=True)
    shutil.copyfile(entry["labels"], out_dir / "labels" / entry["labels"].name)


def generate_sweep(clear_dataset, betas, out_root, cfg: ToolConfig = ToolConfig()) -> list[Path]:
    """Render the clear dataset once per beta into ``out_root/beta_<b>/``.

    A rendered directory is reused when its inputs and settings hash to the
    same key as the last run.
    """
    betas = [validate_beta(b, cfg.fog.allow_haze) for b in betas]
    dataset = scan_clear_dataset(clear_dataset)
    out_root = Path(out_root)
    inputs = {k: {kind: _sha256_file(p) for kind, p in v.items()} for k, v in sorted(dataset.items())}
    settings = cfg.to_dict()
    settings.pop("density_model")
    paths = []
    for beta in betas:
        out_dir = out_root / beta_dirname(beta)
        key = _digest({"inputs": inputs, "beta": beta, "config": settings})
        if not _stage_cached(out_dir, key):
            if out_dir.exists():
                shutil.rmtree(out_dir)
            out_dir.mkdir(parents=True)
            jobs = sorted(dataset.items())
            if cfg.parallelism > 1:
                with ThreadPoolExecutor(cfg.parallelism) as pool:
                    list(pool.map(lambda kv: _render_one(kv[0], kv[1], beta, cfg, out_dir), jobs))
            else:
                for k, v in jobs:
                    _render_one(k, v, beta, cfg, out_dir)
            _mark_stage(out_dir, key)
        paths.append(out_dir)
    index = {"betas": {f"{b:g}": beta_dirname(b) for b in betas}}
    (out_root / "sweep.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    return paths


def read_sweep(root) -> dict[float, Path]:
    root = Path(root)
    index = json.loads((root / "sweep.json").read_text())
    return {float(b): root / d for b, d in index["betas"].items()}


def _features_for(paths, workers):
    def one(p):
        return extract_features(io.read_rgb(p))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, paths))
    return [one(p) for p in paths]


def train_density_model(sweep: dict[float, Path], ridge: float = 1e-3, workers: int = 1) -> DensityModel:
    """Fit the density regressor on every image of every rendered density."""
    paths, betas = [], []
    for beta, directory in sorted(sweep.items()):
        imgs = io.list_pngs(Path(directory) / "images")
        paths += imgs
        betas += [beta] * len(imgs)
    if not paths:
        raise FileNotFoundError("the sweep contains no images")
    model = fit_density_regressor(np.array(_features_for(paths, workers)), np.array(betas), ridge)
    model.extra["trained_betas"] = sorted(set(betas))
    return model


def select_light_subset(ranked, count: int) -> list[str]:
    """Ids of the ``count`` images with the lowest estimated density, in rank order."""
    if not 0 <= count <= len(ranked):
        raise ValueError(f"subset size must be in [0, {len(ranked)}], got {count}")
    return [e.image for e in ranked[:count]]


def select_light_by_beta(ranked, max_beta: float) -> list[str]:
    return [e.image for e in ranked if e.beta_hat <= max_beta]


def ingest_noisy_labels(images, label_dir, num_classes: int = 19, void: int = 0) -> list[tuple[Path, Path]]:
    """Pair each image with ``label_dir/<stem>.png`` and validate the label map."""
    label_dir = Path(label_dir)
    if not label_dir.is_dir():
        raise FileNotFoundError(f"noisy label directory not found: {label_dir}")
    pairs = []
    for img in map(Path, images):
        lbl = label_dir / (img.stem + ".png")
        if not lbl.is_file():
            raise FileNotFoundError(f"no noisy label for image {img.stem}: expected {lbl}")
        labels = io.read_labels(lbl)
        shape = io.read_rgb(img).shape[:2]
        if labels.shape != shape:
            raise ValueError(f"label {lbl} is {labels.shape}, image {img} is {shape}")
        ids = np.unique(labels)
        bad = ids[((ids < 1) | (ids > num_classes)) & (ids != void)]
        if bad.size:
            raise ValueError(f"label {lbl} has ids outside 1..{num_classes} and void {void}: {bad.tolist()}")
        pairs.append((img, lbl))
    return pairs


@dataclass(frozen=True)
class ManifestEntry:
    image: str
    label: str
    source: str
    weight: float = 1.0


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    metadata: dict = field(default_factory=dict)

    def write(self, path) -> Path:
        """Write JSON lines to ``path`` and the metadata to ``<path stem>.meta.json``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for e in self.entries:
                f.write(json.dumps(asdict(e), sort_keys=True) + "\n")
        meta = path.with_name(path.stem + ".meta.json")
        meta.write_text(json.dumps(self.metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        path = Path(path)
        entries = [ManifestEntry(**json.loads(line)) for line in path.read_text().splitlines() if line.strip()]
        meta = json.loads(path.with_name(path.stem + ".meta.json").read_text())
        return cls(entries, meta)


def interleave(w: float, length: int) -> list[bool]:
    """Source pattern of ``length`` draws, True for a real sample.

    Each step takes whichever source keeps ``w * #synthetic - #real`` closest
    to zero, preferring synthetic on ties, so every prefix tracks the 1:w ratio.
    """
    pattern = []
    err = 0.0
    for _ in range(length):
        if abs(err - 1.0) < abs(err + w):
            pattern.append(True)
            err -= 1.0
        else:
            pattern.append(False)
            err += w
    return pattern


def build_mixed_manifest(synth_dense, real_light, w: float, length: int | None = None,
                         shuffle_seed: int | None = None) -> DatasetManifest:
    """Mix labeled synthetic pairs and pseudo-labeled real pairs as 1:w.

    Both lists are cycled when the stream is longer than they are. The default
    length shows every synthetic pair once. ``l`` and ``u`` in the metadata
    are the sizes of the two input sets, and ``lambda = u / l * w`` is the
    loss weight the stream realizes.
    """
    if w < 0:
        raise ValueError(f"w must be non-negative, got {w}")
    synth_dense = list(synth_dense)
    real_light = list(real_light)
    if not synth_dense or not real_light:
        raise ValueError("both synthetic and real sets must be non-empty")
    l, u = len(synth_dense), len(real_light)
    if length is None:
        length = _length_covering(l, w)
    pattern = interleave(w, length)
    n_real = sum(pattern)
    synth_order = list(range(l))
    real_order = list(range(u))
    if shuffle_seed is not None:
        rng = np.random.default_rng(shuffle_seed)
        synth_order = rng.permutation(l).tolist()
        real_order = rng.permutation(u).tolist() if u else []
    entries = []
    si = ri = 0
    for is_real in pattern:
        if is_real:
            img, lbl = real_light[real_order[ri % u]]
            ri += 1
            entries.append(ManifestEntry(str(img), str(lbl), REAL_LIGHT))
        else:
            img, lbl = synth_dense[synth_order[si % l]]
            si += 1
            entries.append(ManifestEntry(str(img), str(lbl), SYNTH_DENSE))
    meta = {"l": l, "u": u, "w": w, "lambda": u / l * w, "length": length,
            "synthetic_entries": length - n_real, "real_entries": n_real}
    if shuffle_seed is not None:
        meta["shuffle_seed"] = shuffle_seed
    return DatasetManifest(entries, meta)


def _length_covering(n_synth: int, w: float) -> int:
    """Shortest stream in which ``n_synth`` synthetic draws have appeared."""
    err, seen, n = 0.0, 0, 0
    while seen < n_synth:
        n += 1
        if abs(err - 1.0) < abs(err + w):
            err -= 1.0
        else:
            err += w
            seen += 1
    return n


def light_manifest(pairs) -> DatasetManifest:
    pairs = list(pairs)
    if not pairs:
        raise ValueError("light synthetic set is empty")
    entries = [ManifestEntry(str(i), str(l), SYNTH_LIGHT) for i, l in pairs]
    return DatasetManifest(entries, {"l": len(pairs), "u": 0, "w": 0.0, "lambda": 0.0, "length": len(pairs)})


def read_exclusions(path) -> set[str]:
    """One image id per line; blank lines and ``#`` comments ignored."""
    if path is None:
        return set()
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return {ln.strip() for ln in lines if ln.strip() and not ln.lstrip().startswith("#")}


@dataclass
class CurriculumPlan:
    clear_dataset: str
    real_dataset: str
    output_dir: str
    light_beta: float = 0.005
    dense_beta: float = 0.01
    density_betas: list[float] = field(default_factory=lambda: list(DENSITY_BETAS))
    light_count: int | None = None
    light_max_beta: float | None = None
    noisy_labels: str | None = None
    w: float = 1.0 / 3.0
    exclude: str | None = None
    density_model: str | None = None
    ridge: float = 1e-3
    stream_length: int | None = None
    shuffle_seed: int | None = None
    num_classes: int = 19
    void: int = 0

    def validate(self) -> None:
        if not 0 < self.light_beta < self.dense_beta:
            raise ValueError(
                f"curriculum must go from light to dense fog: light_beta={self.light_beta} "
                f"must be positive and below dense_beta={self.dense_beta}"
            )
        if (self.light_count is None) == (self.light_max_beta is None):
            raise ValueError("set exactly one of light_count and light_max_beta")
        if self.w < 0:
            raise ValueError("w must be non-negative")

    @classmethod
    def from_json(cls, path) -> "CurriculumPlan":
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        plan = cls(**data)
        # relative paths in the plan are relative to the plan file
        for name in ("clear_dataset", "real_dataset", "output_dir", "noisy_labels", "exclude", "density_model"):
            value = getattr(plan, name)
            if value is not None and not Path(value).is_absolute():
                setattr(plan, name, str(path.parent / value))
        plan.validate()
        return plan


def _rel(path, start) -> str:
    return Path(os.path.relpath(path, start)).as_posix()


def _stage(number: int, name: str):
    class _Guard:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, CurriculumError):
                raise CurriculumError(f"stage {number} ({name}): {exc}") from exc
            return False

    return _Guard()


def build_curriculum(plan: CurriculumPlan, cfg: ToolConfig = ToolConfig()) -> list[Path]:
    """Run the seven stages and return the stage-4 and stage-7 manifest paths.

    If the noisy labels for stage 5 do not exist yet, the stage-4 manifest and
    the light subset list are still written before the error is raised, so
    the external model can be trained and applied in between.
    """
    plan.validate()
    out = Path(plan.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    excluded = read_exclusions(plan.exclude)
    workers = cfg.parallelism

    with _stage(1, "synthetic sweep"):
        betas = sorted(set(plan.density_betas) | {plan.light_beta, plan.dense_beta})
        dirs = generate_sweep(plan.clear_dataset, betas, out / "sweep", cfg)
        sweep = dict(zip(betas, dirs))

    with _stage(2, "density model"):
        model_path = out / "density_model.json"
        if plan.density_model is not None:
            model = DensityModel.load(plan.density_model)
        else:
            model = train_density_model({b: sweep[b] for b in plan.density_betas}, plan.ridge, workers)
        model.save(model_path)

    with _stage(3, "density ranking"):
        real = {p.stem: p for p in io.list_pngs(plan.real_dataset)}
        if not real:
            raise FileNotFoundError(f"no images in {plan.real_dataset}")
        ranked = rank_dataset(model, real, workers=workers, loader=io.read_rgb)
        with open(out / "ranking.jsonl", "w", encoding="utf-8", newline="\n") as f:
            write_ranking(ranked, f)

    with _stage(4, "light synthetic manifest"):
        light_dir = sweep[plan.light_beta]
        pairs = [
            (_rel(p, out), _rel(light_dir / "labels" / p.name, out))
            for p in io.list_pngs(light_dir / "images")
            if p.stem not in excluded
        ]
        stage4 = light_manifest(pairs)
        stage4.metadata["beta"] = plan.light_beta
        stage4_path = stage4.write(out / "cmada4.jsonl")

    with _stage(5, "light real subset"):
        ranked = [e for e in ranked if e.image not in excluded]
        if plan.light_count is not None:
            light_ids = select_light_subset(ranked, min(plan.light_count, len(ranked)))
        else:
            light_ids = select_light_by_beta(ranked, plan.light_max_beta)
        (out / "light_subset.txt").write_text("".join(f"{i}\n" for i in light_ids))
        if plan.noisy_labels is None or not Path(plan.noisy_labels).is_dir():
            raise CurriculumError(
                f"stage 5 (light real subset): noisy label directory {plan.noisy_labels!r} not found; "
                f"label the images in {out / 'light_subset.txt'} with the model trained on "
                f"{stage4_path} and rerun"
            )
        real_pairs = ingest_noisy_labels([real[i] for i in light_ids], plan.noisy_labels, plan.num_classes, plan.void)

    with _stage(6, "dense synthetic set"):
        dense_dir = sweep[plan.dense_beta]
        dense_pairs = [
            (_rel(p, out), _rel(dense_dir / "labels" / p.name, out))
            for p in io.list_pngs(dense_dir / "images")
            if p.stem not in excluded
        ]

    with _stage(7, "mixed manifest"):
        mixed = build_mixed_manifest(
            dense_pairs, [(_rel(i, out), _rel(l, out)) for i, l in real_pairs], plan.w,
            length=plan.stream_length, shuffle_seed=plan.shuffle_seed,
        )
        mixed.metadata["beta"] = plan.dense_beta
        stage7_path = mixed.write(out / "cmada7.jsonl")

    return [stage4_path, stage7_path]
