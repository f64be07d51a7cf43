"""Building curriculum manifests end to end.

The clear dataset and the "real" foggy dataset are both procedural here.
The noisy labels, which in practice come from a segmentation model
fine-tuned on the stage-4 manifest, are faked with the true labels.

Run: python3 demos/03_curriculum_manifests.py [workdir]
"""
import sys
import tempfile
from collections import Counter
from pathlib import Path

from foghorn import io
from foghorn.cmada import CurriculumError, CurriculumPlan, DatasetManifest, build_curriculum
from foghorn.config import ToolConfig
from foghorn.depth_completion import CompletionParams
from foghorn.fog_synthesis import FogConfig, simulate_scene
from foghorn.imaging import CameraModel
from foghorn.scenes import make_scene, write_clear_dataset

root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="foghorn-cmada-"))
shape = (48, 96)
cfg = ToolConfig(camera=CameraModel(0.2, float(shape[1])), completion=CompletionParams(k=64))

write_clear_dataset(root / "clear", range(8), shape)
for i, beta in enumerate([0.0, 0.004, 0.006, 0.009, 0.015, 0.02, 0.03]):
    s = make_scene(200 + i, shape)
    img = simulate_scene(s.clear, s.disparity, s.labels, s.camera, FogConfig(beta), cfg.completion)
    io.write_rgb(root / "real" / f"zurich_{i}.png", img)

plan = CurriculumPlan(
    clear_dataset=str(root / "clear"),
    real_dataset=str(root / "real"),
    output_dir=str(root / "out"),
    light_count=3,
    noisy_labels=str(root / "noisy"),
    w=1 / 3,
)

# %% First pass stops at stage 5: nobody has labeled the light real images yet
try:
    build_curriculum(plan, cfg)
except CurriculumError as exc:
    print(exc)
light = (root / "out" / "light_subset.txt").read_text().split()
print("light real subset:", light)

# %% "Train" on cmada4.jsonl and label the subset; here we copy the true labels
for i, name in enumerate(sorted(p.stem for p in (root / "real").glob("*.png"))):
    if name in light:
        io.write_labels(root / "noisy" / f"{name}.png", make_scene(200 + i, shape).labels)

stage4, stage7 = build_curriculum(plan, cfg)
mixed = DatasetManifest.read(stage7)
print("stage-4 entries:", len(DatasetManifest.read(stage4).entries))
print("stage-7 sources:", dict(Counter(e.source for e in mixed.entries)))
print("stage-7 metadata:", mixed.metadata)
print("first entries:", [e.source for e in mixed.entries[:8]])
