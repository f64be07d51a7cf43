"""Command line for foghorn: simulate, sweep, density-train, density-rank, curriculum, evaluate.

Exit status is 0 on success, 1 when a step fails (the message names the step)
and 2 for usage errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import io
from .cmada import CurriculumPlan, build_curriculum, generate_sweep, read_sweep, train_density_model
from .config import CONFIG_ENV, ToolConfig, load_config
from .evaluation import CITYSCAPES_CLASSES, VOID, ConfusionMatrix, format_table, load_classes, load_void, report
from .fog_density import DensityModel, rank_dataset, write_ranking
from .fog_synthesis import FogConfig, mor_from_beta, simulate_scene, validate_beta
from .imaging import instance_aware_labels


class StepError(Exception):
    def __init__(self, step: str, cause: BaseException):
        super().__init__(f"{step}: {cause}")
        self.step = step


class _step:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, Exception) and not isinstance(exc, StepError):
            raise StepError(self.name, exc) from exc
        return False


def _config(args) -> ToolConfig:
    with _step("config"):
        cfg = load_config(args.config)
        changes = {}
        if args.workers is not None:
            if args.workers < 1:
                raise ValueError("--workers must be positive")
            changes["workers"] = args.workers
        if args.seed is not None:
            changes["seed"] = args.seed
        fog = cfg.fog
        if getattr(args, "allow_haze", False):
            fog = dataclasses.replace(fog, allow_haze=True)
        if getattr(args, "light", None) is not None:
            fog = dataclasses.replace(fog, atmospheric_light=tuple(args.light))
        changes["fog"] = fog
        return dataclasses.replace(cfg, **changes)


def _emit(args, payload: dict) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))


def cmd_simulate(args) -> int:
    cfg = _config(args)
    with _step("fog density"):
        beta = validate_beta(args.beta, cfg.fog.allow_haze)
        fog = FogConfig(beta, cfg.fog.atmospheric_light, cfg.fog.allow_haze)
    with _step("read inputs"):
        clear = io.read_rgb(args.input)
        disparity = io.read_disparity(args.disparity)
        classes = io.read_labels(args.labels)
        instances = io.read_labels(args.instances) if args.instances else None
        labels = instance_aware_labels(classes, instances)
    with _step("simulation"):
        foggy, t = simulate_scene(
            clear, disparity, labels, cfg.camera, fog, cfg.completion, cfg.filter,
            seed=cfg.seed, workers=cfg.parallelism, max_grid_bytes=cfg.max_grid_bytes,
            return_transmittance=True,
        )
    with _step("write outputs"):
        io.write_rgb(args.out, foggy)
        if args.transmittance_out:
            io.write_transmittance(args.transmittance_out, t)
    _emit(args, {
        "output": str(args.out),
        "transmittance": str(args.transmittance_out) if args.transmittance_out else None,
        "beta": beta,
        "mor": mor_from_beta(beta) if beta > 0 else None,
    })
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    with _step("sweep"):
        paths = generate_sweep(args.clear, args.betas, args.out, cfg)
    _emit(args, {"datasets": [str(p) for p in paths]})
    return 0


def cmd_density_train(args) -> int:
    cfg = _config(args)
    with _step("read sweep"):
        sweep = read_sweep(args.sweep)
    with _step("density training"):
        model = train_density_model(sweep, args.ridge, cfg.parallelism)
    with _step("write model"):
        model.save(args.out)
    _emit(args, {"model": str(args.out), "weights": list(model.weights), "bias": model.bias})
    return 0


def cmd_density_rank(args) -> int:
    cfg = _config(args)
    with _step("load model"):
        path = args.model or cfg.density_model
        if path is None:
            raise ValueError("no density model: pass --model or set density_model in the config")
        model = DensityModel.load(path)
    with _step("density ranking"):
        images = {p.as_posix(): p for p in io.list_pngs(args.images)}
        if not images:
            raise FileNotFoundError(f"no PNG images in {args.images}")
        ranked = rank_dataset(model, images, workers=cfg.parallelism, loader=io.read_rgb)
    with _step("write ranking"):
        if args.out:
            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
            with open(args.out, "w", encoding="utf-8", newline="\n") as f:
                write_ranking(ranked, f)
        if args.json or not args.out:
            write_ranking(ranked, sys.stdout)
    return 0


def cmd_curriculum(args) -> int:
    cfg = _config(args)
    with _step("plan"):
        plan = CurriculumPlan.from_json(args.plan)
    paths = build_curriculum(plan, cfg)  # errors already name their stage
    _emit(args, {"manifests": [str(p) for p in paths]})
    return 0


def _image_matrix(gt_path, pred_path, classes, void):
    cm = ConfusionMatrix(classes, void)
    try:
        return cm.update(io.read_labels(gt_path), io.read_labels(pred_path))
    except ValueError as exc:
        raise ValueError(f"{gt_path.name}: {exc}") from exc


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    with _step("class definition"):
        classes = load_classes(args.classes) if args.classes else CITYSCAPES_CLASSES
        void = load_void(args.classes) if args.classes else VOID
    with _step("evaluation"):
        gts = io.list_pngs(args.gt)
        if not gts:
            raise FileNotFoundError(f"no ground-truth PNGs in {args.gt}")
        pairs = []
        for g in gts:
            p = Path(args.pred) / g.name
            if not p.is_file():
                raise FileNotFoundError(f"no prediction for {g.name} in {args.pred}")
            pairs.append((g, p))
        with ThreadPoolExecutor(cfg.parallelism) as pool:
            matrices = list(pool.map(lambda gp: _image_matrix(gp[0], gp[1], classes, void), pairs))
        total = ConfusionMatrix(classes, void)
        for m in matrices:
            total = total + m
        result = report(total)
    with _step("write results"):
        if args.out:
            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
            Path(args.out).write_text(json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        if args.json:
            print(json.dumps(result, sort_keys=True))
        else:
            sys.stdout.write(format_table(result))
    return 0


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV}, else built-in defaults)")
    p.add_argument("--workers", type=int, help="parallel workers (default: config value, else all cores)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--json", action="store_true", help="machine-readable output on stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="foghorn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("simulate", help="render fog onto one clear image")
    p.add_argument("--beta", type=float, required=True, help="attenuation coefficient, 1/m")
    p.add_argument("--in", dest="input", required=True, help="clear sRGB PNG")
    p.add_argument("--disparity", required=True, help="16-bit disparity PNG (0 = missing)")
    p.add_argument("--labels", required=True, help="semantic label PNG")
    p.add_argument("--instances", help="optional instance id PNG")
    p.add_argument("--out", required=True, help="foggy PNG to write")
    p.add_argument("--transmittance-out", help="also write the filtered transmittance as 16-bit PNG")
    p.add_argument("--allow-haze", action="store_true", help="accept beta with visibility of 1 km or more")
    p.add_argument("--light", type=float, nargs=3, metavar=("R", "G", "B"), help="atmospheric light in [0, 1]")
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="render a clear dataset at several fog densities")
    p.add_argument("--clear", required=True, help="dataset with images/, disparity/, labels/")
    p.add_argument("--betas", type=float, nargs="+", required=True, help="fog densities, 1/m")
    p.add_argument("--out", required=True, help="output root; one beta_<b>/ per density")
    p.add_argument("--allow-haze", action="store_true", help="accept beta with visibility of 1 km or more")
    p.add_argument("--light", type=float, nargs=3, metavar=("R", "G", "B"), help="atmospheric light in [0, 1]")
    _common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("density-train", help="fit the fog density regressor on a sweep")
    p.add_argument("--sweep", required=True, help="sweep root written by 'sweep'")
    p.add_argument("--ridge", type=float, default=1e-3, help="ridge penalty (default 1e-3)")
    p.add_argument("--out", required=True, help="model JSON to write")
    _common(p)
    p.set_defaults(func=cmd_density_train)

    p = sub.add_parser("density-rank", help="rank images by estimated fog density")
    p.add_argument("--images", required=True, help="directory of PNG images")
    p.add_argument("--model", help="model JSON (default: density_model from the config)")
    p.add_argument("--out", help="JSON lines file to write (default: stdout)")
    _common(p)
    p.set_defaults(func=cmd_density_rank)

    p = sub.add_parser("curriculum", help="build the light synthetic and mixed curriculum manifests")
    p.add_argument("--plan", required=True, help="curriculum plan JSON")
    _common(p)
    p.set_defaults(func=cmd_curriculum)

    p = sub.add_parser("evaluate", help="mean IoU of predicted label maps")
    p.add_argument("--gt", required=True, help="directory of ground-truth label PNGs")
    p.add_argument("--pred", required=True, help="directory of predicted label PNGs with the same names")
    p.add_argument("--classes", help="class definition JSON (default: the 19 Cityscapes classes, void 0)")
    p.add_argument("--out", help="also write the JSON report here")
    _common(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure becomes exit status 1
        print(f"foghorn {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
