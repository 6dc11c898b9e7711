"""Command-line pipeline: tile, split, augment, detect, merge, evaluate, render.

Commands share `--config/--seed/--out` and compose through files laid out
under the output root, so a full survey run needs nothing but one config:

    out/tiles/*.png            out/tiles_manifest.json
    out/split.json             out/augmented/{tiles/, manifest.json}
    out/detections.jsonl       out/merged/{counts.csv, counts.json, ...}
    out/eval/{ap.csv, confusion.csv, report.json, report.txt, ...}

Exit codes: 0 success, 1 input error, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import shlex
import subprocess
import sys
from pathlib import Path
from typing import Any, Sequence

from . import augment as aug
from . import dataset as ds
from . import merge as mg
from . import oracle as orc
from . import tiling as tl
from .config import PipelineConfig, derive_seed, load_config
from .errors import InputError, PipelineError
from .evaluate import evaluate
from .render import RenderStyle, render_overlay
from .taxonomy import ClassTaxonomy, default_taxonomy, load_taxonomy

_RASTER_SUFFIXES = (".png", ".jpg", ".jpeg", ".tif", ".tiff")


def _resolve_taxonomy(config: PipelineConfig) -> ClassTaxonomy:
    if config.taxonomy:
        return load_taxonomy(config.taxonomy)
    return default_taxonomy()


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    overrides: dict[str, Any] = {}
    for key in ("seed", "out", "images", "annotations", "taxonomy"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    for key in (
        "tile_width",
        "tile_height",
        "stride_x",
        "stride_y",
        "retention_threshold",
        "dominance_threshold",
        "nms_iou",
        "mission_nms_iou",
        "score_floor",
        "eval_score_floor",
        "oracle_jitter",
        "oracle_drop_rate",
        "oracle_spurious_rate",
        "oracle_misclass_rate",
    ):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "class_agnostic", False):
        overrides["class_aware_nms"] = False
    if getattr(args, "by_image", False):
        overrides["split_by_image"] = True
    ratios = getattr(args, "ratios", None)
    if ratios is not None:
        overrides["split_ratios"] = tuple(float(r) for r in ratios.split(","))
    thresholds = getattr(args, "iou_thresholds", None)
    if thresholds is not None:
        overrides["eval_iou_thresholds"] = tuple(
            float(t) for t in thresholds.split(",")
        )
    ops = getattr(args, "ops", None)
    if ops is not None:
        overrides["augment_ops"] = tuple(ops.split(","))
    return load_config(getattr(args, "config", None), overrides)


def _collect_images(images_path: str | None) -> list[Path]:
    if not images_path:
        raise InputError("no images path given (flag --images or config paths.images)")
    path = Path(images_path)
    if not path.exists():
        raise InputError(f"images path not found: {path}")
    if path.is_file():
        return [path]
    files = sorted(
        p for p in path.iterdir() if p.suffix.lower() in _RASTER_SUFFIXES
    )
    if not files:
        raise InputError(f"no raster files under {path}")
    return files


def _write_rejects_csv(rows: Sequence[tuple[int, str, str]], path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["line_number", "reason", "detail"])
        for row in rows:
            writer.writerow(list(row))


def cmd_tile(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    taxonomy = _resolve_taxonomy(config)
    plan = config.tile_plan()
    out_dir = config.out_dir
    tiles_dir = out_dir / "tiles"
    tiles_dir.mkdir(parents=True, exist_ok=True)

    image_files = _collect_images(config.images)
    dims: dict[str, tuple[int, int]] = {}
    pixels_by_id: dict[str, Any] = {}
    images: list[ds.SurveyImage] = []
    for path in image_files:
        pixels = tl.load_raster(path)
        image = ds.SurveyImage(
            image_id=path.stem,
            width=pixels.shape[1],
            height=pixels.shape[0],
            path=path,
        )
        images.append(image)
        dims[image.image_id] = (image.width, image.height)
        pixels_by_id[image.image_id] = pixels

    by_image: dict[str, list[ds.Annotation]] = {}
    rejects: list[ds.RejectedRow] = []
    if config.annotations:
        loaded = ds.load_annotations(config.annotations, taxonomy, image_dims=dims)
        by_image = loaded.by_image
        rejects = loaded.rejects

    records: list[tl.TileRecord] = []
    for image in images:
        records.extend(
            tl.write_tiles(
                image,
                pixels_by_id[image.image_id],
                plan,
                tiles_dir,
                by_image.get(image.image_id, ()),
            )
        )

    tl.write_manifest(records, out_dir / "tiles_manifest.json", plan, images)
    if rejects:
        _write_rejects_csv(
            [(r.line_number, r.reason, r.detail) for r in rejects],
            out_dir / "rejects.csv",
        )
    print(
        f"tiled {len(images)} image(s) into {len(records)} tiles"
        f" ({sum(len(r.annotations) for r in records)} clipped annotations,"
        f" {len(rejects)} rejected rows)"
    )
    return 0


def _manifest_path(args: argparse.Namespace, config: PipelineConfig) -> Path:
    explicit = getattr(args, "manifest", None)
    return Path(explicit) if explicit else config.out_dir / "tiles_manifest.json"


def cmd_split(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    manifest = tl.read_manifest(_manifest_path(args, config))
    out_path = (
        Path(args.split_out) if args.split_out else config.out_dir / "split.json"
    )
    seed = derive_seed(config.seed, "split")
    if config.split_by_image:
        ids_by_image: dict[str, list[str]] = {}
        for record in manifest.records:
            ids_by_image.setdefault(record.image_id, []).append(record.tile_id)
        split = ds.split_by_source_image(ids_by_image, config.split_ratios, seed)
    else:
        split = ds.split_dataset(
            [r.tile_id for r in manifest.records], config.split_ratios, seed
        )
    payload = {
        "format": "colonycount-split/1",
        "seed": split.seed,
        "ratios": list(config.split_ratios),
        "train": sorted(split.train),
        "validation": sorted(split.validation),
        "test": sorted(split.test),
    }
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(
        json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(
        f"split {len(manifest.records)} tiles:"
        f" train {len(split.train)}, validation {len(split.validation)},"
        f" test {len(split.test)}"
    )
    return 0


def read_split_file(path: str | Path) -> ds.DatasetSplit:
    path = Path(path)
    if not path.exists():
        raise InputError(f"split file not found: {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    return ds.DatasetSplit(
        train=frozenset(data["train"]),
        validation=frozenset(data["validation"]),
        test=frozenset(data["test"]),
        seed=data["seed"],
    )


def cmd_augment(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    taxonomy = _resolve_taxonomy(config)
    manifest = tl.read_manifest(_manifest_path(args, config))
    tiles_dir = (
        Path(args.tiles_dir) if args.tiles_dir else config.out_dir / "tiles"
    )
    out_dir = Path(args.augment_out) if args.augment_out else config.out_dir / "augmented"
    aug_tiles_dir = out_dir / "tiles"
    aug_tiles_dir.mkdir(parents=True, exist_ok=True)

    split_path = (
        Path(args.split) if args.split else config.out_dir / "split.json"
    )
    if split_path.exists():
        train_ids = read_split_file(split_path).train
        records = [r for r in manifest.records if r.tile_id in train_ids]
    else:
        # no split on disk: treat the whole manifest as the training set
        records = list(manifest.records)

    policy = config.oversample_policy()

    def load_tile(tile_id: str):
        return tl.load_raster(tiles_dir / f"{tile_id}.png")

    def save_tile(tile_id: str, pixels) -> None:
        tl.save_raster(pixels, aug_tiles_dir / f"{tile_id}.png")

    augmented = aug.build_augmented_set(records, taxonomy, policy, load_tile, save_tile)
    tl.write_manifest(augmented, out_dir / "manifest.json", manifest.plan, manifest.images)
    n_new = len(augmented) - len(records)
    print(f"augmented {n_new} tile(s) from {len(records)} training tiles")
    return 0


def cmd_detect_oracle(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    taxonomy = _resolve_taxonomy(config)
    manifest = tl.read_manifest(_manifest_path(args, config))
    out_path = (
        Path(args.detections_out)
        if args.detections_out
        else config.out_dir / "detections.jsonl"
    )
    cfg = orc.OracleConfig(
        jitter=config.oracle_jitter,
        drop_rate=config.oracle_drop_rate,
        spurious_rate=config.oracle_spurious_rate,
        misclass_rate=config.oracle_misclass_rate,
        seed=derive_seed(config.seed, "oracle"),
    )
    detections = orc.oracle_detect(
        manifest.records, cfg, classes=taxonomy.trained_classes
    )
    out_path.parent.mkdir(parents=True, exist_ok=True)
    mg.write_detections_jsonl(detections, out_path)
    print(f"oracle emitted {len(detections)} detections to {out_path}")
    return 0


def cmd_merge_count(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    taxonomy = _resolve_taxonomy(config)
    manifest = tl.read_manifest(_manifest_path(args, config))
    detections_path = (
        Path(args.detections) if args.detections else config.out_dir / "detections.jsonl"
    )
    out_dir = Path(args.merge_out) if args.merge_out else config.out_dir / "merged"
    out_dir.mkdir(parents=True, exist_ok=True)

    tile_dets, _ = mg.read_detections_jsonl(detections_path, strict=True)
    image_dets = mg.back_project(tile_dets, manifest.by_tile_id())

    by_image: dict[str, list[mg.Detection]] = {}
    for det in image_dets:
        by_image.setdefault(det.provenance, []).append(det)

    merged_all: list[mg.Detection] = []
    reports: list[mg.CountReport] = []
    for image_id in sorted({r.image_id for r in manifest.records}):
        kept = mg.nms(
            by_image.get(image_id, []),
            iou_threshold=config.nms_iou,
            class_aware=config.class_aware_nms,
        )
        merged_all.extend(kept)
        reports.append(
            mg.count(
                kept,
                score_floor=config.score_floor,
                scope=image_id,
                classes=taxonomy.trained_classes,
                nms_threshold=config.nms_iou,
            )
        )

    mg.write_frame_detections_jsonl(merged_all, out_dir / "image_detections.jsonl")

    if args.georefs:
        georef_dir = Path(args.georefs)
        georefs = {}
        for image_id in by_image:
            world_path = georef_dir / f"{image_id}.wld"
            if not world_path.exists():
                raise mg.MissingGeoreference(image_id)
            georefs[image_id] = mg.read_world_file(world_path)
        merged_by_image = {
            r.scope: [d for d in merged_all if d.provenance == r.scope]
            for r in reports
        }
        mission_dets, mission_report = mg.merge_mission(
            merged_by_image,
            georefs,
            iou_threshold=config.mission_nms_iou,
            score_floor=config.score_floor,
            class_aware=config.class_aware_nms,
            classes=taxonomy.trained_classes,
        )
        reports.append(mission_report)
        mg.write_frame_detections_jsonl(
            mission_dets, out_dir / "mission_detections.jsonl"
        )

    csv_lines = ["scope,class,count"]
    for report in reports:
        for class_name in sorted(report.counts):
            csv_lines.append(f"{report.scope},{class_name},{report.counts[class_name]}")
    (out_dir / "counts.csv").write_text("\n".join(csv_lines) + "\n", encoding="utf-8")

    payload = [
        json.loads(mg.count_report_json(report)) for report in reports
    ]
    (out_dir / "counts.json").write_text(
        json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    for report in reports:
        print(f"{report.scope}: {report.total} birds")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    taxonomy = _resolve_taxonomy(config)
    manifest = tl.read_manifest(_manifest_path(args, config))
    detections_path = (
        Path(args.detections) if args.detections else config.out_dir / "detections.jsonl"
    )
    out_dir = Path(args.eval_out) if args.eval_out else config.out_dir / "eval"
    out_dir.mkdir(parents=True, exist_ok=True)

    detections, line_rejects = mg.read_detections_jsonl(detections_path, strict=False)
    rejects: list[tuple[int, str, str]] = [
        (r.line_number, "malformed_line", r.reason) for r in line_rejects
    ]
    known_tiles = manifest.by_tile_id()
    usable: list[mg.Detection] = []
    for det in detections:
        if det.class_name not in taxonomy.trained_classes:
            rejects.append((0, "unknown_class", det.class_name))
        elif det.provenance not in known_tiles:
            rejects.append((0, "unknown_tile", det.provenance))
        else:
            usable.append(det)

    ground_truth = [a for record in manifest.records for a in record.annotations]
    report = evaluate(
        usable,
        ground_truth,
        thresholds=config.eval_iou_thresholds,
        classes=taxonomy.trained_classes,
        confusion_score_floor=config.eval_score_floor,
    )

    (out_dir / "ap.csv").write_text(report.ap_table_csv(), encoding="utf-8")
    (out_dir / "confusion.csv").write_text(report.confusion.to_csv(), encoding="utf-8")
    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out_dir / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (out_dir / "pr_curves.csv").write_text(report.pr_curves_csv(), encoding="utf-8")
    if rejects:
        _write_rejects_csv(rejects, out_dir / "rejects.csv")
    for threshold in config.eval_iou_thresholds:
        print(f"mAP@{threshold:g} = {report.mean_ap[threshold]:.4f}")
    if rejects:
        print(f"{len(rejects)} detection line(s) rejected (see rejects.csv)")
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    image_path = Path(args.image)
    pixels = tl.load_raster(image_path)
    image_id = args.image_id or image_path.stem
    detections = mg.read_frame_detections_jsonl(args.detections)
    mine = [d for d in detections if d.provenance == image_id]
    out_path = (
        Path(args.render_out)
        if args.render_out
        else config.out_dir / "overlays" / f"{image_id}.png"
    )
    out_path.parent.mkdir(parents=True, exist_ok=True)
    rendered = render_overlay(pixels, mine, RenderStyle())
    tl.save_raster(rendered, out_path)
    print(f"rendered {len(mine)} detections onto {out_path}")
    return 0


def cmd_detect_model(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    manifest_path = _manifest_path(args, config)
    tiles_dir = Path(args.tiles_dir) if args.tiles_dir else config.out_dir / "tiles"
    out_path = (
        Path(args.detections_out)
        if args.detections_out
        else config.out_dir / "detections.jsonl"
    )
    command = shlex.split(args.bridge_cmd) + [
        "run",
        "--manifest",
        str(manifest_path),
        "--tiles",
        str(tiles_dir),
        "--out",
        str(out_path),
    ]
    if args.bridge_config:
        command += ["--config", str(args.bridge_config)]
    try:
        completed = subprocess.run(command, capture_output=True, text=True)
    except FileNotFoundError as exc:
        raise InputError(f"cannot launch detector bridge: {exc}") from exc
    sys.stdout.write(completed.stdout)
    if completed.returncode != 0:
        raise InputError(
            f"detector bridge failed with code {completed.returncode}:"
            f" {completed.stderr.strip()}"
        )
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="pipeline config JSON file")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--out", help="output root directory")
    parser.add_argument("--taxonomy", help="taxonomy JSON file (default: built-in)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="colonycount",
        description="Aerial survey bird counting: tile, augment, merge, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tile", help="crop survey images into detector tiles")
    _add_common(p)
    p.add_argument("--images", help="image file or directory")
    p.add_argument("--annotations", help="annotation CSV")
    p.add_argument("--tile-width", type=int, dest="tile_width")
    p.add_argument("--tile-height", type=int, dest="tile_height")
    p.add_argument("--stride-x", type=int, dest="stride_x")
    p.add_argument("--stride-y", type=int, dest="stride_y")
    p.add_argument("--retention", type=float, dest="retention_threshold")
    p.set_defaults(func=cmd_tile)

    p = sub.add_parser("split", help="train/validation/test split of tiles")
    _add_common(p)
    p.add_argument("--manifest", help="tiles manifest")
    p.add_argument("--ratios", help="comma list, e.g. 0.7,0.15,0.15")
    p.add_argument("--by-image", action="store_true", dest="by_image")
    p.add_argument("--split-out", dest="split_out", help="output split JSON")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("augment", help="oversample minority-dominated tiles")
    _add_common(p)
    p.add_argument("--manifest", help="tiles manifest")
    p.add_argument("--tiles-dir", dest="tiles_dir", help="directory of tile PNGs")
    p.add_argument("--split", help="split JSON (training tiles only)")
    p.add_argument("--ops", help="comma list of augmentation kinds")
    p.add_argument("--dominance", type=float, dest="dominance_threshold")
    p.add_argument("--augment-out", dest="augment_out", help="output directory")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("detect-oracle", help="perturbation-oracle detections")
    _add_common(p)
    p.add_argument("--manifest", help="tiles manifest")
    p.add_argument("--jitter", type=float, dest="oracle_jitter")
    p.add_argument("--drop-rate", type=float, dest="oracle_drop_rate")
    p.add_argument("--spurious-rate", type=float, dest="oracle_spurious_rate")
    p.add_argument("--misclass-rate", type=float, dest="oracle_misclass_rate")
    p.add_argument("--detections-out", dest="detections_out")
    p.set_defaults(func=cmd_detect_oracle)

    p = sub.add_parser("merge-count", help="back-project, de-duplicate, count")
    _add_common(p)
    p.add_argument("--detections", help="tile-frame detections JSONL")
    p.add_argument("--manifest", help="tiles manifest")
    p.add_argument("--nms-iou", type=float, dest="nms_iou")
    p.add_argument("--score-floor", type=float, dest="score_floor")
    p.add_argument("--class-agnostic", action="store_true", dest="class_agnostic")
    p.add_argument("--georefs", help="directory of {image_id}.wld world files")
    p.add_argument("--merge-out", dest="merge_out", help="output directory")
    p.set_defaults(func=cmd_merge_count)

    p = sub.add_parser("evaluate", help="AP, mAP, PR curves, confusion matrix")
    _add_common(p)
    p.add_argument("--detections", help="tile-frame detections JSONL")
    p.add_argument("--manifest", help="tiles manifest (ground truth)")
    p.add_argument("--iou-thresholds", dest="iou_thresholds", help="comma list")
    p.add_argument("--eval-score-floor", type=float, dest="eval_score_floor")
    p.add_argument("--eval-out", dest="eval_out", help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="draw detections onto a source image")
    _add_common(p)
    p.add_argument("--image", required=True, help="source raster")
    p.add_argument("--detections", required=True, help="image-frame detections JSONL")
    p.add_argument("--image-id", dest="image_id")
    p.add_argument("--render-out", dest="render_out", help="output PNG")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("detect-model", help="run an external detector bridge")
    _add_common(p)
    p.add_argument("--manifest", help="tiles manifest")
    p.add_argument("--tiles-dir", dest="tiles_dir", help="directory of tile PNGs")
    p.add_argument("--detections-out", dest="detections_out")
    p.add_argument(
        "--bridge-cmd",
        dest="bridge_cmd",
        default=f"{sys.executable} -m detectorbridge",
        help="command prefix used to launch the bridge",
    )
    p.add_argument("--bridge-config", dest="bridge_config")
    p.set_defaults(func=cmd_detect_model)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (PipelineError, AssertionError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - unexpected bug surface
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
