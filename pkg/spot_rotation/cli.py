"""
CLI interface for the spot rotation toolkit.
Subcommands generate, smooth, eval, viz and stats share one config file and
write a run manifest next to their outputs.
"""

import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterator, Optional, Sequence, Tuple, TypeVar

import click
from tqdm import tqdm

from . import __version__
from .annotate import annotate_scene, sample_camera
from .config import LOG_DIR, LOG_FILE_NAME, LOG_LEVEL, DEFAULT_IOU_THRESHOLD, config_hash, load_settings, worker_count
from .errors import ConfigError, GenerationError, InputUsageError, LabelFormatError, PairingError
from .imgproc import PRESETS as SMOOTHING_PRESETS
from .imgproc import KernelSpec, describe_preset, smooth
from .labels import labels_text, pair_by_stem, read_labels, read_predictions, text_files
from .metrics import curve_tables, eval_dataset
from .render import RenderConfig, export_scene, parse_scene, rasterize
from .rotation import ClassThresholds, ParkClass
from .scene import DatasetManifest, GenConfig, ManifestEntry, camera_seed, plan_dataset, sample_scene, scene_class_histogram
from .storage import (
    OutputTracker,
    RunManifest,
    atomic_write_bytes,
    atomic_write_text,
    encode_image,
    format_for_path,
    list_images,
    read_image,
)
from .viz import DialStyle, draw_overlay, overlay_svg

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_INTERNAL_ERROR = 2

# Failures caused by the user's inputs rather than by the toolkit
INPUT_ERRORS = (ConfigError, GenerationError, LabelFormatError, PairingError, OSError)

T = TypeVar("T")
R = TypeVar("R")


def setup_logging(log_level: str = LOG_LEVEL, log_file: Optional[str] = None):
    """
    Setup logging configuration.

    Args:
        log_level: Logging level
        log_file: Optional log file path
    """
    log_dir = Path(LOG_DIR)
    log_dir.mkdir(parents=True, exist_ok=True)

    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    else:
        handlers.append(logging.FileHandler(log_dir / LOG_FILE_NAME))

    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def map_tasks(fn: Callable[[T], R], tasks: Sequence[T], workers: int) -> Iterator[R]:
    """Apply fn to every task in order, inline or on a bounded process pool."""
    if workers <= 1 or len(tasks) <= 1:
        for task in tasks:
            yield fn(task)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(fn, tasks)


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, click.ClickException):
        return error.exit_code
    if isinstance(error, INPUT_ERRORS):
        return EXIT_INPUT_ERROR
    return EXIT_INTERNAL_ERROR


def fail(run: RunManifest, out_dir: Path, error: BaseException) -> None:
    """Log a fatal error, record it in the run manifest and exit."""
    code = exit_code_for(error)
    if code == EXIT_INPUT_ERROR:
        logger.error(f"Input error: {error}")
    else:
        logger.error(f"Fatal error: {error}", exc_info=True)
    run.details["error"] = str(error)
    run.details["exit_code"] = code
    try:
        run.finish("failed", out_dir)
    except OSError as e:
        logger.error(f"Could not write run manifest: {e}")
    sys.exit(code)


@click.group()
@click.version_option(__version__, prog_name="spot-rotation")
@click.option(
    '--log-level',
    type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False),
    default=LOG_LEVEL,
    help='Logging level'
)
@click.option('--log-file', type=click.Path(dir_okay=False), default=None, help='Log file path')
def main(log_level: str, log_file: Optional[str]):
    """
    Spot Rotation Toolkit

    Generates rotation-annotated synthetic bike-parking scenes and evaluates
    object-to-spot rotation estimates.
    """
    setup_logging(log_level, log_file)


@dataclass(frozen=True)
class GeneratedImage:
    entry: ManifestEntry
    image_bytes: bytes
    label_text: str
    scene_text: str
    bikes: int
    visible: int
    histogram: Dict[str, int]


@dataclass(frozen=True)
class GenerateTask:
    cfg: GenConfig
    render: RenderConfig
    entry: ManifestEntry


def generate_one(task: GenerateTask) -> GeneratedImage:
    """Sample, annotate, render and export one dataset image."""
    cfg, rcfg, entry = task.cfg, task.render, task.entry
    scene = sample_scene(cfg, entry.seed)
    rig = sample_camera(cfg.camera_mode, cfg.camera, camera_seed(entry.seed), target=scene.spot.origin)
    records = annotate_scene(scene, rig, rcfg.image_wh, cfg.thresholds, cfg.lean_target)
    image = rasterize(scene, rig, rcfg)
    histogram = scene_class_histogram(scene, cfg.thresholds)
    return GeneratedImage(
        entry=entry,
        image_bytes=encode_image(image, rcfg.output_format, rcfg.jpeg_quality),
        label_text=labels_text(records),
        scene_text=export_scene(scene, rig),
        bikes=len(scene.bikes),
        visible=len(records),
        histogram={cls.name.lower(): n for cls, n in histogram.items()},
    )


@main.command()
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False), default=None,
              help='KEY=VALUE config file')
@click.option('--preset', default=None, help='Dataset preset (overrides the config file)')
@click.option('--seed', default=0, type=int, help='Master seed')
@click.option('--n', 'n_images', required=True, type=int, help='Number of images')
@click.option('--out', 'out_dir', required=True, type=click.Path(file_okay=False), help='Output directory')
def generate(config_path: Optional[str], preset: Optional[str], seed: int, n_images: int, out_dir: str):
    """Generate a synthetic dataset: images, labels and scene exports."""
    out = Path(out_dir)
    run = RunManifest(command="generate", config_hash="", master_seed=seed)

    logger.info("=" * 60)
    logger.info("GENERATE")
    logger.info("=" * 60)
    logger.info(f"Images: {n_images}, seed: {seed}, output: {out}")

    try:
        settings = load_settings(config_path, preset)
        run.config_hash = config_hash(settings)
        cfg = GenConfig.from_settings(settings)
        rcfg = RenderConfig.from_settings(settings)
        plan = plan_dataset(cfg, n_images, seed, rcfg.extension)
        workers = worker_count()
        logger.info(f"Preset: {settings['preset']}, workers: {workers}")

        tasks = [GenerateTask(cfg, rcfg, entry) for entry in plan.entries]
        bikes = visible = 0
        classes = {cls.name.lower(): 0 for cls in ParkClass}
        with OutputTracker() as outputs:
            results = map_tasks(generate_one, tasks, workers)
            for result in tqdm(results, total=len(tasks), desc="Generating images", unit="image"):
                outputs.write_bytes(out / result.entry.image_path, result.image_bytes)
                outputs.write_text(out / result.entry.label_path, result.label_text)
                outputs.write_text(out / result.entry.scene_path, result.scene_text)
                bikes += result.bikes
                visible += result.visible
                for name, count in result.histogram.items():
                    classes[name] += count
            outputs.write_text(out / "manifest.jsonl", plan.to_jsonl())

        n_train, n_test = plan.split_sizes()
        run.outputs = {"images": "images/", "labels": "labels/", "scenes": "scenes/", "manifest": "manifest.jsonl"}
        run.details = {
            "preset": settings["preset"],
            "images": n_images,
            "train": n_train,
            "test": n_test,
            "bikes": bikes,
            "visible_bikes": visible,
            "classes": classes,
        }
        run.finish("ok", out)
        logger.info(f"Generated {n_images} images ({n_train} train / {n_test} test), {bikes} bikes")
    except Exception as e:
        fail(run, out, e)


@dataclass(frozen=True)
class SmoothTask:
    src: Path
    dst: Path
    spec: Optional[KernelSpec]


def smooth_one(task: SmoothTask) -> Tuple[Path, Optional[bytes], Optional[str]]:
    """Filter one file; returns (destination, encoded bytes, error message)."""
    try:
        if task.spec is None:
            read_image(task.src)
            return task.dst, task.src.read_bytes(), None
        image = smooth(read_image(task.src), task.spec)
        return task.dst, encode_image(image, format_for_path(task.dst)), None
    except OSError as e:
        return task.dst, None, f"{task.src}: {e}"


@main.command('smooth')
@click.option('--in', 'in_dir', required=True, type=click.Path(exists=True, file_okay=False),
              help='Directory of input images')
@click.option('--preset', required=True, help=f"Smoothing preset: {', '.join(SMOOTHING_PRESETS)}")
@click.option('--out', 'out_dir', required=True, type=click.Path(file_okay=False), help='Output directory')
def smooth_command(in_dir: str, preset: str, out_dir: str):
    """Apply a smoothing preset to every image in a directory."""
    if preset not in SMOOTHING_PRESETS:
        raise InputUsageError(f"Unknown preset '{preset}'. Choose from: {', '.join(SMOOTHING_PRESETS)}")

    out = Path(out_dir)
    run = RunManifest(command="smooth", config_hash=config_hash({"preset": preset}))
    logger.info(f"Smoothing {in_dir} with {preset} ({describe_preset(preset)})")

    try:
        spec = SMOOTHING_PRESETS[preset]
        tasks = [SmoothTask(src, out / src.name, spec) for src in list_images(in_dir)]
        written, skipped = 0, []
        for dst, data, error in tqdm(map_tasks(smooth_one, tasks, worker_count()),
                                     total=len(tasks), desc="Smoothing", unit="image"):
            if error is not None:
                logger.warning(f"Skipping unreadable image {error}")
                skipped.append(error)
                continue
            atomic_write_bytes(dst, data)
            written += 1

        run.outputs = {"images": "."}
        run.details = {"preset": preset, "written": written, "skipped": skipped}
        if skipped:
            run.finish("partial", out)
            logger.error(f"Smoothed {written} images, skipped {len(skipped)} unreadable")
            sys.exit(EXIT_INPUT_ERROR)
        run.finish("ok", out)
        logger.info(f"Smoothed {written} images into {out}")
    except Exception as e:
        fail(run, out, e)


@main.command('eval')
@click.option('--pred', 'pred_dir', required=True, type=click.Path(exists=True, file_okay=False),
              help='Directory of prediction files')
@click.option('--truth', 'truth_dir', required=True, type=click.Path(exists=True, file_okay=False),
              help='Directory of label files')
@click.option('--iou', 'iou_thresh', default=DEFAULT_IOU_THRESHOLD, type=float,
              help=f'IoU matching threshold (default: {DEFAULT_IOU_THRESHOLD})')
@click.option('--out', 'out_dir', required=True, type=click.Path(file_okay=False), help='Report directory')
def eval_command(pred_dir: str, truth_dir: str, iou_thresh: float, out_dir: str):
    """Evaluate predictions against ground-truth labels."""
    if not (0.0 < iou_thresh < 1.0):
        raise InputUsageError(f"--iou must lie in (0, 1), got {iou_thresh}")

    out = Path(out_dir)
    run = RunManifest(command="eval", config_hash=config_hash({"iou": iou_thresh}))
    try:
        pairs = pair_by_stem(text_files(pred_dir), text_files(truth_dir), "predictions", "truths")
        dets = [read_predictions(pred) for _, pred, _ in pairs]
        truths = [read_labels(truth) for _, _, truth in pairs]
        report = eval_dataset(dets, truths, iou_thresh)

        tables = curve_tables(report)
        with OutputTracker() as outputs:
            outputs.write_text(out / "report.json", report.to_json())
            for name, text in tables.items():
                outputs.write_text(out / name, text)

        run.outputs = {"report": "report.json", **{name: name for name in tables}}
        run.details = {"images": len(pairs), "map": report.map, "rotation_mse": report.rotation_mse}
        run.finish("ok", out)
        click.echo(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    except Exception as e:
        fail(run, out, e)


@main.command('viz')
@click.option('--images', 'image_dir', required=True, type=click.Path(exists=True, file_okay=False),
              help='Directory of images')
@click.option('--labels', 'label_dir', required=True, type=click.Path(exists=True, file_okay=False),
              help='Directory of label (or prediction) files')
@click.option('--out', 'out_dir', required=True, type=click.Path(file_okay=False), help='Output directory')
@click.option('--predictions', is_flag=True, help='Label files carry a confidence column')
@click.option('--svg', is_flag=True, help='Also write SVG overlays')
def viz_command(image_dir: str, label_dir: str, out_dir: str, predictions: bool, svg: bool):
    """Draw class-colored boxes and rotation dials onto images."""
    out = Path(out_dir)
    run = RunManifest(command="viz", config_hash=config_hash({"predictions": predictions, "svg": svg}))
    style = DialStyle()
    reader = read_predictions if predictions else read_labels
    try:
        pairs = pair_by_stem(list_images(image_dir), text_files(label_dir), "images", "labels")
        with OutputTracker() as outputs:
            for stem, image_path, label_path in tqdm(pairs, desc="Drawing overlays", unit="image"):
                items = reader(label_path)
                image = read_image(image_path)
                dst = out / f"{stem}.png"
                if not items and image_path.suffix.lower() == ".png":
                    outputs.write_bytes(dst, image_path.read_bytes())
                else:
                    outputs.write_bytes(dst, encode_image(draw_overlay(image, items, style)))
                if svg:
                    href = os.path.relpath(image_path, out)
                    size = (image.shape[1], image.shape[0])
                    outputs.write_text(out / f"{stem}.svg", overlay_svg(items, size, style, href))

        run.outputs = {"overlays": "."}
        run.details = {"images": len(pairs), "svg": svg}
        run.finish("ok", out)
        logger.info(f"Wrote {len(pairs)} overlays to {out}")
    except Exception as e:
        fail(run, out, e)


def dataset_stats(data_dir: Path, th: ClassThresholds) -> dict:
    """Per-split image, bike and class counts from a generated dataset's scene exports."""
    manifest = DatasetManifest.from_jsonl((data_dir / "manifest.jsonl").read_text(encoding="utf-8"))
    splits: Dict[str, dict] = {}
    for entry in manifest.entries:
        scene, _ = parse_scene((data_dir / entry.scene_path).read_text(encoding="utf-8"))
        split = splits.setdefault(entry.split, {
            "images": 0, "bikes": 0, **{cls.name.lower(): 0 for cls in ParkClass}
        })
        split["images"] += 1
        split["bikes"] += len(scene.bikes)
        for cls, count in scene_class_histogram(scene, th).items():
            split[cls.name.lower()] += count

    total = {"images": 0, "bikes": 0, **{cls.name.lower(): 0 for cls in ParkClass}}
    for split in splits.values():
        for key, value in split.items():
            total[key] += value
    return {"splits": dict(sorted(splits.items())), "total": total}


@main.command('stats')
@click.option('--data', 'data_dir', required=True, type=click.Path(exists=True, file_okay=False),
              help='Generated dataset directory')
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Config file supplying class thresholds')
@click.option('--out', 'out_dir', default=None, type=click.Path(file_okay=False),
              help='Output directory (default: <data>/stats)')
def stats_command(data_dir: str, config_path: Optional[str], out_dir: Optional[str]):
    """Summarize a generated dataset per split and parking class."""
    data = Path(data_dir)
    out = Path(out_dir) if out_dir else data / "stats"
    run = RunManifest(command="stats", config_hash="")
    try:
        settings = load_settings(config_path)
        run.config_hash = config_hash(settings)
        stats = dataset_stats(data, GenConfig.from_settings(settings).thresholds)
        text = json.dumps(stats, indent=2, sort_keys=True) + "\n"
        atomic_write_text(out / "stats.json", text)
        run.outputs = {"stats": "stats.json"}
        run.finish("ok", out)
        click.echo(text, nl=False)
    except Exception as e:
        fail(run, out, e)


if __name__ == '__main__':
    main()
