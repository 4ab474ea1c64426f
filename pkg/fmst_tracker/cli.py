# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""
The ``fmst`` command.

Subcommands:

- ``track SEQ``: track one OTB-style sequence and write ``predictions.txt``.
- ``bench ROOT``: one-pass evaluation of every task below ``ROOT``.
- ``train ROOT...``: train the positive and negative weight networks.
- ``gen``: render synthetic sequences in the OTB layout.

Every run writes ``config.resolved`` (the full configuration in the ``--config`` format) and
``manifest.json`` into its output directory. Exit codes: 0 on success, 2 for usage and input
errors, 1 for anything else.
"""

import argparse
import csv
import logging
import sys
import time
from collections.abc import Callable, Sequence
from pathlib import Path

from pydantic import BaseModel, ConfigDict, ValidationError

from fmst_tracker.bench.annotations import (
    ANNOTATION_FILE,
    find_tasks,
    list_images,
    load_annotations,
    parse_annotations,
    parse_rect_line,
    write_annotations,
)
from fmst_tracker.bench.ope import run_ope
from fmst_tracker.bench.report import write_report
from fmst_tracker.config import RunConfig, TrackerMode, dump_config, flatten_config, load_config
from fmst_tracker.domain.geometry import Rect
from fmst_tracker.domain.targetmaps import Polarity
from fmst_tracker.errors import (
    AnnotationParseError,
    EmptyDatasetError,
    InvalidArgumentError,
    MissingFeatureError,
    ShapeError,
    TensorFormatError,
)
from fmst_tracker.features.backbone import FileBackbone, build_backbone
from fmst_tracker.features.frame import Frame, draw_rects, read_frame, write_frame
from fmst_tracker.synthseq import ARCHETYPES, SceneSpec, archetype, load_scene, render, synthetic_suite, write_otb
from fmst_tracker.tracker import Tracker
from fmst_tracker.weightnet.checkpoint import NEGATIVE_FILE, POSITIVE_FILE, WeightNets
from fmst_tracker.weightnet.training import TrainingRun, build_dataset, fit

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2

MANIFEST_FILE = "manifest.json"
RESOLVED_CONFIG_FILE = "config.resolved"
PREDICTIONS_FILE = "predictions.txt"
TRAINING_LOG_FILE = "training_log.csv"

_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
_PREDICTION_COLOR = (0, 255, 0)
_TRUTH_COLOR = (255, 0, 0)

_INPUT_ERRORS = (
    InvalidArgumentError,
    ValidationError,
    AnnotationParseError,
    EmptyDatasetError,
    MissingFeatureError,
    ShapeError,
    TensorFormatError,
    FileNotFoundError,
    NotADirectoryError,
)


class RunManifest(BaseModel):
    """What was run, with which configuration, and how long it took."""

    model_config = ConfigDict(frozen=True)

    subcommand: str
    arguments: tuple[str, ...]
    config_path: str | None
    seed: int | None
    out_dir: str
    elapsed_seconds: float
    config: dict[str, str]


def _overrides(args: argparse.Namespace) -> dict[str, object]:
    overrides: dict[str, object] = {}
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            msg = f"--set expects KEY=VALUE, got {item!r}."
            raise InvalidArgumentError(msg)
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["tracker.sampler.seed"] = args.seed
        overrides["train.seed"] = args.seed
    if getattr(args, "mode", None) is not None:
        overrides["tracker.mode"] = args.mode
    net_dir: Path | None = getattr(args, "net", None)
    if net_dir is not None:
        overrides["tracker.positive_net"] = str(net_dir / POSITIVE_FILE)
        negative = net_dir / NEGATIVE_FILE
        overrides["tracker.negative_net"] = str(negative) if negative.is_file() else "none"
    return overrides


def _write_run_files(args: argparse.Namespace, config: RunConfig, elapsed: float, argv: Sequence[str]) -> None:
    out_dir: Path = args.out
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / RESOLVED_CONFIG_FILE).write_text(dump_config(config), encoding="utf-8")
    manifest = RunManifest(
        subcommand=args.command,
        arguments=tuple(argv),
        config_path=str(args.config) if args.config is not None else None,
        seed=args.seed,
        out_dir=str(out_dir),
        elapsed_seconds=elapsed,
        config=flatten_config(config),
    )
    (out_dir / MANIFEST_FILE).write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")


def _initial_rect(sequence: Path, init: str | None) -> tuple[Rect, list[Rect]]:
    """The rect to start from and whatever ground truth the sequence carries."""
    truth_file = sequence / ANNOTATION_FILE
    truths = parse_annotations(truth_file.read_text(encoding="utf-8")) if truth_file.is_file() else []
    if init is not None:
        return parse_rect_line(init, 1), truths
    if not truths:
        msg = f"no initial rect: {truth_file} is missing or empty and --init was not given."
        raise InvalidArgumentError(msg)
    return truths[0], truths


def cmd_track(args: argparse.Namespace, config: RunConfig) -> int:
    """Track one sequence; ``predictions.txt`` holds one line per frame, starting with the initial rect."""
    sequence: Path = args.sequence
    init_rect, truths = _initial_rect(sequence, args.init)
    images = list_images(sequence)
    if not images:
        msg = f"No frame images found in {sequence}."
        raise EmptyDatasetError(msg)
    frames = [read_frame(path, index) for index, path in enumerate(images)]

    tracker = Tracker(config.tracker).for_task(sequence.name)
    if isinstance(tracker.backbone, FileBackbone):
        tracker.backbone.preload(range(len(frames)))
    start = time.perf_counter()
    rects = [init_rect, *tracker.track(frames, init_rect)]
    elapsed = time.perf_counter() - start
    logger.info("Tracked %d frames in %.3f s", len(frames) - 1, elapsed)

    write_annotations(args.out / PREDICTIONS_FILE, rects)
    if args.overlay:
        _write_overlays(args.out / "overlay", frames, rects, truths)
    return EXIT_OK


def _write_overlays(directory: Path, frames: Sequence[Frame], rects: Sequence[Rect], truths: Sequence[Rect]) -> None:
    for number, (frame, rect) in enumerate(zip(frames, rects, strict=True)):
        outlines = [(rect, _PREDICTION_COLOR)]
        if number < len(truths):
            outlines.append((truths[number], _TRUTH_COLOR))
        write_frame(directory / f"{number + 1:04d}.png", draw_rects(frame, outlines))


def cmd_bench(args: argparse.Namespace, config: RunConfig) -> int:
    """Evaluate every task below the dataset root and print the averaged scores."""
    root: Path = args.root
    tasks = find_tasks(root) if root.is_dir() else []
    if not tasks:
        msg = f"No tasks with a {ANNOTATION_FILE} found below {root}."
        raise EmptyDatasetError(msg)

    # Load the networks once here; a learned run without them fails before any task starts.
    nets = None if args.oracle else Tracker(config.tracker).nets
    report = run_ope(tasks, config.tracker, nets, jobs=args.jobs, oracle=args.oracle)
    write_report(report, args.out, plots=args.plots)
    average = report.average
    print(  # noqa: T201
        f"precision {average.precision_score:.2f}  success {average.success_score:.2f}  "
        f"fps {average.fps:.2f}  tasks {len(report.results)}  skipped {len(report.skipped)}"
    )
    if report.skipped:
        logger.warning("%d tasks were skipped", len(report.skipped))
    return EXIT_OK


def _training_tasks(roots: Sequence[Path]) -> list[Path]:
    tasks: list[Path] = []
    for root in roots:
        tasks.extend([root] if (root / ANNOTATION_FILE).is_file() else find_tasks(root))
    return tasks


def _write_training_log(path: Path, runs: dict[Polarity, TrainingRun]) -> None:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("polarity", "epoch", "train_loss", "val_loss"))
        for polarity, run in runs.items():
            writer.writerows(
                (str(polarity), record.epoch, repr(record.train_loss), repr(record.val_loss)) for record in run.history
            )


def cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    """Train both weight networks on every task below the given roots."""
    tasks = _training_tasks(args.roots)
    annotations = [load_annotations(task) for task in tasks]
    sequences = [(annotation.frames(), list(annotation.truths)) for annotation in annotations]
    pairs = build_dataset(sequences, build_backbone(config.tracker.backbone), [a.name for a in annotations])

    runs = {polarity: fit(pairs, config.train, polarity) for polarity in Polarity}
    for polarity, run in runs.items():
        logger.info("%s network: best epoch %d, validation loss %.6g", polarity, run.best_epoch, run.best_val_loss)

    args.out.mkdir(parents=True, exist_ok=True)
    WeightNets(positive=runs[Polarity.POSITIVE].net, negative=runs[Polarity.NEGATIVE].net).save(args.out)
    _write_training_log(args.out / TRAINING_LOG_FILE, runs)
    return EXIT_OK


def cmd_gen(args: argparse.Namespace, config: RunConfig) -> int:  # noqa: ARG001
    """Render a scene file, a named archetype or a whole suite into the OTB layout."""
    if args.suite is not None:
        for name, spec in synthetic_suite(args.suite, args.frames, args.seed or 0):
            write_otb(args.out / name, *render(spec))
        return EXIT_OK

    if args.scene is not None:
        spec = load_scene(args.scene)
    elif args.archetype is not None:
        spec = archetype(args.archetype, args.frames)
    else:
        msg = "gen needs a scene file, --archetype or --suite."
        raise InvalidArgumentError(msg)
    if args.seed is not None:
        spec = SceneSpec.model_validate({**spec.model_dump(), "seed": args.seed})
    write_otb(args.out, *render(spec))
    return EXIT_OK


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="key = value configuration file")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one configuration key")
    parser.add_argument("--seed", type=int, help="seed for candidate sampling, training and scene rendering")
    parser.add_argument("--out", type=Path, required=True, help="output directory")


def _tracking(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mode", choices=[mode.value for mode in TrackerMode], help="weight generation mode")
    parser.add_argument("--net", type=Path, help=f"directory holding {POSITIVE_FILE} and {NEGATIVE_FILE}")


def build_parser() -> argparse.ArgumentParser:
    """The argument parser of the ``fmst`` command."""
    parser = argparse.ArgumentParser(prog="fmst", description="Feature map selection tracking with learned weights.")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", help="log debug messages")
    verbosity.add_argument("--quiet", "-q", action="store_true", help="only log warnings and errors")
    commands = parser.add_subparsers(dest="command", required=True)

    track = commands.add_parser("track", help="track one sequence")
    track.add_argument("sequence", type=Path, help="OTB-style sequence directory")
    track.add_argument("--init", help="initial rect 'x,y,w,h' (top-left); defaults to the first ground-truth line")
    track.add_argument("--overlay", action="store_true", help="write frames with the predicted rect drawn in")
    _common(track)
    _tracking(track)
    track.set_defaults(handler=cmd_track)

    bench = commands.add_parser("bench", help="one-pass evaluation of a dataset")
    bench.add_argument("root", type=Path, help="directory of OTB-style task directories")
    bench.add_argument("--jobs", type=int, default=None, help="parallel tasks (default: all cores)")
    bench.add_argument("--oracle", action="store_true", help="use the ground truth as prediction")
    bench.add_argument("--plots", action="store_true", help="write SVG precision and success plots")
    _common(bench)
    _tracking(bench)
    bench.set_defaults(handler=cmd_bench)

    train = commands.add_parser("train", help="train the weight networks")
    train.add_argument("roots", type=Path, nargs="+", help="task directories or directories of tasks")
    _common(train)
    train.set_defaults(handler=cmd_train)

    gen = commands.add_parser("gen", help="render synthetic sequences")
    source = gen.add_mutually_exclusive_group()
    source.add_argument("scene", type=Path, nargs="?", help="JSON scene description")
    source.add_argument("--archetype", choices=ARCHETYPES, help="render a built-in scene")
    source.add_argument("--suite", type=int, metavar="COUNT", help="render COUNT built-in scenes into OUT/<name>")
    gen.add_argument("--frames", type=int, default=100, help="frames per built-in scene")
    _common(gen)
    gen.set_defaults(handler=cmd_gen)

    return parser


def configure_logging(*, verbose: bool = False, quiet: bool = False) -> None:
    """Route log records to stderr at the requested level."""
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=_LOG_FORMAT, force=True)


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point of the ``fmst`` command; returns the exit code."""
    arguments = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(arguments)
    configure_logging(verbose=args.verbose, quiet=args.quiet)
    handler: Callable[[argparse.Namespace, RunConfig], int] = args.handler

    start = time.perf_counter()
    try:
        config = load_config(args.config, _overrides(args))
        code = handler(args, config)
        _write_run_files(args, config, time.perf_counter() - start, arguments)
    except _INPUT_ERRORS as err:
        logger.error("%s", err)  # noqa: TRY400
        return EXIT_USAGE
    except Exception:
        logger.exception("fmst %s failed", args.command)
        return EXIT_INTERNAL
    return code


if __name__ == "__main__":
    sys.exit(main())
