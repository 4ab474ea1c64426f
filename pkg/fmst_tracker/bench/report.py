# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""
Benchmark output files.

- ``results.json``: the curves and scores of every task, of the average and the skipped
  tasks. It holds no timing, so identical runs write identical files.
- ``timing.json``: tracking seconds and frames per second of every task and in total.
- ``curves.csv``: ``kind,threshold,value`` rows of the averaged precision and success curves.
- ``precision.svg`` / ``success.svg``: optional plots of the averaged curves; the precision
  plot marks the 20 px threshold.
- ``predictions/<task>.txt``: the predicted rects in the ground-truth format.
"""

import csv
import logging
from pathlib import Path

import matplotlib as mpl
from matplotlib.figure import Figure
from pydantic import BaseModel, ConfigDict, computed_field

from fmst_tracker.bench.annotations import write_annotations
from fmst_tracker.bench.metrics import PRECISION_SCORE_AT, Curve, EvalResult
from fmst_tracker.bench.ope import OpeReport, SkippedTask

logger = logging.getLogger(__name__)

RESULTS_FILE = "results.json"
TIMING_FILE = "timing.json"
CURVES_FILE = "curves.csv"
PREDICTIONS_DIR = "predictions"


class TaskScores(BaseModel):
    """Curves and scores of one task, or of the average."""

    model_config = ConfigDict(frozen=True)

    name: str
    precision: Curve
    success: Curve
    frames: int

    @computed_field  # type: ignore[prop-decorator]
    @property
    def precision_score(self) -> float:
        return self.precision.score

    @computed_field  # type: ignore[prop-decorator]
    @property
    def success_score(self) -> float:
        return self.success.score

    @classmethod
    def of(cls, result: EvalResult) -> "TaskScores":
        return cls(name=result.name, precision=result.precision, success=result.success, frames=result.frames)


class ResultsDocument(BaseModel):
    """The structure written to ``results.json``."""

    model_config = ConfigDict(frozen=True)

    tasks: tuple[TaskScores, ...]
    average: TaskScores
    skipped: tuple[SkippedTask, ...]


class TaskTiming(BaseModel):
    """Wall-clock cost of tracking one task, or of all of them."""

    model_config = ConfigDict(frozen=True)

    name: str
    frames: int
    seconds: float
    fps: float

    @classmethod
    def of(cls, result: EvalResult) -> "TaskTiming":
        return cls(name=result.name, frames=result.frames, seconds=result.seconds, fps=result.fps)


class TimingDocument(BaseModel):
    """The structure written to ``timing.json``."""

    model_config = ConfigDict(frozen=True)

    tasks: tuple[TaskTiming, ...]
    average: TaskTiming


def write_results(report: OpeReport, out_dir: Path) -> Path:
    """Write ``results.json``; identical runs write identical bytes."""
    out_dir.mkdir(parents=True, exist_ok=True)
    document = ResultsDocument(
        tasks=tuple(TaskScores.of(result) for result in report.results),
        average=TaskScores.of(report.average),
        skipped=report.skipped,
    )
    path = out_dir / RESULTS_FILE
    path.write_text(document.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def write_timing(report: OpeReport, out_dir: Path) -> Path:
    """Write ``timing.json`` with the measured tracking time of every task."""
    out_dir.mkdir(parents=True, exist_ok=True)
    document = TimingDocument(
        tasks=tuple(TaskTiming.of(result) for result in report.results), average=TaskTiming.of(report.average)
    )
    path = out_dir / TIMING_FILE
    path.write_text(document.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def write_curves(average: EvalResult, out_dir: Path) -> Path:
    """Write the averaged curves as ``kind,threshold,value`` rows."""
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / CURVES_FILE
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("kind", "threshold", "value"))
        for kind, curve in (("precision", average.precision), ("success", average.success)):
            rows = zip(curve.thresholds, curve.values, strict=True)
            writer.writerows((kind, repr(threshold), repr(value)) for threshold, value in rows)
    return path


def write_predictions(report: OpeReport, out_dir: Path) -> None:
    """One prediction file per evaluated task."""
    for name, rects in report.predictions.items():
        write_annotations(out_dir / PREDICTIONS_DIR / f"{name}.txt", rects)


def _plot(curve: Curve, path: Path, *, xlabel: str, title: str, mark: float | None = None) -> None:
    # Fixed hash salt and no date keep the SVG identical across runs.
    with mpl.rc_context({"svg.hashsalt": "fmst-tracker"}):
        figure = Figure(figsize=(5, 4))
        axes = figure.subplots()
        axes.plot(curve.thresholds, curve.values, "-", label=f"[{curve.score:.2f}]")
        if mark is not None:
            axes.axvline(mark, color="red", linewidth=0.8)
        axes.set(xlabel=xlabel, ylabel="Percentage of frames", ylim=(0, 100), title=title)
        axes.grid(visible=True)
        axes.legend(loc="lower right" if mark is not None else "lower left")
        figure.tight_layout()
        figure.savefig(path, format="svg", metadata={"Date": None})


def write_plots(average: EvalResult, out_dir: Path) -> tuple[Path, Path]:
    """Precision and success plots of the averaged curves."""
    out_dir.mkdir(parents=True, exist_ok=True)
    precision_path = out_dir / "precision.svg"
    success_path = out_dir / "success.svg"
    _plot(
        average.precision,
        precision_path,
        xlabel="Location error threshold (px)",
        title="Precision plot",
        mark=PRECISION_SCORE_AT,
    )
    _plot(average.success, success_path, xlabel="Overlap threshold", title="Success plot")
    logger.info("Wrote plots to %s and %s", precision_path, success_path)
    return precision_path, success_path


def write_report(report: OpeReport, out_dir: Path, *, plots: bool = False) -> None:
    """Write every benchmark output file into `out_dir`."""
    write_results(report, out_dir)
    write_timing(report, out_dir)
    write_curves(report.average, out_dir)
    write_predictions(report, out_dir)
    if plots:
        write_plots(report.average, out_dir)
