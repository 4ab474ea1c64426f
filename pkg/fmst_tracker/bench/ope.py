# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""
One-pass evaluation over a set of tasks.

Every task is tracked once from its first ground-truth rect. Frame 0 is the given
initialization and is left out of the metrics. Frames (and precomputed features) are read
before the clock starts, so the measured FPS reflects the tracking pipeline only.

Tasks run in a process pool when more than one job is requested; results are sorted by task
name before they are averaged, so the outcome does not depend on scheduling.
"""

import logging
import os
import time
from collections.abc import Sequence
from dataclasses import dataclass
from multiprocessing import Pool
from pathlib import Path

from pydantic import BaseModel, ConfigDict, ValidationError

from fmst_tracker.bench.annotations import SequenceAnnotation, load_annotations
from fmst_tracker.bench.metrics import EvalResult, average_results, evaluate
from fmst_tracker.config import TrackerConfig
from fmst_tracker.domain.geometry import Rect
from fmst_tracker.errors import EmptyDatasetError, FmstError
from fmst_tracker.features.backbone import FileBackbone
from fmst_tracker.tracker import Tracker
from fmst_tracker.weightnet.checkpoint import WeightNets

logger = logging.getLogger(__name__)


class SkippedTask(BaseModel):
    """A task that could not be evaluated and why."""

    model_config = ConfigDict(frozen=True)

    name: str
    reason: str


class TaskOutcome(BaseModel):
    """Result of one task: metrics and predictions, or the reason it was skipped."""

    model_config = ConfigDict(frozen=True)

    name: str
    result: EvalResult | None = None
    predictions: tuple[Rect, ...] = ()
    error: str | None = None


class OpeReport(BaseModel):
    """Per-task results, their uniform average and the skipped tasks."""

    model_config = ConfigDict(frozen=True)

    results: tuple[EvalResult, ...]
    average: EvalResult
    skipped: tuple[SkippedTask, ...] = ()
    predictions: dict[str, tuple[Rect, ...]] = {}


@dataclass(frozen=True)
class _Job:
    task: SequenceAnnotation | Path
    config: TrackerConfig
    nets: WeightNets | None
    oracle: bool


def track_task(
    annotation: SequenceAnnotation, config: TrackerConfig, nets: WeightNets | None = None, *, oracle: bool = False
) -> tuple[list[Rect], float]:
    """
    Track one task and return the predictions for frames 1..T-1 with the tracking time in seconds.

    With `oracle` the ground truth is returned as the prediction and no tracker is built.
    """
    if oracle:
        return list(annotation.truths[1:]), 0.0

    frames = annotation.frames()
    tracker = Tracker(config, nets=nets).for_task(annotation.name)
    if isinstance(tracker.backbone, FileBackbone):
        tracker.backbone.preload(range(len(frames)))

    start = time.perf_counter()
    predictions = tracker.track(frames, annotation.truths[0])
    return predictions, time.perf_counter() - start


def _run_job(job: _Job) -> TaskOutcome:
    name = job.task.name
    try:
        annotation = job.task if isinstance(job.task, SequenceAnnotation) else load_annotations(job.task)
        predictions, seconds = track_task(annotation, job.config, job.nets, oracle=job.oracle)
        result = evaluate(annotation.name, predictions, annotation.truths[1:], seconds)
    except (FmstError, OSError, ValidationError) as err:
        return TaskOutcome(name=name, error=f"{type(err).__name__}: {err}")
    return TaskOutcome(name=annotation.name, result=result, predictions=tuple(predictions))


def run_ope(
    tasks: Sequence[SequenceAnnotation | Path],
    config: TrackerConfig,
    nets: WeightNets | None = None,
    *,
    jobs: int | None = 1,
    oracle: bool = False,
) -> OpeReport:
    """
    Evaluate every task and average the results uniformly.

    Tasks given as directories are loaded inside the worker; a task that cannot be read or
    tracked is skipped and listed in the report. ``jobs=None`` uses every available core.
    """
    if not tasks:
        msg = "No tasks to evaluate."
        raise EmptyDatasetError(msg)

    work = [_Job(task=task, config=config, nets=nets, oracle=oracle) for task in tasks]
    processes = min(jobs if jobs is not None else (os.cpu_count() or 1), len(work))
    if processes > 1:
        with Pool(processes=processes) as pool:
            outcomes = list(pool.imap_unordered(_run_job, work))
    else:
        outcomes = [_run_job(job) for job in work]
    outcomes.sort(key=lambda outcome: outcome.name)

    results: list[EvalResult] = []
    skipped: list[SkippedTask] = []
    predictions: dict[str, tuple[Rect, ...]] = {}
    for outcome in outcomes:
        if outcome.result is None:
            logger.warning("Skipping task %s: %s", outcome.name, outcome.error)
            skipped.append(SkippedTask(name=outcome.name, reason=outcome.error or "unknown error"))
            continue
        logger.info(
            "%s: precision %.2f, success %.2f, %.1f fps",
            outcome.name,
            outcome.result.precision_score,
            outcome.result.success_score,
            outcome.result.fps,
        )
        results.append(outcome.result)
        predictions[outcome.name] = outcome.predictions

    if not results:
        msg = f"All {len(skipped)} tasks were skipped."
        raise EmptyDatasetError(msg)
    return OpeReport(
        results=tuple(results), average=average_results(results), skipped=tuple(skipped), predictions=predictions
    )
