"""Occupancy precision/recall over (frame, ROI) cells and per-mode experiment reports."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from typing import IO, Sequence

from .classify.net import ToyNet
from .detect.params import DetectParams
from .imgcore import QuadFrame
from .roi import N_ROIS, RoiConfig
from .synth import GroundTruth
from .pipeline import Mode, PipelineStats, run_pipeline
from .track import TrackParams
from .verdict import FrameVerdict


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def precision(c: ConfusionCounts) -> float | None:
    """tp / (tp + fp); None when nothing was predicted."""
    den = c.tp + c.fp
    return c.tp / den if den else None


def recall(c: ConfusionCounts) -> float | None:
    """tp / (tp + fn); None when the truth is empty."""
    den = c.tp + c.fn
    return c.tp / den if den else None


def _cells(v) -> frozenset[int]:
    if isinstance(v, FrameVerdict):
        return v.occupied_set
    return frozenset(v)


def score(verdicts: Sequence, truth: GroundTruth) -> ConfusionCounts:
    """Count every (frame, ROI) cell; ``verdicts[i]`` is compared with truth frame ``i``.

    Each verdict may be a FrameVerdict or any iterable of occupied ROI indices.
    """
    if len(verdicts) != len(truth):
        raise ValueError(f"{len(verdicts)} verdicts for {len(truth)} truth frames")
    tp = fp = fn = 0
    for v, f in zip(verdicts, range(len(truth))):
        pred = _cells(v)
        real = truth.occupied(f)
        tp += len(pred & real)
        fp += len(pred - real)
        fn += len(real - pred)
    return ConfusionCounts(tp, fp, fn, N_ROIS * len(truth) - tp - fp - fn)


def class_accuracy(predictions: Sequence, truth: GroundTruth, class_names: Sequence[str] | None = None) -> float | None:
    """Fraction of true-positive cells whose predicted class matches the truth label.

    ``predictions[i]`` is either a FrameVerdict (class ids, resolved through
    ``class_names``) or a dict ``roi -> class name``. Returns None when there
    are no labelled true-positive cells, rather than pretending 0 or 1.
    """
    if len(predictions) != len(truth):
        raise ValueError(f"{len(predictions)} predictions for {len(truth)} truth frames")
    hits = total = 0
    for f, p in enumerate(predictions):
        if isinstance(p, FrameVerdict):
            if class_names is None:
                raise ValueError("class_names are needed to read class ids from verdicts")
            names = {k: class_names[c] for k, (c, _) in p.labels.items()}
            occupied = p.occupied_set
        else:
            names = dict(p)
            occupied = frozenset(names)
        for roi, cell in truth.frames[f].items():
            if roi in occupied and roi in names:
                total += 1
                hits += names[roi] == cell.label
    return hits / total if total else None


@dataclass(frozen=True)
class EvalReport:
    mode: str
    frames: int
    confusion: ConfusionCounts
    seconds: float
    forward_passes: int = 0
    class_accuracy: float | None = None

    @property
    def precision(self) -> float | None:
        return precision(self.confusion)

    @property
    def recall(self) -> float | None:
        return recall(self.confusion)

    @property
    def fps(self) -> float:
        return self.frames / self.seconds if self.seconds > 0 else float("inf")

    def row(self) -> dict:
        def fmt(v):
            return "" if v is None else f"{v:.4f}"

        c = self.confusion
        return {
            "mode": self.mode, "frames": self.frames, "tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn,
            "precision": fmt(self.precision), "recall": fmt(self.recall),
            "class_accuracy": fmt(self.class_accuracy), "forward_passes": self.forward_passes,
            "fps": f"{self.fps:.2f}",
        }


REPORT_FIELDS = ("mode", "frames", "tp", "fp", "fn", "tn", "precision", "recall",
                 "class_accuracy", "forward_passes", "fps")


def write_report_csv(reports: Sequence[EvalReport], fh: IO[str]) -> None:
    w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.row())


def format_table(reports: Sequence[EvalReport]) -> str:
    """Fixed-width table; undefined metrics print as ``n/a``."""
    head = ("mode", "precision", "recall", "class acc", "fwd passes", "fps", "tp", "fp", "fn")
    rows = []
    for r in reports:
        def pct(v):
            return "n/a" if v is None else f"{100 * v:.2f}%"

        c = r.confusion
        rows.append((r.mode, pct(r.precision), pct(r.recall), pct(r.class_accuracy),
                     str(r.forward_passes), f"{r.fps:.2f}", str(c.tp), str(c.fp), str(c.fn)))
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h) for i, h in enumerate(head)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in rows]
    return "\n".join(lines)


def run_experiment(mode: Mode | str, frames: Sequence[QuadFrame], truth: GroundTruth,
                   config: RoiConfig | None = None, params: DetectParams | None = None,
                   track_params: TrackParams | None = None, *, net: ToyNet | None = None,
                   n_jobs: int = 1) -> EvalReport:
    """Run one experiment mode and score it.

    ``truth`` covers every input frame; verdict ``i`` (frames ``i``, ``i+1``)
    is scored against truth frame ``i + 1``. fps counts processed pairs over
    wall-clock processing time, with frames already in memory.
    """
    mode = Mode(mode)
    frames = list(frames)
    if len(truth) != len(frames):
        raise ValueError(f"truth has {len(truth)} frames, sequence has {len(frames)}")
    stats = PipelineStats()
    t0 = time.perf_counter()
    verdicts = list(run_pipeline(frames, mode, config, params, track_params, net=net, n_jobs=n_jobs, stats=stats))
    seconds = time.perf_counter() - t0
    scored = truth.subset(1)
    acc = class_accuracy(verdicts, scored, net.class_names) if mode.classifies else None
    return EvalReport(mode.value, len(verdicts), score(verdicts, scored), seconds, stats.forward_passes, acc)
