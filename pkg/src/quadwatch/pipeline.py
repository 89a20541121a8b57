"""End-to-end wiring: frames in, per-pair verdicts out to CSV, socket or annotated frames."""

from __future__ import annotations

import csv
import io
import os
import socket
import sys
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence
from urllib.parse import urlsplit

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .annotate import annotate_frame
from .classify.net import ToyNet, classify_rois
from .detect.lk import TrackStatus
from .detect.motion import DETECT_STAGES, STAGE_FLOW, detect_frame, frame_pyramid
from .detect.params import DetectParams
from .imgcore import GrayImage, QuadFrame, save_image, save_ppm
from .labels import DEFAULT_CLASS_NAMES
from .roi import N_ROIS, RoiConfig, default_config
from .timing import NullTimer, StageTimer
from .track import TrackParams, Transition, initial_states, motion_verdict, roi_verdict, update_tracking
from .verdict import FrameVerdict, RoiMode
from .wire import encode_message

STAGE_TRACK = "Stopped-object tracking"
STAGE_CLASSIFY = "ROI classification"
EMPTY_CLASS = "empty"


class Mode(str, Enum):
    DETECT_ONLY = "detect"
    DETECT_TRACK = "detect-track"
    CLASSIFY_ONLY = "classify"
    FULL = "full"

    @property
    def detects(self) -> bool:
        return self is not Mode.CLASSIFY_ONLY

    @property
    def tracks(self) -> bool:
        return self in (Mode.DETECT_TRACK, Mode.FULL)

    @property
    def classifies(self) -> bool:
        return self in (Mode.CLASSIFY_ONLY, Mode.FULL)


# ---------------------------------------------------------------------------
# sinks


class CsvSink:
    """``frame,roi,mode,class,confidence``, one row per occupied or labelled ROI."""

    def __init__(self, fh: IO[str], class_names: Sequence[str] = DEFAULT_CLASS_NAMES, own: bool = False):
        self.fh = fh
        self.class_names = tuple(class_names)
        self.own = own
        self.writer = csv.writer(fh, lineterminator="\n")
        self.writer.writerow(["frame", "roi", "mode", "class", "confidence"])

    def emit(self, verdict: FrameVerdict, frame: QuadFrame) -> None:
        for roi in sorted(set(verdict.occupied) | set(verdict.labels)):
            mode = verdict.occupied.get(roi, RoiMode.EMPTY).value
            name, conf = "", ""
            if roi in verdict.labels:
                class_id, p = verdict.labels[roi]
                name = self.class_names[class_id] if class_id < len(self.class_names) else str(class_id)
                conf = f"{p:.6f}"
            self.writer.writerow([verdict.frame_index, roi, mode, name, conf])

    def close(self) -> None:
        self.fh.flush()
        if self.own:
            self.fh.close()


class SocketSink:
    """Streams QWD1 messages over TCP."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)

    def emit(self, verdict: FrameVerdict, frame: QuadFrame) -> None:
        self.sock.sendall(encode_message(verdict))

    def close(self) -> None:
        self.sock.close()


class FramesSink:
    """Annotated colour frames as ``annotated_%05d.ppm``."""

    def __init__(self, out_dir: str | os.PathLike, config: RoiConfig | None,
                 class_names: Sequence[str] = DEFAULT_CLASS_NAMES):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.class_names = tuple(class_names)

    def emit(self, verdict: FrameVerdict, frame: QuadFrame) -> None:
        config = self.config or default_config(frame.width, frame.height)
        rgb = annotate_frame(frame, verdict, config, self.class_names)
        save_ppm(rgb, self.out / f"annotated_{verdict.frame_index:05d}.ppm")

    def close(self) -> None:
        pass


class ListSink:
    def __init__(self):
        self.verdicts: list[FrameVerdict] = []

    def emit(self, verdict: FrameVerdict, frame: QuadFrame) -> None:
        self.verdicts.append(verdict)

    def close(self) -> None:
        pass


def make_sink(target: str, *, config: RoiConfig | None = None, class_names=DEFAULT_CLASS_NAMES,
              stdout: IO[str] | None = None):
    """``csv`` (stdout), ``csv:<path>``, ``socket://host:port`` or ``frames:<dir>``."""
    if target == "csv":
        return CsvSink(stdout or sys.stdout, class_names)
    if target.startswith("csv:"):
        return CsvSink(open(target[4:], "w", newline=""), class_names, own=True)
    if target.startswith("socket://"):
        parts = urlsplit(target)
        if not parts.hostname or parts.port is None:
            raise ValueError(f"socket sink needs host and port: {target!r}")
        return SocketSink(parts.hostname, parts.port)
    if target.startswith("frames:"):
        return FramesSink(target[7:], config, class_names)
    raise ValueError(f"unknown sink {target!r}; use csv, csv:<path>, socket://host:port or frames:<dir>")


# ---------------------------------------------------------------------------
# debug dumps


class TrackDump:
    """``frame,roi,x0,y0,x1,y1,status,residual``; tracked coordinates are blank unless converged."""

    def __init__(self, fh: IO[str]):
        self.fh = fh
        self.writer = csv.writer(fh, lineterminator="\n")
        self.writer.writerow(["frame", "roi", "x0", "y0", "x1", "y1", "status", "residual"])

    def write(self, frame_index: int, tracks, config: RoiConfig) -> None:
        if not tracks:
            return
        owner = config.locate([t.origin.x for t in tracks], [t.origin.y for t in tracks])
        for t, k in zip(tracks, owner):
            ok = t.status is TrackStatus.CONVERGED
            self.writer.writerow([
                frame_index, int(k), f"{t.origin.x:.4f}", f"{t.origin.y:.4f}",
                f"{t.tracked_x:.4f}" if ok else "", f"{t.tracked_y:.4f}" if ok else "",
                t.status.value, f"{t.residual:.4f}",
            ])


def write_transitions(transitions: Iterable[Transition], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["frame", "roi", "old_mode", "new_mode", "survivors", "resultant"])
    for t in transitions:
        w.writerow([t.frame, t.roi, t.old_mode.value, t.new_mode.value, t.survivors, f"{t.resultant:.4f}"])


# ---------------------------------------------------------------------------
# the loop


@dataclass
class PipelineStats:
    pairs: int = 0
    forward_passes: int = 0
    transitions: list[Transition] = field(default_factory=list)
    # per pair: length-12 resultant magnitudes (detecting modes only)
    magnitudes: list[np.ndarray] = field(default_factory=list)


def _occupied_by_class(labels: dict, net: ToyNet) -> dict[int, RoiMode]:
    names = net.class_names
    return {k: RoiMode.MOVING for k, (lab, _) in labels.items() if names[lab.id] != EMPTY_CLASS}


def run_pipeline(
    source: Iterable[QuadFrame],
    mode: Mode | str = Mode.DETECT_TRACK,
    config: RoiConfig | None = None,
    params: DetectParams | None = None,
    track_params: TrackParams | None = None,
    *,
    net: ToyNet | None = None,
    sinks: Sequence = (),
    n_jobs: int = 1,
    timer: StageTimer | None = None,
    mask_dir: str | os.PathLike | None = None,
    track_dump: TrackDump | None = None,
    stats: PipelineStats | None = None,
) -> Iterator[FrameVerdict]:
    """Yield one verdict per consecutive frame pair, tagged with the later frame's index.

    Detect modes run differencing, features and LK; tracking modes add the
    stopped-object latch; classifying modes run the ToyNet on all ROIs
    (``classify``) or on the occupied ones (``full``). In ``classify`` mode an
    ROI counts as occupied when its top class is not ``empty``. Sinks are
    closed even when the source fails part-way.
    """
    mode = Mode(mode)
    params = params or DetectParams()
    track_params = track_params or TrackParams()
    if mode.classifies and net is None:
        raise ValueError(f"mode {mode.value!r} needs classifier weights")
    stats = stats if stats is not None else PipelineStats()
    clock = timer or NullTimer()
    stages = DETECT_STAGES if mode.detects else ()
    if mode.tracks:
        stages += (STAGE_TRACK,)
    if mode.classifies:
        stages += (STAGE_CLASSIFY,)
    if mask_dir is not None:
        Path(mask_dir).mkdir(parents=True, exist_ok=True)

    prev: QuadFrame | None = None
    prev_pyr = None
    states = initial_states()
    try:
        for cur in source:
            if config is None:
                config = default_config(cur.width, cur.height)
            cur_pyr = None
            if mode.detects:
                with clock.stage(STAGE_FLOW):
                    cur_pyr = frame_pyramid(cur, params)
            if prev is None:
                prev, prev_pyr = cur, cur_pyr
                continue

            if mode.detects:
                debug = {} if mask_dir is not None else None
                motions, tracks = detect_frame(prev, cur, config, params, prev_pyr=prev_pyr, cur_pyr=cur_pyr,
                                               n_jobs=n_jobs, timer=clock, debug=debug)
                stats.magnitudes.append(np.array([m.magnitude for m in motions]))
                if debug is not None:
                    save_image(debug["mask"].to_image(), Path(mask_dir) / f"mask_{cur.frame_index:05d}.pgm")
                if track_dump is not None:
                    track_dump.write(cur.frame_index, tracks, config)
                if mode.tracks:
                    with clock.stage(STAGE_TRACK):
                        states = update_tracking(states, motions, tracks, prev_pyr, cur_pyr, track_params,
                                                 config=config, frame_index=cur.frame_index,
                                                 detect_params=params, log=stats.transitions)
                        verdict = roi_verdict(states, motions, cur.frame_index)
                else:
                    verdict = motion_verdict(motions, cur.frame_index)
            else:
                verdict = FrameVerdict(cur.frame_index)

            if mode.classifies:
                with clock.stage(STAGE_CLASSIFY):
                    selected = range(N_ROIS) if mode is Mode.CLASSIFY_ONLY else sorted(verdict.occupied)
                    labels = classify_rois(net, cur, config, selected)
                    stats.forward_passes += len(labels)
                    occupied = _occupied_by_class(labels, net) if mode is Mode.CLASSIFY_ONLY else verdict.occupied
                    verdict = FrameVerdict(cur.frame_index, dict(occupied),
                                           {k: (lab.id, conf) for k, (lab, conf) in labels.items()})
            clock.end_frame(stages)
            stats.pairs += 1
            for sink in sinks:
                sink.emit(verdict, cur)
            yield verdict
            prev, prev_pyr = cur, cur_pyr
    finally:
        for sink in sinks:
            sink.close()


def csv_output(verdicts_source: Iterable[QuadFrame], mode, config=None, params=None, track_params=None,
               **kwargs) -> str:
    """Run the pipeline and return its verdict CSV as a string."""
    net = kwargs.get("net")
    buf = io.StringIO()
    sink = CsvSink(buf, net.class_names if net is not None else DEFAULT_CLASS_NAMES)
    for _ in run_pipeline(verdicts_source, mode, config, params, track_params, sinks=[sink], **kwargs):
        pass
    return buf.getvalue()


# ---------------------------------------------------------------------------
# benchmark

MIN_BENCH_FRAMES = 30


@dataclass(frozen=True)
class BenchReport:
    mode: str
    frames: int
    seconds: float
    stages: dict[str, tuple[float, float]]

    @property
    def fps(self) -> float:
        return (self.frames - 1) / self.seconds if self.seconds > 0 else float("inf")

    def format_table(self) -> str:
        width = max(len(s) for s in self.stages) if self.stages else 10
        lines = [f"mode {self.mode}: {self.frames} frames, {self.seconds:.3f} s, {self.fps:.2f} fps",
                 f"{'stage':<{width}}  {'mean ms':>9}  {'std ms':>9}"]
        for name, (mean, std) in self.stages.items():
            lines.append(f"{name:<{width}}  {mean:9.3f}  {std:9.3f}")
        return "\n".join(lines)


def benchmark(frames: Sequence[QuadFrame], mode: Mode | str = Mode.DETECT_ONLY, config: RoiConfig | None = None,
              params: DetectParams | None = None, track_params: TrackParams | None = None, *,
              net: ToyNet | None = None, n_jobs: int = 1) -> BenchReport:
    """Time the pipeline over frames already in memory, so file I/O is excluded.

    fps is ``(frames - 1) / processing seconds``; stage rows are per-pair mean
    and standard deviation in milliseconds.
    """
    frames = list(frames)
    if len(frames) < MIN_BENCH_FRAMES:
        raise ValueError(f"benchmark needs at least {MIN_BENCH_FRAMES} frames, got {len(frames)}")
    mode = Mode(mode)
    timer = StageTimer()
    t0 = time.perf_counter()
    for _ in run_pipeline(frames, mode, config, params, track_params, net=net, n_jobs=n_jobs, timer=timer):
        pass
    seconds = time.perf_counter() - t0
    summary = timer.summary()
    ordered = {name: summary[name] for name in DETECT_STAGES if name in summary}
    for name in DETECT_STAGES:
        ordered.setdefault(name, (0.0, 0.0))
    for name in (STAGE_TRACK, STAGE_CLASSIFY):
        if name in summary:
            ordered[name] = summary[name]
    return BenchReport(mode.value, len(frames), seconds, ordered)


# ---------------------------------------------------------------------------
# scikit-learn facade


def _as_frames(X) -> list[QuadFrame]:
    if isinstance(X, np.ndarray) or (isinstance(X, (list, tuple)) and X and isinstance(X[0], np.ndarray)):
        arr = check_array(np.asarray(X), allow_nd=True, ensure_2d=False, dtype=np.uint8)
        if arr.ndim != 3:
            raise ValueError(f"expected frames shaped (n_frames, height, width), got {arr.shape}")
        frames = [QuadFrame(GrayImage(a), k) for k, a in enumerate(arr)]
    else:
        frames = []
        for k, f in enumerate(X):
            if isinstance(f, GrayImage):
                f = QuadFrame(f, k)
            if not isinstance(f, QuadFrame):
                raise TypeError(f"frame {k}: expected QuadFrame, GrayImage or array, got {type(f).__name__}")
            frames.append(f)
    if len(frames) < 2:
        raise ValueError(f"need at least 2 frames, got {len(frames)}")
    return frames


class MovingObjectDetector(BaseEstimator):
    """Per-ROI occupancy for a frame sequence.

    ``predict`` returns an ``(n_frames - 1, 12)`` boolean matrix, row ``i``
    being the verdict for frames ``(i, i + 1)``; ``transform`` returns the
    matching per-ROI resultant magnitudes in pixels. ``fit`` only fixes the ROI
    layout (from ``roi_config`` or the frame size); nothing is learned.
    """

    def __init__(self, tracking=True, detect_params=None, track_params=None, roi_config=None, n_jobs=1):
        self.tracking = tracking
        self.detect_params = detect_params
        self.track_params = track_params
        self.roi_config = roi_config
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        frames = _as_frames(X)
        self.config_ = self.roi_config or default_config(frames[0].width, frames[0].height)
        self.n_features_in_ = N_ROIS
        return self

    def _run(self, X) -> tuple[list[FrameVerdict], PipelineStats]:
        check_is_fitted(self, "config_")
        stats = PipelineStats()
        mode = Mode.DETECT_TRACK if self.tracking else Mode.DETECT_ONLY
        verdicts = list(run_pipeline(_as_frames(X), mode, self.config_, self.detect_params, self.track_params,
                                     n_jobs=self.n_jobs, stats=stats))
        return verdicts, stats

    def predict(self, X) -> np.ndarray:
        verdicts, _ = self._run(X)
        out = np.zeros((len(verdicts), N_ROIS), dtype=bool)
        for i, v in enumerate(verdicts):
            out[i, sorted(v.occupied)] = True
        return out

    def transform(self, X) -> np.ndarray:
        _, stats = self._run(X)
        return np.stack(stats.magnitudes)
