import io
import socket
import threading
from pathlib import Path

import numpy as np
import pytest
from sklearn.base import clone

from oracles import textured_scene
from quadwatch.annotate import GREEN, RED, YELLOW, annotate_frame
from quadwatch.classify import ToyNet
from quadwatch.detect import DETECT_STAGES
from quadwatch.imgcore import GrayImage, QuadFrame, load_ppm_rgb
from quadwatch.pipeline import (
    CsvSink,
    ListSink,
    Mode,
    MovingObjectDetector,
    PipelineStats,
    TrackDump,
    benchmark,
    csv_output,
    make_sink,
    run_pipeline,
    write_transitions,
)
from quadwatch.roi import default_config
from quadwatch.synth import Actor, ScenarioSpec, random_scenario, render
from quadwatch.verdict import FrameVerdict, RoiMode
from quadwatch.wire import iter_messages

DATA = Path(__file__).parent / "data"


def static_frames(n, h=360, w=640, seed=0):
    img = GrayImage(textured_scene(np.random.default_rng(seed), h, w))
    return [QuadFrame(img, k) for k in range(n)]


@pytest.fixture(scope="module")
def moving_scene():
    return render(random_scenario(2, frames=12))


def test_two_static_frames_one_empty_verdict():
    out = list(run_pipeline(static_frames(2), Mode.DETECT_TRACK))
    assert out == [FrameVerdict(1)]


@pytest.mark.parametrize("n", [1, 3, 7])
def test_n_frames_give_n_minus_one_verdicts(n):
    assert len(list(run_pipeline(static_frames(n), Mode.DETECT_ONLY))) == max(n - 1, 0)


def test_stop_and_hold_latches_during_hold(stop_and_hold):
    _, frames, truth, config = stop_and_hold
    track = list(run_pipeline(frames, Mode.DETECT_TRACK, config))
    detect = list(run_pipeline(frames, Mode.DETECT_ONLY, config))
    roi = next(iter(truth.occupied(30)))
    # verdict i covers frames (i, i+1); the actor moves up to frame 20 and holds to frame 50
    occupied = sum(roi in v.occupied for v in track[:50])
    assert occupied >= 48
    hold = track[21:50]
    assert all(v.occupied.get(roi) is RoiMode.STOPPED_LATCHED for v in hold[1:])
    quiet = sum(roi not in v.occupied for v in detect[20:50])
    assert quiet >= 28


def test_modes_and_labels(moving_scene):
    frames, _ = moving_scene
    net = ToyNet.build(seed=0)
    only = list(run_pipeline(frames, Mode.CLASSIFY_ONLY, net=net))
    assert all(len(v.labels) == 12 for v in only)
    stats = PipelineStats()
    full = list(run_pipeline(frames, Mode.FULL, net=net, stats=stats))
    for v in full:
        assert set(v.labels) == set(v.occupied)
    assert stats.forward_passes == sum(len(v.occupied) for v in full)
    with pytest.raises(ValueError, match="weights"):
        list(run_pipeline(frames, Mode.FULL))


def test_csv_schema(moving_scene):
    frames, _ = moving_scene
    text = csv_output(frames, Mode.FULL, net=ToyNet.build(seed=0))
    lines = text.splitlines()
    assert lines[0] == "frame,roi,mode,class,confidence"
    assert len(lines) > 1
    for line in lines[1:]:
        frame, roi, mode, name, conf = line.split(",")
        assert 1 <= int(frame) <= 11 and 0 <= int(roi) < 12
        assert mode in ("moving", "latched")
        assert name in ToyNet.build().class_names
        assert len(conf.split(".")[1]) == 6


def test_csv_sink_rows():
    buf = io.StringIO()
    sink = CsvSink(buf)
    sink.emit(FrameVerdict(4, {7: RoiMode.STOPPED_LATCHED, 2: RoiMode.MOVING}, {2: (1, 0.5)}), None)
    sink.emit(FrameVerdict(5, {}, {0: (4, 0.25)}), None)
    assert buf.getvalue().splitlines() == [
        "frame,roi,mode,class,confidence",
        "4,2,moving,bicycle,0.500000",
        "4,7,latched,,",
        "5,0,empty,empty,0.250000",
    ]


def test_determinism_across_runs_and_threads(moving_scene):
    frames, _ = moving_scene
    runs = [csv_output(frames, Mode.DETECT_TRACK) for _ in range(3)]
    assert runs[0] == runs[1] == runs[2]
    assert csv_output(frames, Mode.DETECT_TRACK, n_jobs=4) == runs[0]


def test_socket_sink_round_trip(moving_scene):
    frames, _ = moving_scene
    server = socket.create_server(("127.0.0.1", 0))
    port = server.getsockname()[1]
    received = []

    def serve():
        conn, _ = server.accept()
        with conn, conn.makefile("rb") as fh:
            received.extend(iter_messages(fh))

    t = threading.Thread(target=serve)
    t.start()
    local = ListSink()
    sinks = [make_sink(f"socket://127.0.0.1:{port}"), local]
    list(run_pipeline(frames, Mode.DETECT_TRACK, sinks=sinks))
    t.join(timeout=10)
    server.close()
    assert received == local.verdicts and len(received) == 11


def test_frames_sink_and_dumps(tmp_path, moving_scene):
    frames, _ = moving_scene
    dump = io.StringIO()
    stats = PipelineStats()
    sinks = [make_sink(f"frames:{tmp_path / 'ann'}"), make_sink(f"csv:{tmp_path / 'v.csv'}")]
    list(run_pipeline(frames[:4], Mode.DETECT_TRACK, sinks=sinks, mask_dir=tmp_path / "masks",
                      track_dump=TrackDump(dump), stats=stats))
    assert sorted(p.name for p in (tmp_path / "ann").iterdir()) == [f"annotated_{k:05d}.ppm" for k in (1, 2, 3)]
    assert len(list((tmp_path / "masks").glob("mask_*.pgm"))) == 3
    assert (tmp_path / "v.csv").read_text().startswith("frame,roi,mode,class,confidence\n")
    rows = dump.getvalue().splitlines()
    assert rows[0] == "frame,roi,x0,y0,x1,y1,status,residual"
    for row in rows[1:]:
        cells = row.split(",")
        assert (cells[6] == "converged") == (cells[4] != "")
    buf = io.StringIO()
    write_transitions(stats.transitions, buf)
    assert buf.getvalue().splitlines()[0] == "frame,roi,old_mode,new_mode,survivors,resultant"


def test_make_sink_errors():
    for bad in ("tcp://x", "socket://nohost", "frames"):
        with pytest.raises(ValueError):
            make_sink(bad)


def test_source_failure_closes_sinks():
    closed = []

    class Probe(ListSink):
        def close(self):
            closed.append(True)

    def source():
        yield from static_frames(3)
        raise OSError("camera unplugged")

    probe = Probe()
    with pytest.raises(OSError):
        list(run_pipeline(source(), Mode.DETECT_ONLY, sinks=[probe]))
    assert len(probe.verdicts) == 2 and closed == [True]


# ---------------------------------------------------------------------------
# annotation


def test_annotate_colours():
    cfg = default_config(256, 128)
    frame = QuadFrame(GrayImage(np.full((128, 256), 90, dtype=np.uint8)))
    rgb = annotate_frame(frame, FrameVerdict(0), cfg)
    for r in cfg:
        assert tuple(rgb[r.y, r.x]) == GREEN
    rgb = annotate_frame(frame, FrameVerdict(0, {3: RoiMode.MOVING, 5: RoiMode.STOPPED_LATCHED}), cfg)
    for r in cfg:
        expect = {3: RED, 5: YELLOW}.get(r.index, GREEN)
        assert tuple(rgb[r.y + r.h - 1, r.x + r.w - 1]) == expect
    assert tuple(rgb[0, 0]) == (90, 90, 90)


def test_annotate_golden():
    """Golden produced once by annotate_frame and checked in; any drift fails byte-exactly."""
    cfg = default_config(256, 128)
    frames, _ = render(ScenarioSpec(seed=11, frames=2, actors=(Actor("textured", 20, (40, 40)),),
                                    background="textured", noise_amplitude=10, frame_width=256,
                                    frame_height=128), cfg)
    v = FrameVerdict(1, {1: RoiMode.MOVING, 4: RoiMode.STOPPED_LATCHED, 9: RoiMode.MOVING},
                     {1: (0, 0.87), 9: (3, 0.5)})
    golden = load_ppm_rgb(DATA / "annotated_golden.ppm")
    assert np.array_equal(annotate_frame(frames[1], v, cfg), golden)


# ---------------------------------------------------------------------------
# benchmark and estimator


def test_benchmark_report():
    frames, _ = render(random_scenario(4, frames=30))
    rep = benchmark(frames, Mode.DETECT_ONLY)
    assert list(rep.stages)[:4] == list(DETECT_STAGES)
    assert rep.fps == pytest.approx((rep.frames - 1) / rep.seconds)
    table = rep.format_table()
    for name in DETECT_STAGES:
        assert name in table
    trk = benchmark(frames, Mode.DETECT_TRACK)
    assert "Stopped-object tracking" in trk.stages
    with pytest.raises(ValueError, match="30"):
        benchmark(frames[:29])


def test_benchmark_verdicts_stable():
    frames, _ = render(random_scenario(5, frames=30))
    a = list(run_pipeline(frames, Mode.DETECT_ONLY))
    benchmark(frames, Mode.DETECT_ONLY)
    assert list(run_pipeline(frames, Mode.DETECT_ONLY)) == a


def test_estimator_api(moving_scene):
    frames, _ = moving_scene
    arr = np.stack([f.image.pixels for f in frames])
    est = MovingObjectDetector()
    assert clone(est).get_params() == est.get_params()
    pred = est.fit(arr).predict(arr)
    assert pred.shape == (11, 12) and pred.dtype == bool
    expect = [v.occupied_set for v in run_pipeline(frames, Mode.DETECT_TRACK)]
    assert [frozenset(np.flatnonzero(r)) for r in pred] == expect
    mags = est.transform(frames)
    assert mags.shape == (11, 12) and (mags >= 0).all()
    no_track = MovingObjectDetector(tracking=False).fit(frames).predict(frames)
    assert no_track.shape == pred.shape
    with pytest.raises(ValueError):
        est.predict(arr[:1])
