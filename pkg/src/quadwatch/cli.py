"""``quadwatch`` command line: run, bench, eval, synth render, train."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields

from .classify.data import load_image_dataset, make_shape_dataset
from .classify.estimator import ToyNetClassifier
from .classify.net import ToyNet, load_weights, save_weights
from .detect.params import DetectParams
from .evaluation import format_table, run_experiment, write_report_csv
from .imgcore import iter_sequence
from .labels import DEFAULT_CLASS_NAMES
from .pipeline import Mode, PipelineStats, TrackDump, benchmark, make_sink, run_pipeline, write_transitions
from .roi import load_roi_config
from .synth import load_scenario, random_scenario, save_scenario, stop_and_hold_scenario, read_truth_csv, write_rendered
from .track import TrackParams

log = logging.getLogger("quadwatch")


def _add_detector_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("detector")
    for f in fields(DetectParams):
        flag = "--" + f.name.replace("_", "-")
        if f.type in ("bool", bool):
            g.add_argument(flag, action="store_true", help="(default off)")
        else:
            kind = int if f.type in ("int", int) else float
            g.add_argument(flag, type=kind, default=f.default, help=f"(default {f.default})")
    t = p.add_argument_group("tracker")
    t.add_argument("--tracking", choices=("on", "off"), default=None,
                   help="override the tracking stage implied by --mode")
    t.add_argument("--latch-strict-paper", action="store_true",
                   help="keep a latch until the detector fires again, without re-verification")
    t.add_argument("--latch-motion-max", type=float, default=TrackParams.latch_motion_max)
    t.add_argument("--latch-min-survivors", type=float, default=TrackParams.latch_min_survivors)
    t.add_argument("--fb-error-max", type=float, default=TrackParams.fb_error_max)


def _add_input_flags(p: argparse.ArgumentParser, mode_default: str) -> None:
    p.add_argument("--input", required=True, help="directory of numbered PGM/PPM frames or a .y4m file")
    p.add_argument("--roi", help="ROI JSON config (default: the built-in layout for the frame size)")
    p.add_argument("--mode", choices=[m.value for m in Mode], default=mode_default)
    p.add_argument("--weights", help="TNW1 classifier weights for classify/full modes")
    p.add_argument("--jobs", type=int, default=1, help="threads for per-ROI feature extraction")
    _add_detector_flags(p)


def _params(args) -> tuple[DetectParams, TrackParams]:
    detect = DetectParams(**{f.name: getattr(args, f.name) for f in fields(DetectParams)})
    track = TrackParams(args.latch_motion_max, args.latch_min_survivors, args.fb_error_max,
                        strict_paper=args.latch_strict_paper)
    return detect, track


def _mode(args) -> Mode:
    mode = Mode(args.mode)
    if args.tracking == "off" and mode is Mode.DETECT_TRACK:
        return Mode.DETECT_ONLY
    if args.tracking == "on" and mode is Mode.DETECT_ONLY:
        return Mode.DETECT_TRACK
    if args.tracking == "off" and mode is Mode.FULL:
        raise SystemExit("--tracking=off is not available in full mode; use --mode detect or classify")
    return mode


def _net(args, mode: Mode) -> ToyNet | None:
    if args.weights:
        return load_weights(args.weights)
    if mode.classifies:
        raise SystemExit(f"--mode {mode.value} needs --weights (train one with `quadwatch train`)")
    return None


def cmd_run(args) -> int:
    mode = _mode(args)
    detect, track = _params(args)
    config = load_roi_config(args.roi) if args.roi else None
    net = _net(args, mode)
    names = net.class_names if net is not None else DEFAULT_CLASS_NAMES
    sinks = [make_sink(t, config=config, class_names=names) for t in (args.emit or ["csv"])]
    dump_fh = open(args.dump_tracks, "w", newline="") if args.dump_tracks else None
    stats = PipelineStats()
    try:
        for _ in run_pipeline(iter_sequence(args.input), mode, config, detect, track, net=net, sinks=sinks,
                              n_jobs=args.jobs, mask_dir=args.dump_mask,
                              track_dump=TrackDump(dump_fh) if dump_fh else None, stats=stats):
            pass
    finally:
        if dump_fh:
            dump_fh.close()
        if args.transitions:
            with open(args.transitions, "w", newline="") as fh:
                write_transitions(stats.transitions, fh)
    log.info("%d verdicts, %d classifier passes", stats.pairs, stats.forward_passes)
    return 0


def cmd_bench(args) -> int:
    mode = _mode(args)
    detect, track = _params(args)
    config = load_roi_config(args.roi) if args.roi else None
    frames = list(iter_sequence(args.input))
    report = benchmark(frames, mode, config, detect, track, net=_net(args, mode), n_jobs=args.jobs)
    print(report.format_table())
    return 0


def cmd_eval(args) -> int:
    detect, track = _params(args)
    config = load_roi_config(args.roi) if args.roi else None
    frames = list(iter_sequence(args.input))
    truth = read_truth_csv(args.truth, frames=len(frames))
    net = load_weights(args.weights) if args.weights else None
    modes = [Mode(m) for m in (args.modes or [args.mode])]
    reports = []
    for mode in modes:
        if mode.classifies and net is None:
            raise SystemExit(f"mode {mode.value} needs --weights")
        reports.append(run_experiment(mode, frames, truth, config, detect, track, net=net, n_jobs=args.jobs))
    print(format_table(reports))
    if args.report:
        with open(args.report, "w", newline="") as fh:
            write_report_csv(reports, fh)
    return 0


def cmd_synth_render(args) -> int:
    spec = load_scenario(args.spec)
    config = load_roi_config(args.roi) if args.roi else None
    truth = write_rendered(spec, args.out, config)
    log.info("wrote %d frames and %d occupied cells to %s", spec.frames, truth.total_occupied(), args.out)
    return 0


def cmd_synth_scenario(args) -> int:
    if args.kind == "stop-and-hold":
        spec = stop_and_hold_scenario(args.seed, args.width, args.height)
    else:
        spec = random_scenario(args.seed, args.frames, args.width, args.height)
    save_scenario(spec, args.out)
    return 0


def cmd_train(args) -> int:
    if args.data:
        X, y = load_image_dataset(args.data, args.side)
    else:
        X, y = make_shape_dataset(args.samples_per_class, args.side, args.seed)
    clf = ToyNetClassifier(input_side=args.side, epochs=args.epochs, batch_size=args.batch_size,
                           learning_rate=args.lr, seed=args.seed, verbose=True)
    clf.fit(X, y)
    save_weights(clf.net_, args.out)
    print(f"trained on {len(y)} images, classes {list(clf.classes_)}, "
          f"final loss {clf.loss_curve_[-1]:.4f}, training accuracy {clf.score(X, y):.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quadwatch", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="emit per-frame ROI verdicts")
    _add_input_flags(p, Mode.DETECT_TRACK.value)
    p.add_argument("--emit", action="append",
                   help="csv (stdout), csv:<path>, socket://host:port or frames:<dir>; repeatable")
    p.add_argument("--dump-mask", metavar="DIR", help="write each pair's motion mask as PGM")
    p.add_argument("--dump-tracks", metavar="CSV", help="write every LK track")
    p.add_argument("--transitions", metavar="CSV", help="write ROI state transitions")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="fps and per-stage timing (frames preloaded)")
    _add_input_flags(p, Mode.DETECT_ONLY.value)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", help="precision/recall against a truth CSV")
    _add_input_flags(p, Mode.DETECT_TRACK.value)
    p.add_argument("--truth", required=True, help="truth CSV (frame,roi,class,moving)")
    p.add_argument("--modes", nargs="+", choices=[m.value for m in Mode], help="evaluate several modes")
    p.add_argument("--report", metavar="CSV", help="also write the report as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="synthetic scenes")
    ssub = p.add_subparsers(dest="synth_command", required=True)
    r = ssub.add_parser("render", help="render a scenario JSON to numbered PGMs plus truth.csv")
    r.add_argument("--spec", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--roi")
    r.set_defaults(func=cmd_synth_render)
    s = ssub.add_parser("scenario", help="write a canned scenario JSON")
    s.add_argument("--kind", choices=("stop-and-hold", "random"), default="stop-and-hold")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--frames", type=int, default=40, help="random scenarios only")
    s.add_argument("--width", type=int, default=None)
    s.add_argument("--height", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth_scenario)

    p = sub.add_parser("train", help="train ToyNet weights")
    p.add_argument("--data", help="directory of label_name/*.pgm (default: synthetic shapes)")
    p.add_argument("--out", required=True, help="output TNW1 weight file")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--side", type=int, default=32)
    p.add_argument("--samples-per-class", type=int, default=500)
    p.set_defaults(func=cmd_train)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "synth_command", None) == "scenario":
        defaults = (1280, 720) if args.kind == "stop-and-hold" else (640, 360)
        args.width = args.width or defaults[0]
        args.height = args.height or defaults[1]
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
