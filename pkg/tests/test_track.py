import numpy as np
import pytest

from oracles import textured_scene
from quadwatch.detect import DetectParams, FeaturePoint, RoiMotion, detect_frame, frame_pyramid
from quadwatch.imgcore import GrayImage, QuadFrame, build_pyramid
from quadwatch.roi import default_config
from quadwatch.synth import Actor, ScenarioSpec, Segment, render
from quadwatch.track import (
    RoiState,
    TrackParams,
    initial_states,
    motion_verdict,
    roi_verdict,
    update_tracking,
    verify_points,
)
from quadwatch.verdict import RoiMode

CFG = default_config(640, 360)


def quiet():
    return [RoiMotion(k, (0.0, 0.0), 0, False) for k in range(12)]


def fired(k):
    m = quiet()
    m[k] = RoiMotion(k, (10.0, 0.0), 5, True)
    return m


def run_scene(spec, params=None):
    """Drive detect_frame + update_tracking; return per-pair states and transitions."""
    frames, truth = render(spec, CFG)
    states = initial_states()
    history, log = [], []
    dp = DetectParams()
    for k in range(1, len(frames)):
        pp, cp = frame_pyramid(frames[k - 1], dp), frame_pyramid(frames[k], dp)
        motions, tracks = detect_frame(frames[k - 1], frames[k], CFG, dp, prev_pyr=pp, cur_pyr=cp)
        states = update_tracking(states, motions, tracks, pp, cp, params, config=CFG, frame_index=k, log=log)
        history.append(states)
    return history, log, truth


def halting_actor(hold=10):
    r = CFG[1]
    y = r.y + 20
    return Actor("textured", 30, (r.x + 20, y), (Segment((r.x + 80, y), 4.0), Segment(speed=0, hold=hold)))


def test_halt_latches():
    spec = ScenarioSpec(seed=3, frames=28, actors=(halting_actor(),), background="textured",
                        noise_amplitude=10, frame_width=640, frame_height=360)
    history, log, _ = run_scene(spec)
    modes = [h[1].mode for h in history]
    # moves on pairs 1..15, holds afterwards
    assert all(m is RoiMode.MOVING for m in modes[1:14])
    assert all(m is RoiMode.STOPPED_LATCHED for m in modes[17:])
    assert any(t.old_mode is RoiMode.MOVING and t.new_mode is RoiMode.STOPPED_LATCHED and t.roi == 1 for t in log)


def test_no_latch_without_prior_moving():
    spec = ScenarioSpec(seed=4, frames=28, actors=(halting_actor(),), background="textured",
                        noise_amplitude=10, frame_width=640, frame_height=360)
    _, log, _ = run_scene(spec)
    seen_moving = set()
    for t in log:
        if t.new_mode is RoiMode.MOVING:
            seen_moving.add(t.roi)
        if t.new_mode is RoiMode.STOPPED_LATCHED:
            assert t.roi in seen_moving
            assert t.old_mode is not RoiMode.EMPTY


def test_object_leaves_frame_unlatches():
    rng = np.random.default_rng(0)
    bg = np.full((360, 640), 60, dtype=np.uint8)
    patch = textured_scene(rng, 40, 40, blob=4)
    a = bg.copy()
    a[250:290, 60:100] = patch
    b = bg.copy()
    b[250:290, 64:104] = patch
    f0, f1, f2 = (QuadFrame(GrayImage(x), k) for k, x in enumerate((a, b, bg)))
    dp = DetectParams()
    p0, p1, p2 = (frame_pyramid(f, dp) for f in (f0, f1, f2))
    motions, tracks = detect_frame(f0, f1, CFG, dp, prev_pyr=p0, cur_pyr=p1)
    roi = CFG.locate([80], [270])[0]
    assert motions[roi].active
    states = update_tracking(initial_states(), motions, tracks, p0, p1, config=CFG, frame_index=1)
    assert states[roi].mode is RoiMode.MOVING
    check = verify_points(states[roi].stored_points, p1, p2, TrackParams(), dp)
    assert check.fraction < 0.5
    # detector forced quiet: case (b) must clear the ROI
    states = update_tracking(states, quiet(), [], p1, p2, config=CFG, frame_index=2)
    assert states[roi].mode is RoiMode.EMPTY and states[roi].stored_points == ()


def _latched_state(k):
    return RoiState(k, RoiMode.STOPPED_LATCHED, (FeaturePoint(100.0, 300.0),), 3)


def test_empty_stays_empty():
    pyr = build_pyramid(GrayImage(np.zeros((360, 640), dtype=np.uint8)), 3)
    out = update_tracking(initial_states(), quiet(), [], pyr, pyr, config=CFG, frame_index=1)
    assert out == initial_states()


def test_discard_rule_active_replaces_latch():
    states = initial_states()
    states[2] = _latched_state(2)
    out = update_tracking(states, fired(2), [], None, None, config=CFG, frame_index=5)
    # active with no converged tracks in the ROI cannot hold points, so it never becomes Moving
    assert out[2].mode is RoiMode.EMPTY
    spec = ScenarioSpec(seed=3, frames=3, actors=(halting_actor(),), background="textured",
                        noise_amplitude=10, frame_width=640, frame_height=360)
    frames, _ = render(spec, CFG)
    motions, tracks = detect_frame(frames[0], frames[1], CFG)
    states = initial_states()
    states[1] = _latched_state(1)
    out = update_tracking(states, motions, tracks, None, None, config=CFG, frame_index=1)
    assert out[1].mode is RoiMode.MOVING and out[1].last_positive_frame == 1
    assert FeaturePoint(100.0, 300.0) not in out[1].stored_points


def test_strict_paper_never_expires():
    states = initial_states()
    states[4] = _latched_state(4)
    pyr = build_pyramid(GrayImage(np.zeros((360, 640), dtype=np.uint8)), 3)
    strict = update_tracking(states, quiet(), [], pyr, pyr, TrackParams(strict_paper=True), config=CFG, frame_index=9)
    assert strict[4] == states[4]
    lax = update_tracking(states, quiet(), [], pyr, pyr, TrackParams(), config=CFG, frame_index=9)
    assert lax[4].mode is RoiMode.EMPTY  # flat image: the stored point is lost


def test_misaligned_inputs():
    with pytest.raises(ValueError):
        update_tracking(initial_states()[:11], quiet(), [], None, None, config=CFG, frame_index=0)
    motions = quiet()
    motions[0], motions[1] = motions[1], motions[0]
    with pytest.raises(ValueError, match="misaligned"):
        update_tracking(initial_states(), motions, [], None, None, config=CFG, frame_index=0)


def test_state_invariant():
    with pytest.raises(ValueError):
        RoiState(0, RoiMode.MOVING, ())
    with pytest.raises(ValueError):
        RoiState(0, RoiMode.EMPTY, (FeaturePoint(1, 1),))


def test_deterministic():
    spec = ScenarioSpec(seed=5, frames=16, actors=(halting_actor(4),), background="textured",
                        noise_amplitude=10, frame_width=640, frame_height=360)
    a, la, _ = run_scene(spec)
    b, lb, _ = run_scene(spec)
    assert a == b and la == lb


def test_verdict_examples():
    assert roi_verdict(initial_states()).occupied_set == frozenset()
    states = initial_states()
    states[5] = RoiState(5, RoiMode.MOVING, (FeaturePoint(1, 1),), 0)
    states[7] = _latched_state(7)
    v = roi_verdict(states)
    assert v.occupied == {5: RoiMode.MOVING, 7: RoiMode.STOPPED_LATCHED}
    all_moving = [RoiState(k, RoiMode.MOVING, (FeaturePoint(1, 1),), 0) for k in range(12)]
    assert len(roi_verdict(all_moving).occupied) == 12
    mv = motion_verdict(fired(3), frame_index=4)
    assert mv.frame_index == 4 and mv.occupied == {3: RoiMode.MOVING}


def test_params_validation():
    with pytest.raises(ValueError):
        TrackParams(latch_motion_max=0)
    assert TrackParams() == TrackParams(1.5, 0.5, 1.0)
