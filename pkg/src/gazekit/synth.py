"""Synthetic step-ramp stimuli and a latency-driven model observer.

The generator stands in for recorded data: it produces a stimulus track with
intended behaviour per sample, and a simulated gaze trace with ground-truth
labels describing what the simulated eye actually did.

Observer model, for a pursuit latency ``L``:

* target step at ``T``: the eye holds still until ``T + L`` and then makes a
  minimum-jerk saccade to the new position;
* ramp over ``[T0, T1)``: the eye holds until ``T0 + L``, makes a catch-up
  saccade that lands on the moving target, pursues it with zero error until
  ``T1``, keeps going for another ``L`` ms, then saccades back onto the
  stopped target.  Without catch-up saccades the eye tracks the target
  delayed by ``L`` and stops exactly on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .model import (
    GazeError,
    GazeRecording,
    Label,
    SaccadeTiming,
    StimulusTrack,
    infer_rate,
    label_runs,
)

FIX, SAC, SP = int(Label.FIXATION), int(Label.SACCADE), int(Label.SMOOTH_PURSUIT)


class SpecError(GazeError, ValueError):
    pass


@dataclass(frozen=True)
class Fixation:
    duration: float
    position: Optional[tuple[float, float]] = None


@dataclass(frozen=True)
class Step:
    amplitude: float
    direction: float = 0.0  # degrees, 0 = rightward, 90 = upward


@dataclass(frozen=True)
class Ramp:
    duration: float
    velocity: float
    direction: float = 0.0


Segment = Union[Fixation, Step, Ramp]


@dataclass(frozen=True)
class StimulusSpec:
    segments: tuple
    rate_hz: float = 1000.0
    timing: SaccadeTiming = SaccadeTiming()

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise SpecError("stimulus needs at least one segment")
        if self.rate_hz <= 0:
            raise SpecError("rate_hz must be positive")
        for i, seg in enumerate(self.segments):
            if isinstance(seg, Fixation):
                if not seg.duration > 0:
                    raise SpecError(f"segment {i}: fixation duration must be positive")
                if seg.position is not None and i > 0:
                    raise SpecError(f"segment {i}: only the first fixation may set a position; use Step")
            elif isinstance(seg, Step):
                if seg.amplitude == 0:
                    raise SpecError(f"segment {i}: step amplitude must be non-zero")
            elif isinstance(seg, Ramp):
                if not (seg.duration > 0 and seg.velocity > 0):
                    raise SpecError(f"segment {i}: ramp duration and velocity must be positive")
            else:
                raise SpecError(f"segment {i}: unknown segment type {type(seg).__name__}")

    @classmethod
    def from_dict(cls, d: dict) -> "StimulusSpec":
        kinds = {"fixation": Fixation, "step": Step, "ramp": Ramp}
        segs = []
        for raw in d["segments"]:
            raw = dict(raw)
            kind = raw.pop("type")
            if kind not in kinds:
                raise SpecError(f"unknown segment type {kind!r}")
            if "position" in raw and raw["position"] is not None:
                raw["position"] = tuple(raw["position"])
            segs.append(kinds[kind](**raw))
        timing = SaccadeTiming(**d["timing"]) if "timing" in d else SaccadeTiming()
        return cls(tuple(segs), float(d.get("rate_hz", 1000.0)), timing)

    def to_dict(self) -> dict:
        names = {Fixation: "fixation", Step: "step", Ramp: "ramp"}
        segs = []
        for s in self.segments:
            item = {"type": names[type(s)], **s.__dict__}
            if isinstance(s, Fixation) and s.position is None:
                del item["position"]
            segs.append(item)
        return {"rate_hz": self.rate_hz, "segments": segs, "timing": self.timing.__dict__}


@dataclass(frozen=True)
class OculomotorSpec:
    """Model observer.

    ``noise_std`` is the RMS of the 2-D position noise (the usual tracker
    precision figure), so each axis gets ``noise_std / sqrt(2)``.
    """

    pursuit_latency: float = 140.0
    saccade_peak_velocity: float = 400.0
    catch_up_saccade: bool = True
    noise_std: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not self.pursuit_latency > 0:
            raise SpecError("pursuit latency must be positive")
        if self.noise_std < 0:
            raise SpecError("noise_std must be >= 0")
        if not self.saccade_peak_velocity > 0:
            raise SpecError("saccade peak velocity must be positive")


def _unit(direction_deg: float) -> np.ndarray:
    a = math.radians(direction_deg)
    return np.array([math.cos(a), math.sin(a)])


def generate_stimulus(spec: StimulusSpec) -> StimulusTrack:
    """Sample a step-ramp stimulus.

    Segment durations are rounded to whole samples (at least one).  Each step
    occupies a main-sequence-long run of Saccade-intended samples with the
    target already at its new position.
    """
    period = 1000.0 / spec.rate_hz
    pos = np.zeros(2)
    first = spec.segments[0]
    if isinstance(first, Fixation) and first.position is not None:
        pos = np.array(first.position, dtype=float)
    xs, ys, intended = [], [], []
    for seg in spec.segments:
        if isinstance(seg, Fixation):
            n = max(1, round(seg.duration / period))
            xs.append(np.full(n, pos[0]))
            ys.append(np.full(n, pos[1]))
            intended.append(np.full(n, FIX))
        elif isinstance(seg, Step):
            pos = pos + seg.amplitude * _unit(seg.direction)
            n = max(1, round(spec.timing.main_sequence(seg.amplitude) / period))
            xs.append(np.full(n, pos[0]))
            ys.append(np.full(n, pos[1]))
            intended.append(np.full(n, SAC))
        else:
            n = max(1, round(seg.duration / period))
            vel = seg.velocity / 1000.0 * _unit(seg.direction)
            el = period * np.arange(n)
            xs.append(pos[0] + vel[0] * el)
            ys.append(pos[1] + vel[1] * el)
            intended.append(np.full(n, SP))
            pos = pos + vel * (period * n)
    n_total = sum(len(a) for a in xs)
    t = period * np.arange(n_total)
    return StimulusTrack(t, np.concatenate(xs), np.concatenate(ys), np.concatenate(intended))


class StimulusEvent(NamedTuple):
    kind: int            # SAC for a step, SP for a ramp
    start: int           # first sample index of the run
    stop: int            # one past the last sample
    t0: float            # onset, ms
    t1: float            # offset, ms (start of the next run)
    p0: np.ndarray       # target position at onset
    p1: np.ndarray       # target position at offset
    velocity: np.ndarray # deg/ms, zero for steps
    amplitude: float     # step size, or ramp displacement


def track_period(track: StimulusTrack) -> float:
    return 1000.0 / infer_rate(track.t) if len(track) > 1 else 1.0


def stimulus_events(track: StimulusTrack) -> list[StimulusEvent]:
    """Steps and ramps of a sampled stimulus, recovered from its intended labels."""
    period = track_period(track)
    pos = track.positions
    events = []
    for lab, a, b in label_runs(track.intended):
        t0 = float(track.t[a])
        t1 = float(track.t[b]) if b < len(track) else float(track.t[-1]) + period
        if lab == SAC:
            before = pos[a - 1] if a > 0 else pos[a]
            events.append(StimulusEvent(SAC, a, b, t0, t1, pos[a].copy(), pos[a].copy(),
                                        np.zeros(2), float(np.hypot(*(pos[a] - before)))))
        elif lab == SP:
            if b - a > 1:
                vel = (pos[b - 1] - pos[a]) / (track.t[b - 1] - track.t[a])
            else:
                vel = (pos[b] - pos[a]) / (t1 - t0) if b < len(track) else np.zeros(2)
            p1 = pos[a] + vel * (t1 - t0)
            events.append(StimulusEvent(SP, a, b, t0, t1, pos[a].copy(), p1, vel,
                                        float(np.hypot(*(p1 - pos[a])))))
    return events


@dataclass
class _Plan:
    """Piecewise eye trajectory under construction."""

    pos: np.ndarray
    cursor: float = 0.0
    pieces: list = field(default_factory=list)

    def hold_until(self, t: float) -> None:
        if t > self.cursor:
            self.pieces.append(("hold", self.cursor, t, self.pos.copy(), None))
            self.cursor = t

    def saccade(self, duration: float, target: np.ndarray) -> None:
        if duration <= 0 or np.allclose(target, self.pos, rtol=0, atol=1e-12):
            self.pos = np.array(target, dtype=float)
            return
        self.pieces.append(("jerk", self.cursor, self.cursor + duration, self.pos.copy(), np.array(target)))
        self.cursor += duration
        self.pos = np.array(target, dtype=float)

    def track(self, until: float, velocity: np.ndarray) -> None:
        if until <= self.cursor:
            return
        self.pieces.append(("track", self.cursor, until, self.pos.copy(), velocity))
        self.pos = self.pos + velocity * (until - self.cursor)
        self.cursor = until


def _plan_eye(track: StimulusTrack, ocu: OculomotorSpec, timing: SaccadeTiming) -> _Plan:
    lat = ocu.pursuit_latency
    plan = _Plan(pos=track.positions[0].astype(float))
    for ev in stimulus_events(track):
        start = max(ev.t0 + lat, plan.cursor)
        plan.hold_until(start)
        if ev.kind == SAC:
            amp = float(np.hypot(*(ev.p0 - plan.pos)))
            plan.saccade(timing.eye_duration(amp), ev.p0)
            continue
        speed = float(np.hypot(*ev.velocity)) * 1000.0
        if ocu.catch_up_saccade:
            d_catch = timing.catch_up_duration(speed, start - ev.t0)
            land = start + d_catch
            if land >= ev.t1:
                raise SpecError(f"ramp at {ev.t0} ms is too short for latency plus catch-up saccade")
            plan.saccade(d_catch, ev.p0 + ev.velocity * (land - ev.t0))
            plan.track(ev.t1, ev.velocity)
            plan.track(ev.t1 + lat, ev.velocity)
            overshoot = float(np.hypot(*(plan.pos - ev.p1)))
            plan.saccade(timing.eye_duration(overshoot), ev.p1)
        else:
            plan.track(ev.t1 + (start - ev.t0), ev.velocity)
    return plan


def simulate_gaze(track: StimulusTrack, ocu: OculomotorSpec = OculomotorSpec(),
                  timing: Optional[SaccadeTiming] = None) -> tuple[GazeRecording, np.ndarray]:
    """Gaze trace and ground-truth labels of the model observer watching ``track``."""
    timing = timing or SaccadeTiming(peak_velocity=ocu.saccade_peak_velocity)
    plan = _plan_eye(track, ocu, timing)
    t = np.asarray(track.t)
    n = len(t)
    xy = np.repeat(plan.pos[None, :], n, axis=0)  # after the plan: hold the last position
    truth = np.full(n, FIX, dtype=np.int8)
    lo_idx = np.searchsorted(t, [p[1] for p in plan.pieces], side="left")
    hi_idx = np.searchsorted(t, [p[2] for p in plan.pieces], side="left")
    for (kind, t0, t1, p0, arg), a, b in zip(plan.pieces, lo_idx, hi_idx):
        if b <= a:
            continue
        tt = t[a:b] - t0
        if kind == "hold":
            xy[a:b] = p0
        elif kind == "jerk":
            tau = tt / (t1 - t0)
            s = tau ** 3 * (10.0 - 15.0 * tau + 6.0 * tau ** 2)
            xy[a:b] = p0 + s[:, None] * (arg - p0)
            truth[a:b] = SAC
        else:
            xy[a:b] = p0 + tt[:, None] * arg
            truth[a:b] = SP
    if ocu.noise_std > 0:
        rng = np.random.default_rng(ocu.seed)
        xy = xy + rng.normal(0.0, ocu.noise_std / math.sqrt(2.0), size=xy.shape)
    rate = infer_rate(t) if n > 1 else 1000.0
    return GazeRecording(t, xy[:, 0], xy[:, 1], np.ones(n, dtype=bool), rate), truth


# --------------------------------------------------------------------------
# bundled designs


def paper_stimulus_spec(rate_hz: float = 1000.0) -> StimulusSpec:
    """Two cycles of fixation / 10 deg step / 10 deg/s ramp, about 9.4 s.

    Each cycle has three steps and two 306 ms ramps separated by 720 ms
    fixations, in four directions.  Under the default latency model its ideal
    scores are FQnS 82.0, SQnS 100, PQnS 52.0 and MisFix 7.1.  The last
    fixation is 2 ms short so the total is a whole number of 100 ms, which
    every decimation rate divides.
    """
    fix, amp, ramp, speed = 720.0, 10.0, 306.0, 10.0
    segs: list = []
    for k in range(2):
        d = 90.0 * k
        segs += [Fixation(fix), Step(amp, d), Fixation(fix), Ramp(ramp, speed, 180.0 + d),
                 Fixation(fix), Step(amp, 90.0 + d), Fixation(fix), Step(amp, 270.0 + d),
                 Fixation(fix), Ramp(ramp, speed, d)]
    segs.append(Fixation(fix - 2.0))
    return StimulusSpec(tuple(segs), rate_hz)


def default_stimulus_spec(rate_hz: float = 1000.0) -> StimulusSpec:
    return paper_stimulus_spec(rate_hz)
