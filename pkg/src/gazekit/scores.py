"""Behavioural scores for classifications of step-ramp recordings.

Quantitative scores (percent): FQnS, SQnS, PQnS, MisFix.
Qualitative scores: FQlS and PQlS_P in degrees, PQlS_V in deg/s.

Each score raises :class:`UndefinedScoreError` when its denominator is empty
rather than returning 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from typing import Optional, Union

import numpy as np

from .model import (
    GazeError,
    GazeRecording,
    Label,
    SaccadeTiming,
    StimulusTrack,
    compute_velocities,
    label_runs,
)
from .synth import StimulusEvent, stimulus_events, track_period

FIX, SAC, SP = int(Label.FIXATION), int(Label.SACCADE), int(Label.SMOOTH_PURSUIT)

DEFAULT_PROXIMITY = 1.0
SCORE_NAMES = ("fqns", "sqns", "pqns", "misfix", "fqls", "pqls_p", "pqls_v")


class UndefinedScoreError(GazeError, ValueError):
    pass


class UnsupportedStimulusError(GazeError, ValueError):
    pass


@dataclass(frozen=True)
class ScoreReport:
    fqns: Optional[float]
    sqns: Optional[float]
    pqns: Optional[float]
    misfix: Optional[float]
    fqls: Optional[float]
    pqls_p: Optional[float]
    pqls_v: Optional[float]
    classification_time: float = 0.0

    def as_vector(self) -> np.ndarray:
        return np.array([math.nan if getattr(self, k) is None else getattr(self, k) for k in SCORE_NAMES])

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in SCORE_NAMES}
        d["classification_time_s"] = self.classification_time
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreReport":
        return cls(*(d[k] for k in SCORE_NAMES), classification_time=d.get("classification_time_s", 0.0))


@dataclass(frozen=True)
class LatencyModel:
    """Timing assumptions of the healthy reference observer (all in ms)."""

    pursuit_latency: float = 140.0
    fixation_info_floor: float = 100.0
    min_pause: float = 200.0
    catch_up_saccade: bool = True
    saccade_peak_velocity: float = 400.0

    def __post_init__(self):
        if not (self.pursuit_latency > 0 and self.fixation_info_floor > 0 and self.min_pause > 0):
            raise ValueError("latency model durations must be positive")

    @property
    def timing(self) -> SaccadeTiming:
        return SaccadeTiming(peak_velocity=self.saccade_peak_velocity)


def _check(labels, stimulus, recording=None):
    labels = np.asarray(labels)
    if labels.shape != (len(stimulus),):
        raise ValueError("labels and stimulus differ in length")
    if recording is not None and len(recording) != len(stimulus):
        raise ValueError("recording and stimulus differ in length")
    return labels


def _gaze_error(stimulus: StimulusTrack, recording: GazeRecording) -> np.ndarray:
    return np.hypot(recording.x - stimulus.sx, recording.y - stimulus.sy)


def fqns(labels, stimulus: StimulusTrack, recording: GazeRecording,
         proximity: float = DEFAULT_PROXIMITY) -> float:
    """Share of fixation-stimulus samples detected as fixation with gaze on target."""
    labels = _check(labels, stimulus, recording)
    target = stimulus.intended == FIX
    if not target.any():
        raise UndefinedScoreError("FQnS: stimulus has no fixation samples")
    with np.errstate(invalid="ignore"):
        near = _gaze_error(stimulus, recording) <= proximity
    hit = target & (labels == FIX) & near
    return 100.0 * hit.sum() / target.sum()


def detected_saccades(labels, recording: GazeRecording) -> list[tuple[float, float]]:
    """``(onset_ms, amplitude_deg)`` for every run of saccade labels.

    The amplitude runs from the sample before the run to its last sample.
    """
    out = []
    for lab, a, b in label_runs(labels):
        if lab != SAC:
            continue
        s = max(a - 1, 0)
        amp = math.hypot(recording.x[b - 1] - recording.x[s], recording.y[b - 1] - recording.y[s])
        out.append((float(recording.t[a]), amp if math.isfinite(amp) else 0.0))
    return out


def sqns(labels, stimulus: StimulusTrack, recording: GazeRecording,
         latency: Union[float, LatencyModel] = 140.0) -> float:
    """Detected saccade amplitude near target steps over total step amplitude.

    A detected saccade counts for a step when its onset falls inside
    ``[step onset - L, step offset + L)``, where the step's offset is the end of
    its saccade-intended run and ``L`` the pursuit latency.  Each detected
    saccade counts at most once.
    """
    lat = latency.pursuit_latency if isinstance(latency, LatencyModel) else float(latency)
    labels = _check(labels, stimulus, recording)
    steps = [e for e in stimulus_events(stimulus) if e.kind == SAC and e.amplitude > 0]
    if not steps:
        raise UndefinedScoreError("SQnS: stimulus has no steps")
    total = sum(e.amplitude for e in steps)
    lo = np.array([e.t0 - lat for e in steps])
    hi = np.array([e.t1 + lat for e in steps])
    found = 0.0
    for onset, amp in detected_saccades(labels, recording):
        if np.any((onset >= lo) & (onset < hi)):
            found += amp
    return 100.0 * found / total


def pqns(labels, stimulus: StimulusTrack) -> float:
    labels = _check(labels, stimulus)
    target = stimulus.intended == SP
    if not target.any():
        raise UndefinedScoreError("PQnS: stimulus has no pursuit samples")
    return 100.0 * (target & (labels == SP)).sum() / target.sum()


def misfix(labels, stimulus: StimulusTrack) -> float:
    labels = _check(labels, stimulus)
    target = stimulus.intended == FIX
    if not target.any():
        raise UndefinedScoreError("MisFix: stimulus has no fixation samples")
    return 100.0 * (target & (labels == SP)).sum() / target.sum()


def fqls(labels, stimulus: StimulusTrack, recording: GazeRecording) -> float:
    """Mean distance from each detected fixation's centroid to the target.

    Averaged over samples that are both detected and intended fixation; the
    centroid is taken over the whole run of fixation labels.
    """
    labels = _check(labels, stimulus, recording)
    centroid = np.full((len(labels), 2), np.nan)
    runs = np.array([(a, b) for lab, a, b in label_runs(labels) if lab == FIX], dtype=np.intp).reshape(-1, 2)
    if runs.size:
        pos = recording.positions
        ok = np.isfinite(pos).all(axis=1)
        csum = np.vstack([np.zeros((1, 2)), np.cumsum(np.where(ok[:, None], pos, 0.0), axis=0)])
        ccnt = np.r_[0.0, np.cumsum(ok)]
        starts, stops = runs[:, 0], runs[:, 1]
        with np.errstate(invalid="ignore", divide="ignore"):
            means = (csum[stops] - csum[starts]) / (ccnt[stops] - ccnt[starts])[:, None]
        idx = np.concatenate([np.arange(a, b) for a, b in runs])
        centroid[idx] = np.repeat(means, stops - starts, axis=0)
    mask = (labels == FIX) & (stimulus.intended == FIX) & np.isfinite(centroid[:, 0])
    if not mask.any():
        raise UndefinedScoreError("FQlS: no detected fixation during fixation stimulus")
    d = np.hypot(centroid[mask, 0] - stimulus.sx[mask], centroid[mask, 1] - stimulus.sy[mask])
    return float(d.mean())


def _stimulus_speed(stimulus: StimulusTrack) -> np.ndarray:
    v = np.empty(len(stimulus))
    v[1:] = np.hypot(np.diff(stimulus.sx), np.diff(stimulus.sy)) / (np.diff(stimulus.t) / 1000.0)
    v[0] = v[1] if len(v) > 1 else 0.0
    return v


def pqls(labels, stimulus: StimulusTrack, recording: GazeRecording) -> tuple[float, float]:
    """Mean position error (deg) and speed error (deg/s) over detected pursuit during ramps."""
    labels = _check(labels, stimulus, recording)
    mask = (labels == SP) & (stimulus.intended == SP) & recording.valid
    if not mask.any():
        raise UndefinedScoreError("PQlS: no detected pursuit during pursuit stimulus")
    pos = _gaze_error(stimulus, recording)[mask]
    vel = np.abs(compute_velocities(recording) - _stimulus_speed(stimulus))[mask]
    return float(pos.mean()), float(vel.mean())


def score_all(labels, stimulus: StimulusTrack, recording: GazeRecording,
              latency: LatencyModel = LatencyModel(), proximity: float = DEFAULT_PROXIMITY,
              classification_time: float = 0.0, strict: bool = True) -> ScoreReport:
    """All seven scores.  With ``strict=False`` undefined scores become None."""

    def run(fn, *args):
        try:
            return fn(*args)
        except UndefinedScoreError:
            if strict:
                raise
            return None

    pq = run(pqls, labels, stimulus, recording)
    pq = pq if pq is not None else (None, None)
    return ScoreReport(
        fqns=run(fqns, labels, stimulus, recording, proximity),
        sqns=run(sqns, labels, stimulus, recording, latency),
        pqns=run(pqns, labels, stimulus),
        misfix=run(misfix, labels, stimulus),
        fqls=run(fqls, labels, stimulus, recording),
        pqls_p=pq[0],
        pqls_v=pq[1],
        classification_time=classification_time,
    )


# --------------------------------------------------------------------------
# ideal observer


def _overlap(a0: float, a1: float, b0: float, b1: float) -> float:
    return max(0.0, min(a1, b1) - max(a0, b0))


def _validate_step_ramp(stimulus: StimulusTrack, period: float) -> None:
    if np.any(stimulus.intended == int(Label.UNCLASSIFIED)):
        raise UnsupportedStimulusError("stimulus carries unlabelled samples")
    pos = stimulus.positions
    for lab, a, b in label_runs(stimulus.intended):
        seg = pos[a:b]
        if lab in (FIX, SAC):
            if np.ptp(seg[:, 0]) > 1e-9 or np.ptp(seg[:, 1]) > 1e-9:
                raise UnsupportedStimulusError(f"target moves during a stationary run at sample {a}")
        elif b - a > 2:
            v = np.diff(seg, axis=0) / np.diff(stimulus.t[a:b])[:, None]
            if np.max(np.abs(v - v[0])) > 1e-9:
                raise UnsupportedStimulusError(f"ramp at sample {a} is not constant-velocity")


def ideal_scores(stimulus: StimulusTrack, latency: LatencyModel = LatencyModel(),
                 proximity: float = DEFAULT_PROXIMITY) -> ScoreReport:
    """Scores a healthy reference observer would earn on a step-ramp stimulus.

    Closed form over the stimulus events, for pursuit latency ``L``:

    * after a step into a fixation, the fixation is lost from the step onset
      (or from ``T + L`` for steps within ``proximity``) until the eye's
      saccade lands at ``T + L + D``;
    * after a ramp into a fixation, the eye pursues for ``L`` more ms (counted
      by MisFix) and then saccades back, both lost to FQnS;
    * a ramp is credited to PQnS only after the latency and the catch-up
      saccade.

    SQnS is 100 when the stimulus has steps; qualitative scores are 0.
    Scores with an empty denominator are None.
    """
    period = track_period(stimulus)
    _validate_step_ramp(stimulus, period)
    timing = latency.timing
    lat = latency.pursuit_latency
    events = stimulus_events(stimulus)
    runs = label_runs(stimulus.intended)

    def run_time(a, b):
        t0 = float(stimulus.t[a])
        t1 = float(stimulus.t[b]) if b < len(stimulus) else float(stimulus.t[-1]) + period
        return t0, t1

    fix_total = sum(b - a for lab, a, b in runs if lab == FIX) * period
    by_stop = {e.stop: e for e in events}
    fix_lost = 0.0
    spill = 0.0
    for lab, a, b in runs:
        if lab != FIX or a not in by_stop:
            continue
        f0, f1 = run_time(a, b)
        ev = by_stop[a]
        if ev.kind == SAC:
            land = ev.t0 + lat + timing.eye_duration(ev.amplitude)
            off = ev.t0 if ev.amplitude > proximity else ev.t0 + lat
            fix_lost += _overlap(off, land, f0, f1)
        else:
            speed = float(np.hypot(*ev.velocity)) * 1000.0
            spill += _overlap(ev.t1, ev.t1 + lat, f0, f1)
            back = timing.eye_duration(speed * lat / 1000.0) if latency.catch_up_saccade else 0.0
            fix_lost += _overlap(ev.t1, ev.t1 + lat + back, f0, f1)

    ramps = [e for e in events if e.kind == SP]
    ramp_total = sum(e.t1 - e.t0 for e in ramps)
    ramp_hit = 0.0
    for e in ramps:
        speed = float(np.hypot(*e.velocity)) * 1000.0
        catch = timing.catch_up_duration(speed, lat) if latency.catch_up_saccade else 0.0
        ramp_hit += _overlap(e.t0 + lat + catch, e.t1, e.t0, e.t1)
    steps = [e for e in events if e.kind == SAC and e.amplitude > 0]

    return ScoreReport(
        fqns=100.0 * (fix_total - fix_lost) / fix_total if fix_total > 0 else None,
        sqns=100.0 if steps else None,
        pqns=100.0 * ramp_hit / ramp_total if ramp_total > 0 else None,
        misfix=100.0 * spill / fix_total if fix_total > 0 else None,
        fqls=0.0,
        pqls_p=0.0,
        pqls_v=0.0,
    )
