"""Core gaze data types, CSV ingestion, velocity/dispersion and decimation.

Positions are degrees of visual angle, timestamps are milliseconds.  All
containers hold numpy arrays and are treated as immutable once built.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, NamedTuple, Optional, TextIO

import numpy as np


class Label(IntEnum):
    FIXATION = 0
    SACCADE = 1
    SMOOTH_PURSUIT = 2
    UNCLASSIFIED = 3


LABEL_CODES = {"FIX": Label.FIXATION, "SAC": Label.SACCADE, "SP": Label.SMOOTH_PURSUIT}
CODE_OF_LABEL = {int(v): k for k, v in LABEL_CODES.items()}
CODE_OF_LABEL[int(Label.UNCLASSIFIED)] = "UNC"

REQUIRED_COLUMNS = ("timestamp_ms", "x_deg", "y_deg")


class GazeError(Exception):
    """Base class for errors raised by gazekit."""


class FormatError(GazeError, ValueError):
    pass


class OrderingError(GazeError, ValueError):
    pass


class InsufficientDataError(GazeError, ValueError):
    pass


class UndefinedDispersionError(GazeError, ValueError):
    pass


class UpsamplingError(GazeError, ValueError):
    pass


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GazeRecording:
    """Uniformly sampled monocular gaze trace.

    ``valid`` is False where the tracker lost the eye; x/y are NaN there.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    valid: np.ndarray
    rate_hz: float

    def __post_init__(self):
        object.__setattr__(self, "t", _frozen(self.t, float))
        object.__setattr__(self, "x", _frozen(self.x, float))
        object.__setattr__(self, "y", _frozen(self.y, float))
        object.__setattr__(self, "valid", _frozen(self.valid, bool))
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.valid) == n):
            raise FormatError("t, x, y and valid must have equal length")
        if not np.all(np.isfinite(self.t)):
            raise FormatError("timestamps must be finite")
        ok = self.valid
        if not (np.all(np.isfinite(self.x[ok])) and np.all(np.isfinite(self.y[ok]))):
            raise FormatError("valid samples must have finite positions")
        bad = np.flatnonzero(np.diff(self.t) <= 0)
        if bad.size:
            raise OrderingError(f"timestamps not strictly increasing at row {int(bad[0]) + 1}")
        if self.rate_hz <= 0:
            raise FormatError("rate_hz must be positive")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def period_ms(self) -> float:
        return 1000.0 / self.rate_hz

    @property
    def positions(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])

    def take(self, idx: np.ndarray, rate_hz: Optional[float] = None) -> "GazeRecording":
        return GazeRecording(self.t[idx], self.x[idx], self.y[idx], self.valid[idx],
                             self.rate_hz if rate_hz is None else rate_hz)


@dataclass(frozen=True, eq=False)
class StimulusTrack:
    """Per-sample target position and the behaviour the target asks for."""

    t: np.ndarray
    sx: np.ndarray
    sy: np.ndarray
    intended: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", _frozen(self.t, float))
        object.__setattr__(self, "sx", _frozen(self.sx, float))
        object.__setattr__(self, "sy", _frozen(self.sy, float))
        object.__setattr__(self, "intended", _frozen(self.intended, np.int8))
        if not (len(self.sx) == len(self.sy) == len(self.intended) == len(self.t)):
            raise FormatError("stimulus columns must have equal length")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def positions(self) -> np.ndarray:
        return np.column_stack([self.sx, self.sy])

    def take(self, idx: np.ndarray) -> "StimulusTrack":
        return StimulusTrack(self.t[idx], self.sx[idx], self.sy[idx], self.intended[idx])


@dataclass(frozen=True)
class ThresholdSet:
    """Velocity (deg/s), dispersion (deg) and duration (ms) thresholds."""

    vt: float = 75.0
    dt: float = 0.67
    wt: float = 150.0

    def __post_init__(self):
        if not (self.vt > 0 and self.dt > 0 and self.wt > 0):
            raise ValueError(f"thresholds must be strictly positive, got {self}")


def as_labels(labels: Iterable) -> np.ndarray:
    """Coerce labels (Label members, ints or FIX/SAC/SP codes) to an int8 array."""
    out = []
    for lab in labels:
        if isinstance(lab, str):
            try:
                out.append(int(LABEL_CODES[lab.strip().upper()]))
            except KeyError:
                raise FormatError(f"unknown label code {lab!r}") from None
        else:
            out.append(int(lab))
    return np.asarray(out, dtype=np.int8)


def label_codes(labels: np.ndarray) -> list[str]:
    return [CODE_OF_LABEL[int(v)] for v in labels]


def label_runs(labels: np.ndarray) -> list[tuple[int, int, int]]:
    """Maximal runs of equal labels as ``(label, start, stop)`` half-open slices."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return []
    edges = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate([[0], edges])
    stops = np.concatenate([edges, [labels.size]])
    return [(int(labels[a]), int(a), int(b)) for a, b in zip(starts, stops)]


# --------------------------------------------------------------------------
# CSV ingestion


class ParsedRecording(NamedTuple):
    recording: GazeRecording
    stimulus: Optional[StimulusTrack]
    truth: Optional[np.ndarray]


def _to_float(text: str) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        return math.nan


def infer_rate(t: np.ndarray) -> float:
    """Nominal rate from the median inter-sample interval, rounded to 0.1 Hz."""
    if len(t) < 2:
        raise InsufficientDataError("need at least 2 samples to infer a sampling rate")
    return round(1000.0 / float(np.median(np.diff(t))), 1)


def parse_recording(source, rate_hz: Optional[float] = None,
                    columns: Optional[dict] = None) -> ParsedRecording:
    """Read a gaze CSV.

    ``source`` is a path, a file object or the CSV text itself (any string
    containing a newline is taken as text).  ``columns``
    maps canonical names (``timestamp_ms``, ``x_deg`` ...) to the header names
    used in the file.  Rows whose gaze is non-numeric are kept with
    ``valid=False``.  Stimulus and truth tracks are returned when the
    corresponding columns exist.
    """
    if isinstance(source, str) and "\n" in source:
        fh: TextIO = io.StringIO(source)
    elif hasattr(source, "read"):
        fh = source
    else:
        fh = open(source, newline="", encoding="utf-8")
    colmap = {k: k for k in ("timestamp_ms", "x_deg", "y_deg", "sx_deg", "sy_deg", "intended", "truth")}
    if columns:
        colmap.update(columns)
    try:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        reader.fieldnames = header
        for name in REQUIRED_COLUMNS:
            if colmap[name] not in header:
                raise FormatError(f"missing required column {colmap[name]}")
        rows = list(reader)
    finally:
        if fh is not source:
            fh.close()

    t = np.array([_to_float(r[colmap["timestamp_ms"]]) for r in rows])
    x = np.array([_to_float(r[colmap["x_deg"]]) for r in rows])
    y = np.array([_to_float(r[colmap["y_deg"]]) for r in rows])
    bad_t = np.flatnonzero(~np.isfinite(t))
    if bad_t.size:
        raise FormatError(f"non-numeric timestamp at row {int(bad_t[0])}")
    back = np.flatnonzero(np.diff(t) <= 0)
    if back.size:
        raise OrderingError(f"timestamps not strictly increasing at row {int(back[0]) + 1}")
    valid = np.isfinite(x) & np.isfinite(y)
    x[~valid] = np.nan
    y[~valid] = np.nan
    rec = GazeRecording(t, x, y, valid, rate_hz if rate_hz is not None else infer_rate(t))

    stim = None
    if colmap["sx_deg"] in header and colmap["sy_deg"] in header:
        sx = np.array([_to_float(r[colmap["sx_deg"]]) for r in rows])
        sy = np.array([_to_float(r[colmap["sy_deg"]]) for r in rows])
        if colmap["intended"] in header:
            intended = as_labels(r[colmap["intended"]] for r in rows)
        else:
            intended = np.full(len(rows), Label.UNCLASSIFIED, dtype=np.int8)
        stim = StimulusTrack(t, sx, sy, intended)
    truth = None
    if colmap["truth"] in header:
        truth = as_labels(r[colmap["truth"]] for r in rows)
    return ParsedRecording(rec, stim, truth)


def _fmt(v: float) -> str:
    return "NaN" if not math.isfinite(v) else repr(float(v))


def write_recording(dest, recording: GazeRecording, stimulus: Optional[StimulusTrack] = None,
                    truth: Optional[np.ndarray] = None) -> None:
    """Write the CSV format read by :func:`parse_recording`."""
    own = not hasattr(dest, "write")
    fh = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        w = csv.writer(fh, lineterminator="\n")
        header = ["timestamp_ms", "x_deg", "y_deg"]
        if stimulus is not None:
            header += ["sx_deg", "sy_deg", "intended"]
        if truth is not None:
            header.append("truth")
        w.writerow(header)
        for i in range(len(recording)):
            row = [_fmt(recording.t[i]), _fmt(recording.x[i]), _fmt(recording.y[i])]
            if stimulus is not None:
                row += [_fmt(stimulus.sx[i]), _fmt(stimulus.sy[i]), CODE_OF_LABEL[int(stimulus.intended[i])]]
            if truth is not None:
                row.append(CODE_OF_LABEL[int(truth[i])])
            w.writerow(row)
    finally:
        if own:
            fh.close()


# --------------------------------------------------------------------------
# features


def compute_velocities(recording: GazeRecording) -> np.ndarray:
    """Point-to-point angular speed in deg/s.

    ``v[i]`` is the distance between samples ``i-1`` and ``i`` divided by the
    elapsed time; ``v[0]`` copies ``v[1]``.  A pair touching an invalid sample
    repeats the previous pair's speed.
    """
    n = len(recording)
    if n < 2:
        raise InsufficientDataError("velocity needs at least 2 samples")
    dt_s = np.diff(recording.t) / 1000.0
    step = np.hypot(np.diff(recording.x), np.diff(recording.y))
    v = np.empty(n)
    v[1:] = step / dt_s
    ok = recording.valid[1:] & recording.valid[:-1]
    if not ok.all():
        inner = v[1:]
        if not ok.any():
            inner[:] = 0.0
        else:
            # forward-fill from the last valid pair; leading gaps take the first valid one
            idx = np.where(ok, np.arange(n - 1), -1)
            np.maximum.accumulate(idx, out=idx)
            first = int(np.argmax(ok))
            idx[idx < 0] = first
            inner[:] = inner[idx]
    v[0] = v[1]
    return v


def compute_dispersion(x, y=None, valid=None) -> float:
    """(max x - min x) + (max y - min y) over the valid samples of a window.

    Accepts either a :class:`GazeRecording` slice or raw coordinate arrays.
    """
    if isinstance(x, GazeRecording):
        x, y, valid = x.x, x.y, x.valid
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0:
        raise InsufficientDataError("dispersion of an empty window")
    if valid is not None:
        valid = np.asarray(valid, dtype=bool)
        x, y = x[valid], y[valid]
    finite = np.isfinite(x) & np.isfinite(y)
    if not finite.any():
        raise UndefinedDispersionError("window has no valid samples")
    x, y = x[finite], y[finite]
    return float((x.max() - x.min()) + (y.max() - y.min()))


class _SparseTable:
    """O(1) range max/min queries after O(n log n) preprocessing."""

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        self.mx = [np.where(np.isfinite(values), values, -np.inf)]
        self.mn = [np.where(np.isfinite(values), values, np.inf)]
        k = 1
        while 2 * k <= values.size:
            self.mx.append(np.maximum(self.mx[-1][:-k], self.mx[-1][k:]))
            self.mn.append(np.minimum(self.mn[-1][:-k], self.mn[-1][k:]))
            k *= 2

    def query(self, starts: np.ndarray, stops: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        starts = np.asarray(starts, dtype=np.intp)
        length = np.asarray(stops, dtype=np.intp) - starts
        level = np.floor(np.log2(np.maximum(length, 1))).astype(np.intp)
        hi = np.empty(starts.shape)
        lo = np.empty(starts.shape)
        for lev in np.unique(level):
            m = level == lev
            a = starts[m]
            b = starts[m] + length[m] - (1 << lev)
            hi[m] = np.maximum(self.mx[lev][a], self.mx[lev][b])
            lo[m] = np.minimum(self.mn[lev][a], self.mn[lev][b])
        return hi, lo


def window_dispersions(x: np.ndarray, y: np.ndarray, starts: np.ndarray, stops: np.ndarray) -> np.ndarray:
    """Dispersion of many ``[start, stop)`` windows at once; NaN positions are skipped.

    Windows without any finite sample get dispersion 0.
    """
    tx, ty = _SparseTable(x), _SparseTable(y)
    hx, lx = tx.query(starts, stops)
    hy, ly = ty.query(starts, stops)
    d = (hx - lx) + (hy - ly)
    d[~np.isfinite(d)] = 0.0
    return d


def forward_window_stops(t: np.ndarray, duration_ms: float) -> np.ndarray:
    """Exclusive stop index of the window ``[t[i], t[i] + duration)`` for every i."""
    return np.searchsorted(t, np.asarray(t) + duration_ms, side="left")


# --------------------------------------------------------------------------
# resampling

PAPER_FREQUENCIES = (30, 50, 60, 100, 200, 300, 500)


def resample_indices(t: np.ndarray, rate_hz: float, target_hz: float) -> np.ndarray:
    """Indices of the input samples nearest to a ``1000/target_hz`` ms grid.

    Ties go to the earlier sample.  The grid starts at ``t[0]``; its length is
    chosen so that ``n_out / target_hz`` matches ``n_in / rate_hz`` to within
    half an output period.
    """
    if target_hz > rate_hz:
        raise UpsamplingError(f"cannot resample {rate_hz} Hz data up to {target_hz} Hz")
    if target_hz <= 0:
        raise ValueError("target rate must be positive")
    t = np.asarray(t, dtype=float)
    step = 1000.0 / target_hz
    n_out = max(1, int(math.floor(len(t) * target_hz / rate_hz + 0.5 + 1e-9)))
    grid = t[0] + step * np.arange(n_out)
    right = np.clip(np.searchsorted(t, grid, side="left"), 1, len(t) - 1)
    left = right - 1
    pick_right = (t[right] - grid) < (grid - t[left])
    idx = np.where(pick_right, right, left)
    if len(t) == 1:
        idx = np.zeros(n_out, dtype=np.intp)
    return idx


def resample(recording: GazeRecording, target_hz: float,
             stimulus: Optional[StimulusTrack] = None,
             truth: Optional[np.ndarray] = None) -> ParsedRecording:
    """Decimate a recording (and its paired tracks) to ``target_hz`` by index selection."""
    idx = resample_indices(recording.t, recording.rate_hz, target_hz)
    rec = recording.take(idx, rate_hz=float(target_hz))
    stim = stimulus.take(idx) if stimulus is not None else None
    tr = np.asarray(truth)[idx] if truth is not None else None
    return ParsedRecording(rec, stim, tr)


@dataclass(frozen=True)
class SaccadeTiming:
    """Amplitude-to-duration rule shared by the generator and the ideal observer."""

    peak_velocity: float = 400.0
    slope_ms_per_deg: float = 2.2
    intercept_ms: float = 21.0

    def main_sequence(self, amplitude: float) -> float:
        return self.slope_ms_per_deg * abs(amplitude) + self.intercept_ms

    def eye_duration(self, amplitude: float) -> float:
        """Duration (ms) of a minimum-jerk saccade peaking at >= peak_velocity."""
        a = abs(amplitude)
        cap = 1.875 * a / self.peak_velocity * 1000.0
        return min(self.main_sequence(a), cap)

    def catch_up_duration(self, speed: float, latency: float) -> float:
        """Duration of a saccade that lands on a target moving at ``speed`` deg/s.

        The target has a ``latency`` ms head start, and keeps moving during the
        saccade, so the amplitude is ``speed * (latency + d)``.
        """
        v = speed / 1000.0
        if v == 0:
            return 0.0
        d_ms = (self.slope_ms_per_deg * v * latency + self.intercept_ms) / (1.0 - self.slope_ms_per_deg * v)
        k = 1.875 * v / self.peak_velocity * 1000.0
        if k < 1.0:
            d_cap = k * latency / (1.0 - k)
        else:
            d_cap = math.inf
        return min(d_ms if d_ms > 0 else math.inf, d_cap)
