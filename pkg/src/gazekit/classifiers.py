"""Threshold, hybrid threshold/Viterbi and Bayesian eye-movement classifiers."""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numba
import numpy as np

from .hmm import (
    ConvergenceConfig,
    EmptyClassError,
    NumericGuardConfig,
    viterbi_refine,
)
from .model import (
    GazeError,
    GazeRecording,
    Label,
    ThresholdSet,
    compute_velocities,
    forward_window_stops,
    window_dispersions,
)

FIX, SAC, SP = int(Label.FIXATION), int(Label.SACCADE), int(Label.SMOOTH_PURSUIT)


class ShortDataWarning(UserWarning):
    pass


class FallbackWarning(UserWarning):
    pass


class MergeError(GazeError, RuntimeError):
    pass


class Subset(NamedTuple):
    recording: Optional[GazeRecording]
    index: np.ndarray


def classify_ivt(recording: GazeRecording, vt: float, velocities=None) -> np.ndarray:
    """Saccade where speed is strictly above ``vt``, Fixation otherwise."""
    if not vt > 0:
        raise ValueError("velocity threshold must be positive")
    v = compute_velocities(recording) if velocities is None else np.asarray(velocities)
    return np.where(v > vt, SAC, FIX).astype(np.int8)


def filter_saccades(recording: GazeRecording, labels) -> Subset:
    """Non-saccade samples, in order, with their indices into ``recording``."""
    idx = np.flatnonzero(np.asarray(labels) != SAC)
    if idx.size == 0:
        return Subset(None, idx)
    return Subset(recording.take(idx), idx)


def merge_labels(saccade_labels, subset_labels, index) -> np.ndarray:
    """Write subset labels back into the non-saccade slots of a full sequence."""
    full = np.asarray(saccade_labels, dtype=np.int8).copy()
    index = np.asarray(index, dtype=np.intp)
    subset_labels = np.asarray(subset_labels, dtype=np.int8)
    if index.size != subset_labels.size:
        raise MergeError("subset labels and index map differ in length")
    if np.unique(index).size != index.size:
        raise MergeError("index map contains duplicate positions")
    if not np.array_equal(index, np.flatnonzero(full != SAC)):
        raise MergeError("index map does not cover exactly the non-saccade samples")
    full[index] = subset_labels
    return full


def _window_covered(t: np.ndarray, i: int, wt: float, period: float) -> bool:
    return t[-1] + period - t[i] >= wt


def classify_idt_window(subset: GazeRecording, dt: float, wt: float, dispersions=None) -> np.ndarray:
    """Fixation / smooth-pursuit split of saccade-free samples by window dispersion.

    A window spanning ``wt`` ms is laid at the first unclassified sample.
    Below ``dt`` it is a fixation and keeps absorbing samples while the
    dispersion stays below ``dt``; otherwise its first sample is pursuit and the
    window slides by one.  Samples left over at the end, too few to fill a
    window, copy the last decision.  ``dispersions`` may hold the precomputed
    result of :func:`forward_dispersions` for the same ``wt``.
    """
    if not (dt > 0 and wt > 0):
        raise ValueError("dispersion and duration thresholds must be positive")
    t, x, y = subset.t, subset.x, subset.y
    n = len(t)
    period = subset.period_ms
    labels = np.full(n, SP, dtype=np.int8)
    if n == 0 or not _window_covered(t, 0, wt, period):
        warnings.warn("recording shorter than the duration threshold; labelling pursuit",
                      ShortDataWarning, stacklevel=2)
        return labels
    stops = np.maximum(forward_window_stops(t, wt), np.arange(n) + 1)
    base = window_dispersions(x, y, np.arange(n), stops) if dispersions is None else np.asarray(dispersions)
    _idt_scan(t, x, y, stops, base, dt, wt, period, labels)
    return labels


@numba.njit(cache=True, nogil=True)
def _idt_scan(t, x, y, stops, base, dt, wt, period, labels):
    n = t.shape[0]
    i = 0
    last = SP
    while i < n and t[n - 1] + period - t[i] >= wt:
        j = stops[i]
        if base[i] < dt:
            xmax = -np.inf
            xmin = np.inf
            ymax = -np.inf
            ymin = np.inf
            for k in range(i, j):
                if np.isfinite(x[k]) and np.isfinite(y[k]):
                    xmax = max(xmax, x[k])
                    xmin = min(xmin, x[k])
                    ymax = max(ymax, y[k])
                    ymin = min(ymin, y[k])
            while j < n:
                if np.isfinite(x[j]) and np.isfinite(y[j]):
                    d = (max(xmax, x[j]) - min(xmin, x[j])) + (max(ymax, y[j]) - min(ymin, y[j]))
                    if not d < dt:
                        break
                    xmax = max(xmax, x[j])
                    xmin = min(xmin, x[j])
                    ymax = max(ymax, y[j])
                    ymin = min(ymin, y[j])
                j += 1
            for k in range(i, j):
                labels[k] = FIX
            last = FIX
            i = j
        else:
            labels[i] = SP
            last = SP
            i += 1
    for k in range(i, n):
        labels[k] = last


def forward_dispersions(recording: GazeRecording, wt: float) -> np.ndarray:
    """Dispersion of the ``wt`` ms window that starts at each sample.

    Near the end the window is truncated to the samples that remain.
    """
    n = len(recording)
    stops = np.maximum(forward_window_stops(recording.t, wt), np.arange(n) + 1)
    return window_dispersions(recording.x, recording.y, np.arange(n), stops)


def classify_ivdt(recording: GazeRecording, thresholds: ThresholdSet = ThresholdSet()) -> np.ndarray:
    """Velocity threshold for saccades, dispersion window for fixation vs pursuit."""
    sac = classify_ivt(recording, thresholds.vt)
    sub = filter_saccades(recording, sac)
    if sub.recording is None:
        return sac
    return merge_labels(sac, classify_idt_window(sub.recording, thresholds.dt, thresholds.wt), sub.index)


def _refine_or_seed(features, seed, conv, guard, row_normalized, stage):
    try:
        return viterbi_refine(features, seed, conv, guard, row_normalized).states
    except EmptyClassError:
        warnings.warn(f"{stage}: threshold pass left a class empty; keeping threshold labels",
                      FallbackWarning, stacklevel=3)
        return seed


def hmm_saccade_stage(recording: GazeRecording, vt: float,
                      conv: ConvergenceConfig = ConvergenceConfig(),
                      guard: NumericGuardConfig = NumericGuardConfig(),
                      row_normalized: bool = False, velocities=None) -> np.ndarray:
    """Saccade / non-saccade labels: velocity threshold refined by Viterbi on speed."""
    v = compute_velocities(recording) if velocities is None else np.asarray(velocities)
    seed = (v > vt).astype(np.int8)
    if conv.max_iterations > 0:
        seed = _refine_or_seed(v, seed, conv, guard, row_normalized, "velocity stage")
    return np.where(seed == 1, SAC, FIX).astype(np.int8)


def hmm_pursuit_stage(subset: GazeRecording, dt: float, wt: float,
                      conv: ConvergenceConfig = ConvergenceConfig(),
                      guard: NumericGuardConfig = NumericGuardConfig(),
                      row_normalized: bool = False, dispersions=None) -> np.ndarray:
    """Fixation / pursuit labels for saccade-free samples: I-DT refined by Viterbi on dispersion."""
    disp = forward_dispersions(subset, wt) if dispersions is None else dispersions
    idt = classify_idt_window(subset, dt, wt, disp)
    if conv.max_iterations == 0:
        return idt
    states = _refine_or_seed(disp, (idt == SP).astype(np.int8), conv, guard, row_normalized,
                             "dispersion stage")
    return np.where(states == 1, SP, FIX).astype(np.int8)


def classify_ivdt_hmm(recording: GazeRecording, thresholds: ThresholdSet = ThresholdSet(),
                      conv: ConvergenceConfig = ConvergenceConfig(),
                      guard: NumericGuardConfig = NumericGuardConfig(),
                      row_normalized: bool = False) -> np.ndarray:
    """I-VDT with a two-state Viterbi refinement after each threshold pass.

    Stage one refines the velocity-threshold split of saccades vs the rest,
    using per-sample speed as the feature.  Stage two refines the
    dispersion-window split of the remaining samples into fixation vs pursuit,
    using the dispersion of the ``wt`` window starting at each sample.
    """
    sac = hmm_saccade_stage(recording, thresholds.vt, conv, guard, row_normalized)
    sub = filter_saccades(recording, sac)
    if sub.recording is None:
        return sac
    rest = hmm_pursuit_stage(sub.recording, thresholds.dt, thresholds.wt, conv, guard, row_normalized)
    return merge_labels(sac, rest, sub.index)


# --------------------------------------------------------------------------
# simplified I-BDT baseline

IBDT_MODES = ("zero", "mean", "mean+ksigma")


@dataclass(frozen=True)
class IbdtConfig:
    """``fixation_threshold_mode``: ``zero``, ``mean`` or ``mean+ksigma`` (uses ``k``)."""

    temporal_window: float = 100.0
    fixation_threshold_mode: str = "mean"
    k: float = 0.0
    saccade_threshold: float = 75.0

    def __post_init__(self):
        if not self.temporal_window > 0:
            raise ValueError("temporal_window must be positive")
        if self.fixation_threshold_mode not in IBDT_MODES:
            raise ValueError(f"fixation_threshold_mode must be one of {IBDT_MODES}")
        if self.k < 0:
            raise ValueError("k must be >= 0")


def bayes_posterior(likelihood, prior) -> np.ndarray:
    """Normalised ``likelihood * prior``."""
    p = np.asarray(likelihood, dtype=float) * np.asarray(prior, dtype=float)
    return p / p.sum()


@numba.njit(cache=True, nogil=True)
def _ibdt_kernel(t, v, window, mode, k, sac_thr):
    n = t.shape[0]
    post = np.empty((n, 3))
    scale = 0.1 * sac_thr
    # running fixation-velocity statistics (Welford)
    cnt = 0
    mean = 0.0
    m2 = 0.0
    seeded = False
    lo = 0
    for i in range(n):
        while t[i] - t[lo] > window:
            lo += 1
        full = t[i] - t[0] >= window
        if mode == 0:
            theta = 0.0
        else:
            if not seeded:
                # seed the running statistics with the sub-saccadic speeds of the first window
                j = 0
                while j < n and t[j] - t[0] <= window:
                    if v[j] <= sac_thr:
                        cnt += 1
                        d = v[j] - mean
                        mean += d / cnt
                        m2 += d * (v[j] - mean)
                    j += 1
                seeded = True
            sd = np.sqrt(m2 / (cnt - 1)) if cnt > 1 else 0.0
            theta = mean + k * sd if mode == 2 else mean
        moving = 0
        for j in range(lo, i + 1):
            if v[j] > theta:
                moving += 1
        ratio = moving / (i + 1 - lo)
        # a fixation's speeds straddle their own mean, so only the excess over
        # one half counts as movement (with theta = 0 every sample moves)
        excess = ratio if mode == 0 else min(max(2.0 * ratio - 1.0, 0.0), 1.0)
        z = (v[i] - sac_thr) / scale
        l_sac = 1.0 / (1.0 + np.exp(-z))
        l_fix = (1.0 - l_sac) * (1.0 - excess)
        l_sp = (1.0 - l_sac) * excess
        if full and i > lo:
            pf = 1.0
            ps = 1.0
            pp = 1.0
            for j in range(lo, i):
                pf += post[j, 0]
                ps += post[j, 1]
                pp += post[j, 2]
            tot = pf + ps + pp
            pf /= tot
            ps /= tot
            pp /= tot
        else:
            pf = ps = pp = 1.0 / 3.0
        a = l_fix * pf
        b = l_sac * ps
        c2 = l_sp * pp
        tot = a + b + c2
        post[i, 0] = a / tot
        post[i, 1] = b / tot
        post[i, 2] = c2 / tot
        if post[i, 0] >= post[i, 1] and post[i, 0] >= post[i, 2]:
            cnt += 1
            d = v[i] - mean
            mean += d / cnt
            m2 += d * (v[i] - mean)
    return post


def ibdt_posteriors(recording: GazeRecording, config: IbdtConfig = IbdtConfig()) -> np.ndarray:
    """Per-sample posteriors over (fixation, saccade, pursuit), shape (n, 3).

    Features are the sample speed and the movement ratio, the share of the
    trailing ``temporal_window`` whose speed exceeds the fixation threshold.
    Priors are the Laplace-smoothed mean posteriors of the window's earlier
    samples, uniform until the first full window.
    """
    v = compute_velocities(recording)
    mode = IBDT_MODES.index(config.fixation_threshold_mode)
    return _ibdt_kernel(np.asarray(recording.t), v, float(config.temporal_window), mode,
                        float(config.k), float(config.saccade_threshold))


def classify_ibdt(recording: GazeRecording, config: IbdtConfig = IbdtConfig()) -> np.ndarray:
    post = ibdt_posteriors(recording, config)
    # argmax ties go to the lower label: fixation, saccade, pursuit
    return np.argmax(post, axis=1).astype(np.int8)


CLASSIFIERS = ("ivt", "ivdt", "ivdt-hmm", "ibdt")


def classify(name: str, recording: GazeRecording, thresholds: ThresholdSet = ThresholdSet(),
             conv: ConvergenceConfig = ConvergenceConfig(),
             guard: NumericGuardConfig = NumericGuardConfig()) -> np.ndarray:
    """Run a classifier by name.  For ``ibdt`` the window is ``thresholds.wt``."""
    if name == "ivt":
        return classify_ivt(recording, thresholds.vt)
    if name == "ivdt":
        return classify_ivdt(recording, thresholds)
    if name == "ivdt-hmm":
        return classify_ivdt_hmm(recording, thresholds, conv, guard)
    if name == "ibdt":
        return classify_ibdt(recording, IbdtConfig(temporal_window=thresholds.wt,
                                                   saccade_threshold=thresholds.vt))
    raise ValueError(f"unknown algorithm {name!r}; expected one of {CLASSIFIERS}")


def timed_classify(name: str, recording: GazeRecording, thresholds: ThresholdSet = ThresholdSet(),
                   conv: ConvergenceConfig = ConvergenceConfig(),
                   guard: NumericGuardConfig = NumericGuardConfig()) -> tuple[np.ndarray, float]:
    """Labels and wall-clock seconds spent classifying."""
    t0 = time.perf_counter()
    labels = classify(name, recording, thresholds, conv, guard)
    return labels, time.perf_counter() - t0
