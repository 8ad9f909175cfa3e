"""Weighted grid search over velocity and dispersion thresholds."""

from __future__ import annotations

import csv
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .classifiers import (
    IbdtConfig,
    classify_ibdt,
    classify_idt_window,
    classify_ivt,
    filter_saccades,
    forward_dispersions,
    hmm_pursuit_stage,
    hmm_saccade_stage,
    merge_labels,
)
from .hmm import ConvergenceConfig, NumericGuardConfig
from .model import GazeError, GazeRecording, StimulusTrack, ThresholdSet, compute_velocities
from .scores import (
    DEFAULT_PROXIMITY,
    SCORE_NAMES,
    LatencyModel,
    ScoreReport,
    UndefinedScoreError,
    ideal_scores,
    score_all,
)


class NoFeasibleThresholdError(GazeError, RuntimeError):
    pass


@dataclass(frozen=True)
class WeightVector:
    fqns: float = 10.0
    sqns: float = 10.0
    pqns: float = 10.0
    misfix: float = 10.0
    fqls: float = 10.0
    pqls_p: float = 1.0
    pqls_v: float = 1.0

    def __post_init__(self):
        if any(w < 0 for w in self.as_array()):
            raise ValueError("weights must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in SCORE_NAMES], dtype=float)

    def scaled(self, factor: float) -> "WeightVector":
        return WeightVector(*(self.as_array() * factor))

    @classmethod
    def only(cls, name: str, weight: float = 1.0) -> "WeightVector":
        return cls(**{k: (weight if k == name else 0.0) for k in SCORE_NAMES})


def _default_velocity_grid():
    return tuple(float(v) for v in range(70, 151, 5))


def _default_dispersion_grid():
    return tuple(round(0.1 * k, 10) for k in range(1, 21))


@dataclass(frozen=True)
class GridSpec:
    velocity_grid: tuple = field(default_factory=_default_velocity_grid)
    dispersion_grid: tuple = field(default_factory=_default_dispersion_grid)
    duration: float = 150.0

    def __post_init__(self):
        for name in ("velocity_grid", "dispersion_grid"):
            g = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, g)
            if not g:
                raise ValueError(f"{name} is empty")
            if any(b <= a for a, b in zip(g, g[1:])):
                raise ValueError(f"{name} must be strictly increasing")
        if not self.duration > 0:
            raise ValueError("duration must be positive")


def objective(report: ScoreReport, ideals: ScoreReport, w: WeightVector = WeightVector()) -> float:
    """Weighted L1 distance between a report and the ideal scores.

    Scores with zero weight are ignored.  An undefined score with positive
    weight makes the cost infinite.
    """
    r = report.as_vector()
    i = ideals.as_vector()
    wa = w.as_array()
    use = wa > 0
    if np.any(np.isnan(r[use]) | np.isnan(i[use])):
        return math.inf
    return float(np.sum(wa[use] * np.abs(r[use] - i[use])))


@dataclass(frozen=True)
class Case:
    recording: GazeRecording
    stimulus: StimulusTrack


@dataclass
class GridResult:
    best: ThresholdSet
    vt: np.ndarray           # one row per cell, velocity-major
    dt: np.ndarray
    cost: np.ndarray         # mean over recordings, inf when infeasible
    scores: np.ndarray       # (cells, 7) mean score per cell, NaN when undefined
    per_recording_cost: np.ndarray  # (recordings, cells)
    per_recording_best: list

    @property
    def best_cost(self) -> float:
        return float(np.min(self.cost))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["vt", "dt", "cost", *SCORE_NAMES])
            for k in range(len(self.cost)):
                w.writerow([repr(float(self.vt[k])), repr(float(self.dt[k])), repr(float(self.cost[k])),
                            *(repr(float(s)) for s in self.scores[k])])


def thread_count(n_jobs: Optional[int] = None) -> int:
    if n_jobs is not None:
        return max(1, int(n_jobs))
    env = os.environ.get("GAZEKIT_THREADS")
    return max(1, int(env)) if env else 1


def _cells_for_velocity(case: Case, vt: float, dts: Sequence[float], wt: float, algorithm: str,
                        conv: ConvergenceConfig, guard: NumericGuardConfig,
                        velocities: np.ndarray) -> list[np.ndarray]:
    """Labels for every dispersion threshold at one velocity threshold.

    The saccade stage depends on ``vt`` only, so it runs once per row.
    """
    rec = case.recording
    if algorithm == "ibdt":
        return [classify_ibdt(rec, IbdtConfig(temporal_window=wt, saccade_threshold=vt))] * len(dts)
    if algorithm == "ivdt-hmm":
        sac = hmm_saccade_stage(rec, vt, conv, guard, velocities=velocities)
    else:
        sac = classify_ivt(rec, vt, velocities)
    if algorithm == "ivt":
        return [sac] * len(dts)
    sub = filter_saccades(rec, sac)
    if sub.recording is None:
        return [sac] * len(dts)
    disp = forward_dispersions(sub.recording, wt)
    if algorithm == "ivdt":
        return [merge_labels(sac, classify_idt_window(sub.recording, dt, wt, disp), sub.index) for dt in dts]
    return [merge_labels(sac, hmm_pursuit_stage(sub.recording, dt, wt, conv, guard, dispersions=disp), sub.index)
            for dt in dts]


def grid_search(cases: Sequence, grid: GridSpec = GridSpec(), w: WeightVector = WeightVector(),
                algorithm: str = "ivdt-hmm", latency: LatencyModel = LatencyModel(),
                proximity: float = DEFAULT_PROXIMITY,
                conv: ConvergenceConfig = ConvergenceConfig(),
                guard: NumericGuardConfig = NumericGuardConfig(),
                n_jobs: Optional[int] = None) -> GridResult:
    """Evaluate every (vt, dt) cell on every recording and pick the cheapest.

    ``cases`` holds ``(recording, stimulus)`` pairs.  The cost of a cell is
    the objective averaged over recordings; a cell infeasible on any
    recording is infeasible overall.  Ties go to the smaller vt, then dt.
    Per-recording argmins are reported alongside.
    """
    cases = [c if isinstance(c, Case) else Case(*c) for c in cases]
    if not cases:
        raise ValueError("grid search needs at least one recording")
    if algorithm not in ("ivt", "ivdt", "ivdt-hmm", "ibdt"):
        raise ValueError(f"unknown algorithm {algorithm!r}")
    vts, dts = grid.velocity_grid, grid.dispersion_grid
    n_cells = len(vts) * len(dts)
    per_cost = np.full((len(cases), n_cells), math.inf)
    per_scores = np.full((len(cases), n_cells, len(SCORE_NAMES)), np.nan)

    def work(job):
        ci, vi = job
        case = cases[ci]
        ideals = ideals_by_case[ci]
        labels = _cells_for_velocity(case, vts[vi], dts, grid.duration, algorithm, conv, guard,
                                     velocities[ci])
        for di, lab in enumerate(labels):
            k = vi * len(dts) + di
            rep = score_all(lab, case.stimulus, case.recording, latency, proximity, strict=False)
            per_scores[ci, k] = rep.as_vector()
            per_cost[ci, k] = objective(rep, ideals, w)

    ideals_by_case = [ideal_scores(c.stimulus, latency, proximity) for c in cases]
    velocities = [compute_velocities(c.recording) for c in cases]
    jobs = [(ci, vi) for ci in range(len(cases)) for vi in range(len(vts))]
    workers = thread_count(n_jobs)
    if workers == 1:
        for job in jobs:
            work(job)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(work, jobs))

    cost = per_cost.mean(axis=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        scores = np.nanmean(per_scores, axis=0)
    if not np.isfinite(cost).any():
        raise NoFeasibleThresholdError("every grid cell has an undefined score")
    vt_col = np.repeat(np.array(vts), len(dts))
    dt_col = np.tile(np.array(dts), len(vts))
    k = int(np.argmin(cost))  # first minimum in velocity-major order
    best = ThresholdSet(float(vt_col[k]), float(dt_col[k]), grid.duration)
    per_best = []
    for row in per_cost:
        j = int(np.argmin(row))
        per_best.append(ThresholdSet(float(vt_col[j]), float(dt_col[j]), grid.duration) if np.isfinite(row[j]) else None)
    return GridResult(best, vt_col, dt_col, cost, scores, per_cost, per_best)
