"""Two-state Gaussian-emission Viterbi decoding with iterative re-estimation.

Decoding runs in linear probability space.  Three guards keep the trellis
away from zero:

* an observation probability that underflows to 0 is reset to a small
  fraction of the other state's value;
* if both underflow, both are reset to a fixed value;
* a trellis column whose maximum falls below ``emission_lower_bound`` is
  rescaled by a shared factor, which keeps the ratio between the states.

The default rescale multiplies by a power of two, which is exact in binary
floating point, so the ratio is preserved bit for bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numba
import numpy as np

from .model import GazeError, InsufficientDataError

SIGMA_FLOOR = 1e-6

RESCALE_BINARY = 0
RESCALE_LOG10 = 1
_RESCALE_MODES = {"binary": RESCALE_BINARY, "log10": RESCALE_LOG10}


class EmptyClassError(GazeError, ValueError):
    pass


class ParameterError(GazeError, ValueError):
    pass


class DegeneracyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GaussianParams:
    mean: float
    std: float


@dataclass(frozen=True)
class NumericGuardConfig:
    """Underflow guards.

    ``rescale`` is ``"binary"`` (scale the column by a power of two so its
    maximum lands in [0.5, 1)) or ``"log10"`` (multiply both entries by
    ``|log10(max)|``, a compatibility mode that only nudges the magnitude).
    """

    zero_reset_ratio: float = 1e-4
    emission_lower_bound: float = 1e-100
    initial_reset_value: float = 0.5
    rescale: str = "binary"
    enabled: bool = True

    def __post_init__(self):
        if not 0 < self.zero_reset_ratio < 1:
            raise ValueError("zero_reset_ratio must lie in (0, 1)")
        if not 0 < self.emission_lower_bound < 1:
            raise ValueError("emission_lower_bound must lie in (0, 1)")
        if not self.initial_reset_value > 0:
            raise ValueError("initial_reset_value must be positive")
        if self.rescale not in _RESCALE_MODES:
            raise ValueError(f"rescale must be one of {sorted(_RESCALE_MODES)}")


GUARDS_OFF = NumericGuardConfig(enabled=False)


@dataclass(frozen=True)
class ConvergenceConfig:
    epsilon_mean: float = 0.01
    epsilon_std: float = 0.01
    epsilon_transition: float = 1e-3
    max_iterations: int = 100

    def __post_init__(self):
        if min(self.epsilon_mean, self.epsilon_std, self.epsilon_transition) <= 0:
            raise ValueError("epsilons must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


@dataclass(frozen=True, eq=False)
class HmmModel:
    params: tuple[GaussianParams, GaussianParams]
    transitions: np.ndarray
    guard: NumericGuardConfig = NumericGuardConfig()

    def __post_init__(self):
        if len(self.params) != 2:
            raise ParameterError("exactly two states are supported")
        trans = np.array(self.transitions, dtype=float)
        if trans.shape != (2, 2):
            raise ParameterError("transition matrix must be 2x2")
        if np.any(trans < 0) or np.any(trans > 1):
            raise ParameterError("transition probabilities must lie in [0, 1]")
        trans.setflags(write=False)
        object.__setattr__(self, "transitions", trans)


class RefineResult(NamedTuple):
    states: np.ndarray
    iterations: int
    converged: bool
    degenerate: bool


# --------------------------------------------------------------------------
# model estimation


def estimate_gaussian_params(features, states) -> tuple[GaussianParams, GaussianParams]:
    """Per-state sample mean and (n-1) standard deviation, floored at ``SIGMA_FLOOR``."""
    features = np.asarray(features, dtype=float)
    states = np.asarray(states)
    out = []
    for s in (0, 1):
        vals = features[states == s]
        if vals.size == 0:
            raise EmptyClassError(f"state {s} has no samples")
        mu = float(vals.mean())
        sd = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        out.append(GaussianParams(mu, max(sd, SIGMA_FLOOR)))
    return out[0], out[1]


def count_transitions(states, row_normalized: bool = False) -> np.ndarray:
    """Transition frequencies ``p[from, to]``.

    By default each count is divided by the sequence length n, so rows do not
    sum to 1.  With ``row_normalized`` each row is divided by its outgoing
    count; a state that is never left gets a uniform row.
    """
    states = np.asarray(states, dtype=np.intp)
    n = states.size
    if n < 2:
        raise InsufficientDataError("transition counting needs at least 2 labels")
    counts = np.zeros((2, 2))
    np.add.at(counts, (states[:-1], states[1:]), 1.0)
    if not row_normalized:
        return counts / n
    rows = counts.sum(axis=1, keepdims=True)
    return np.where(rows > 0, counts / np.where(rows > 0, rows, 1.0), 0.5)


def gaussian_pdf(x, params: GaussianParams):
    if not params.std > 0:
        raise ParameterError(f"standard deviation must be positive, got {params.std}")
    var = params.std * params.std
    x = np.asarray(x, dtype=float)
    return np.exp(-((x - params.mean) ** 2) / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)


def observation_probabilities(features, params: Sequence[GaussianParams],
                              guard: NumericGuardConfig = NumericGuardConfig()) -> np.ndarray:
    """Guarded, per-sample normalised state likelihoods, shape (n, 2)."""
    features = np.asarray(features, dtype=float)
    obs = np.column_stack([gaussian_pdf(features, params[0]), gaussian_pdf(features, params[1])])
    if guard.enabled:
        z0 = obs[:, 0] == 0
        z1 = obs[:, 1] == 0
        both = z0 & z1
        obs[z0 & ~z1, 0] = guard.zero_reset_ratio * obs[z0 & ~z1, 1]
        obs[z1 & ~z0, 1] = guard.zero_reset_ratio * obs[z1 & ~z0, 0]
        obs[both] = guard.initial_reset_value
    total = obs.sum(axis=1, keepdims=True)
    return np.divide(obs, total, out=np.zeros_like(obs), where=total > 0)


# --------------------------------------------------------------------------
# decoding


@numba.njit(cache=True, nogil=True)
def rescale_column(col, mode):
    m = max(col[0], col[1])
    if mode == RESCALE_BINARY:
        _, e = math.frexp(m)
        col[0] = math.ldexp(col[0], -e)
        col[1] = math.ldexp(col[1], -e)
    else:
        f = abs(math.log10(m))
        col[0] = col[0] * f
        col[1] = col[1] * f


@numba.njit(cache=True, nogil=True)
def _trellis(obs, trans, enabled, lower_bound, reset_value, mode):
    n = obs.shape[0]
    em = np.empty((n, 2))
    back = np.zeros((n, 2), dtype=np.int8)
    em[0, 0] = obs[0, 0]
    em[0, 1] = obs[0, 1]
    n_rescale = 0
    for t in range(1, n):
        for s in range(2):
            c0 = em[t - 1, 0] * trans[0, s] * obs[t, s]
            c1 = em[t - 1, 1] * trans[1, s] * obs[t, s]
            if c1 > c0:
                em[t, s] = c1
                back[t, s] = 1
            else:
                em[t, s] = c0
        if enabled:
            if em[t, 0] == 0.0 and em[t, 1] == 0.0:
                em[t, 0] = reset_value
                em[t, 1] = reset_value
            elif max(em[t, 0], em[t, 1]) < lower_bound:
                rescale_column(em[t], mode)
                n_rescale += 1
    return em, back, n_rescale


def viterbi_trellis(features, model: HmmModel):
    """Emission and traceback matrices plus the number of rescaled columns."""
    obs = observation_probabilities(features, model.params, model.guard)
    g = model.guard
    return _trellis(obs, np.ascontiguousarray(model.transitions), g.enabled,
                    g.emission_lower_bound, g.initial_reset_value, _RESCALE_MODES[g.rescale])


@numba.njit(cache=True, nogil=True)
def _traceback(em, back):
    n = em.shape[0]
    path = np.empty(n, dtype=np.int8)
    path[n - 1] = 1 if em[n - 1, 1] > em[n - 1, 0] else 0
    for t in range(n - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def viterbi_decode(features, model: HmmModel) -> tuple[np.ndarray, float]:
    """Most probable state path (0/1 per sample) and its final trellis value.

    The first trellis column holds the normalised observation probabilities,
    later columns the best predecessor times transition times observation.
    Ties everywhere resolve to state 0.
    """
    features = np.asarray(features, dtype=float)
    if features.size == 0:
        raise InsufficientDataError("cannot decode an empty feature sequence")
    em, back, _ = viterbi_trellis(features, model)
    path = _traceback(em, back)
    return path, float(em[-1, path[-1]])


def viterbi_refine(features, initial_states, conv: ConvergenceConfig = ConvergenceConfig(),
                   guard: NumericGuardConfig = NumericGuardConfig(),
                   row_normalized: bool = False) -> RefineResult:
    """Alternate model estimation and decoding until the model stops moving.

    Each iteration fits Gaussians and transition frequencies to the current
    labelling, decodes, and refits.  It stops when every mean, std and
    transition entry moved by less than its epsilon, or after
    ``conv.max_iterations`` decodes.  If a decode empties a state, the previous
    labelling is returned with a :class:`DegeneracyWarning`.
    """
    features = np.asarray(features, dtype=float)
    states = np.asarray(initial_states, dtype=np.int8)
    if states.shape != features.shape:
        raise ValueError("features and initial states must have equal length")
    if conv.max_iterations == 0:
        return RefineResult(states.copy(), 0, False, False)
    params = estimate_gaussian_params(features, states)
    trans = count_transitions(states, row_normalized)
    for it in range(1, conv.max_iterations + 1):
        new_states, _ = viterbi_decode(features, HmmModel(params, trans, guard))
        try:
            new_params = estimate_gaussian_params(features, new_states)
        except EmptyClassError:
            warnings.warn("a state emptied during Viterbi refinement; keeping previous labels",
                          DegeneracyWarning, stacklevel=2)
            return RefineResult(states, it, False, True)
        new_trans = count_transitions(new_states, row_normalized)
        done = (all(abs(a.mean - b.mean) < conv.epsilon_mean for a, b in zip(params, new_params))
                and all(abs(a.std - b.std) < conv.epsilon_std for a, b in zip(params, new_params))
                and float(np.max(np.abs(new_trans - trans))) < conv.epsilon_transition)
        states, params, trans = new_states, new_params, new_trans
        if done:
            return RefineResult(states, it, True, False)
    return RefineResult(states, conv.max_iterations, False, False)
