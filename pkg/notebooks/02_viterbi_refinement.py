# Two-state Viterbi decoding and the refinement loop on a toy feature.
import numpy as np

from gazekit.hmm import (GaussianParams, HmmModel, NumericGuardConfig, count_transitions,
                         viterbi_decode, viterbi_refine, viterbi_trellis)

rng = np.random.default_rng(0)
truth = np.repeat([0, 1, 0, 1, 0], [80, 30, 60, 40, 90])
feature = np.where(truth == 1, 6.0, 1.0) + rng.normal(0, 1.2, truth.size)

# A plain threshold is noisy at the class boundary...
seed = (feature > 4.5).astype(np.int8)
print("threshold agreement:", (seed == truth).mean().round(3))

# ...refinement fits a Gaussian per state and a transition table, decodes the
# most probable path, and repeats until the model settles.
res = viterbi_refine(feature, seed)
print("refined agreement:  ", (res.states == truth).mean().round(3),
      "after", res.iterations, "iterations, converged:", res.converged)

# Transition frequencies are counts divided by the sequence length.
print(count_transitions(res.states).round(4))

# Long sequences underflow in linear probability space.  The guard rescales
# a column by a power of two, which leaves the ratio between states exact.
model = HmmModel((GaussianParams(1.0, 1.2), GaussianParams(6.0, 1.2)), count_transitions(seed))
long_feature = np.tile(feature, 200)
em, _, n_rescale = viterbi_trellis(long_feature, model)
print(len(long_feature), "steps,", n_rescale, "rescaled columns, smallest column max",
      em.max(axis=1).min())

# Without the guard the trellis collapses to zero.
raw, _, _ = viterbi_trellis(long_feature, HmmModel(model.params, model.transitions,
                                                   NumericGuardConfig(enabled=False)))
print("unguarded last column:", raw[-1])
path, _ = viterbi_decode(long_feature, model)
print("guarded decode agreement:", (path == np.tile(truth, 200)).mean().round(3))
