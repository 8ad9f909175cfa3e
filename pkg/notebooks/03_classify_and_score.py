# Classify a synthetic recording with each algorithm and score it.
import warnings

import numpy as np

from gazekit.classifiers import CLASSIFIERS, timed_classify
from gazekit.scores import SCORE_NAMES, ideal_scores, score_all
from gazekit.synth import OculomotorSpec, default_stimulus_spec, generate_stimulus, simulate_gaze
from gazekit.tuning import objective

warnings.simplefilter("ignore")

track = generate_stimulus(default_stimulus_spec())
rec, truth = simulate_gaze(track, OculomotorSpec(noise_std=0.05, seed=4))
ideal = ideal_scores(track)

print("ideal   ", "  ".join(f"{k}={getattr(ideal, k):6.2f}" for k in SCORE_NAMES))
for name in CLASSIFIERS:
    timed_classify(name, rec)  # first call loads the compiled kernels
    labels, secs = timed_classify(name, rec)
    rep = score_all(labels, track, rec, strict=False)
    vals = "  ".join(f"{k}={v:6.2f}" if v is not None else f"{k}=  None"
                     for k, v in zip(SCORE_NAMES, (getattr(rep, k) for k in SCORE_NAMES)))
    print(f"{name:8s}", vals)
    print(f"{'':8s} agreement {np.mean(labels == truth):.3f}, objective {objective(rep, ideal):8.2f}, "
          f"{secs * 1e3:.2f} ms")

# Scoring the ground truth itself lands on the ideal observer.
rep = score_all(truth, track, rec)
print("truth    FQnS", round(rep.fqns, 2), "PQnS", round(rep.pqns, 2), "MisFix", round(rep.misfix, 2))
