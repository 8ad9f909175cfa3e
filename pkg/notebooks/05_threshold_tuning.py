# Grid search for the velocity and dispersion thresholds.
import os
import tempfile
import warnings

import numpy as np

from gazekit.synth import OculomotorSpec, default_stimulus_spec, generate_stimulus, simulate_gaze
from gazekit.tuning import GridSpec, WeightVector, grid_search

warnings.simplefilter("ignore")

track = generate_stimulus(default_stimulus_spec())
cases = [(simulate_gaze(track, OculomotorSpec(noise_std=0.05, seed=s))[0], track) for s in range(3)]

# 17 velocity thresholds x 20 dispersion thresholds, cost averaged over recordings.
result = grid_search(cases, GridSpec())
print("best", result.best, "cost", round(result.best_cost, 2))
print("per-recording best:", [(b.vt, b.dt) for b in result.per_recording_best])

# The cost surface as a table, velocity rows, dispersion columns.
table = result.cost.reshape(17, 20)
print("cheapest cell per velocity threshold:")
for vt, row in zip(GridSpec().velocity_grid, table):
    j = int(np.argmin(row))
    print(f"  vt {vt:5.0f}  dt {GridSpec().dispersion_grid[j]:.1f}  cost {row[j]:8.2f}")

# Put all the weight on one score to tune for it alone.
for name in ("fqns", "pqns", "misfix"):
    r = grid_search(cases, GridSpec(), WeightVector.only(name))
    print(f"tuned for {name:6s}: vt {r.best.vt:g} dt {r.best.dt:g}")

path = os.path.join(tempfile.mkdtemp(), "cost_table.csv")
result.write_csv(path)
print("cost table written to", path)
