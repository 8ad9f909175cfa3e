# A step-ramp stimulus and a simulated observer watching it.
import numpy as np

from gazekit.model import label_runs
from gazekit.synth import (Fixation, OculomotorSpec, Ramp, Step, StimulusSpec,
                           default_stimulus_spec, generate_stimulus, simulate_gaze)

# A small stimulus: hold, jump 8 deg right, hold, glide up at 10 deg/s, hold.
spec = StimulusSpec((Fixation(500), Step(8.0, 0.0), Fixation(500),
                     Ramp(600, 10.0, 90.0), Fixation(500)))
track = generate_stimulus(spec)
print(len(track), "samples at", spec.rate_hz, "Hz")

names = {0: "FIX", 1: "SAC", 2: "SP"}
for lab, a, b in label_runs(track.intended):
    print(f"  target asks for {names[lab]:3s} from {track.t[a]:6.0f} to {track.t[b - 1] + 1:6.0f} ms")

# The observer reacts 140 ms late, so its own runs are shifted.
rec, truth = simulate_gaze(track, OculomotorSpec(noise_std=0.0))
for lab, a, b in label_runs(truth):
    print(f"  eye does        {names[lab]:3s} from {rec.t[a]:6.0f} to {rec.t[b - 1] + 1:6.0f} ms")

# During steady pursuit the noiseless eye sits exactly on the target.
sp = truth == 2
print("max pursuit error, deg:", np.abs(rec.y[sp & (track.intended == 2)] - track.sy[sp & (track.intended == 2)]).max())

# Noise is seeded; noise_std is the 2-D RMS.
a, _ = simulate_gaze(track, OculomotorSpec(noise_std=0.1, seed=3))
b, _ = simulate_gaze(track, OculomotorSpec(noise_std=0.1, seed=3))
print("same seed, same trace:", np.array_equal(a.x, b.x))
print("2-D RMS noise:", np.sqrt(np.mean((a.x - rec.x) ** 2 + (a.y - rec.y) ** 2)).round(3))

# The bundled design used everywhere else: two cycles of steps and ramps, 9.4 s.
full = generate_stimulus(default_stimulus_spec())
print("default design:", len(full), "samples")
