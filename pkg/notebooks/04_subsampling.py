# Decimating a recording to lower rates and classifying each version.
import warnings

from gazekit.classifiers import classify_ivdt_hmm
from gazekit.model import PAPER_FREQUENCIES, resample
from gazekit.scores import ideal_scores, score_all
from gazekit.synth import OculomotorSpec, default_stimulus_spec, generate_stimulus, simulate_gaze

warnings.simplefilter("ignore")

track = generate_stimulus(default_stimulus_spec())
for noise in (0.05, 0.5):
    rec, truth = simulate_gaze(track, OculomotorSpec(noise_std=noise, seed=1))
    print(f"noise {noise} deg")
    for hz in (1000,) + tuple(reversed(PAPER_FREQUENCIES)):
        r = resample(rec, hz, track, truth)
        labels = classify_ivdt_hmm(r.recording)
        rep = score_all(labels, r.stimulus, r.recording, strict=False)
        ideal = ideal_scores(r.stimulus)
        sq = f"{rep.sqns:6.1f}" if rep.sqns is not None else "  None"
        pq = f"{rep.pqns:5.1f}" if rep.pqns is not None else " None"
        print(f"  {hz:5d} Hz {len(r.recording):5d} samples  SQnS {sq} (ideal {ideal.sqns:.0f})  "
              f"PQnS {pq} (ideal {ideal.pqns:.1f})  agreement {(labels == r.truth).mean():.3f}")

# Decimation picks samples, it never averages them.
r = resample(rec, 30, track)
print("30 Hz timestamps:", r.recording.t[:4], "...")
