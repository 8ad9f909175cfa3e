import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_recording
from gazekit.model import (
    PAPER_FREQUENCIES,
    FormatError,
    GazeRecording,
    InsufficientDataError,
    Label,
    OrderingError,
    SaccadeTiming,
    ThresholdSet,
    UndefinedDispersionError,
    UpsamplingError,
    as_labels,
    compute_dispersion,
    compute_velocities,
    forward_window_stops,
    infer_rate,
    label_runs,
    parse_recording,
    resample,
    resample_indices,
    window_dispersions,
    write_recording,
)


# ---------------------------------------------------------------- CSV


def test_roundtrip_preserves_values(clean_case):
    rec, stim, truth = clean_case
    buf = io.StringIO()
    write_recording(buf, rec, stim, truth)
    back = parse_recording(buf.getvalue())
    assert back.recording.rate_hz == 1000.0
    np.testing.assert_array_equal(back.recording.x, rec.x)
    np.testing.assert_array_equal(back.recording.t, rec.t)
    np.testing.assert_array_equal(back.stimulus.intended, stim.intended)
    np.testing.assert_array_equal(back.truth, truth)


def test_missing_column_is_named():
    with pytest.raises(FormatError, match="y_deg"):
        parse_recording("timestamp_ms,x_deg\n0,1\n1,2\n")


def test_non_numeric_gaze_marks_invalid():
    p = parse_recording("timestamp_ms,x_deg,y_deg\n0,1,1\n2,nan,1\n4,,3\n6,2,2\n")
    assert p.recording.valid.tolist() == [True, False, False, True]
    assert math.isnan(p.recording.x[2])
    assert p.recording.rate_hz == 500.0
    assert p.stimulus is None and p.truth is None


def test_timestamps_must_increase():
    with pytest.raises(OrderingError, match="row 2"):
        parse_recording("timestamp_ms,x_deg,y_deg\n0,0,0\n1,0,0\n1,0,0\n")


def test_column_mapping():
    p = parse_recording("time,gx,gy\n0,1,2\n1,3,4\n", columns={"timestamp_ms": "time", "x_deg": "gx", "y_deg": "gy"})
    assert p.recording.y.tolist() == [2.0, 4.0]


def test_label_codes():
    assert as_labels(["FIX", "sac", " SP "]).tolist() == [0, 1, 2]
    with pytest.raises(FormatError):
        as_labels(["BLINK"])
    assert label_runs(np.array([0, 0, 1, 2, 2])) == [(0, 0, 2), (1, 2, 3), (2, 3, 5)]


def test_recording_is_immutable():
    rec = make_recording([0.0, 1.0])
    with pytest.raises(ValueError):
        rec.x[0] = 5.0


def test_threshold_set_positive():
    with pytest.raises(ValueError):
        ThresholdSet(vt=0)


def test_infer_rate():
    assert infer_rate(np.arange(10) * 1000 / 60) == 60.0


# ---------------------------------------------------------------- features


def test_velocity_hand_computed():
    # 3-4-5 triangle: 5 deg in 10 ms is 500 deg/s
    rec = make_recording([0.0, 3.0, 3.0], [0.0, 4.0, 4.0], rate_hz=100.0)
    np.testing.assert_allclose(compute_velocities(rec), [500.0, 500.0, 0.0])


def test_velocity_invalid_forward_fills():
    x = np.array([0.0, 1.0, np.nan, 5.0, 6.0])
    rec = make_recording(x, rate_hz=1000.0, valid=np.isfinite(x))
    v = compute_velocities(rec)
    assert v.tolist() == [1000.0, 1000.0, 1000.0, 1000.0, 1000.0]
    assert np.all(np.isfinite(v))


def test_velocity_needs_two_samples():
    with pytest.raises(InsufficientDataError):
        compute_velocities(make_recording([1.0]))


def test_dispersion_formula():
    assert compute_dispersion([0, 2, 1], [5, 4, 4.5]) == 3.0
    with pytest.raises(UndefinedDispersionError):
        compute_dispersion([np.nan], [np.nan])
    with pytest.raises(InsufficientDataError):
        compute_dispersion([], [])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=1, max_size=40), st.data())
def test_window_dispersions_match_direct(xs, data):
    x = np.array(xs)
    y = x[::-1] * 0.5
    n = x.size
    starts = np.array(data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=10)))
    lens = np.array(data.draw(st.lists(st.integers(1, n), min_size=starts.size, max_size=starts.size)))
    stops = np.minimum(starts + lens, n)
    got = window_dispersions(x, y, starts, stops)
    want = [compute_dispersion(x[a:b], y[a:b]) for a, b in zip(starts, stops)]
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


def test_forward_window_stops():
    t = np.arange(10.0)
    assert forward_window_stops(t, 3.0).tolist() == [3, 4, 5, 6, 7, 8, 9, 10, 10, 10]


# ---------------------------------------------------------------- resampling


def test_paper_frequencies():
    assert PAPER_FREQUENCIES == (30, 50, 60, 100, 200, 300, 500)


def test_resample_half_rate_takes_every_other(clean_case):
    rec, stim, truth = clean_case
    r = resample(rec, 500, stim, truth)
    assert len(r.recording) == len(rec) // 2
    np.testing.assert_array_equal(r.recording.t, rec.t[::2])
    assert r.recording.rate_hz == 500.0
    np.testing.assert_array_equal(r.truth, truth[::2])


def test_upsampling_rejected():
    with pytest.raises(UpsamplingError):
        resample(make_recording(np.zeros(10)), 2000)


def test_nearest_with_ties_to_earlier():
    # 1000 Hz to 400 Hz: grid 0, 2.5, 5, 7.5 ms; 2.5 ties between 2 and 3
    assert resample_indices(np.arange(10.0), 1000, 400).tolist() == [0, 2, 5, 7]


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 3000), st.sampled_from([1000.0, 500.0, 250.0, 120.0]))
def test_resample_invariants(n, rate):
    t = np.arange(n) * 1000.0 / rate
    for f in PAPER_FREQUENCIES:
        if f > rate:
            continue
        idx = resample_indices(t, rate, f)
        assert np.all(np.diff(idx) > 0)
        assert idx[0] == 0 and idx[-1] < n
        if n * f / rate < 0.5:
            continue  # shorter than half an output period: one sample is kept
        # covered duration (count x period) within half an output period
        assert abs(idx.size * 1000.0 / f - n * 1000.0 / rate) <= 500.0 / f + 1e-9


def test_saccade_timing():
    tm = SaccadeTiming()
    assert tm.main_sequence(10) == 43.0
    # 10 deg at 400 deg/s peak, min-jerk: 1.875 * 10 / 400 s
    # the main sequence binds at 10 deg, the peak-velocity cap at 1 deg
    assert tm.eye_duration(10) == 43.0
    assert tm.eye_duration(1) == pytest.approx(1.875 / 400 * 1000)
    d = tm.catch_up_duration(10.0, 140.0)
    # the landing amplitude obeys the duration rule it was solved from
    amp = 10.0 / 1000 * (140 + d)
    assert d == pytest.approx(tm.eye_duration(amp))


def test_label_enum_values():
    assert [int(v) for v in Label] == [0, 1, 2, 3]
