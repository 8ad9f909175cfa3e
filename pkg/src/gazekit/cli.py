"""Command-line entry point: ``gazekit {classify,resample,synth,tune,report}``.

Exit codes: 0 success, 2 input or usage error, 3 domain failure (the data
were read but the computation could not produce a result), 1 internal fault.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import re
import sys
import traceback
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .classifiers import CLASSIFIERS, classify, timed_classify
from .hmm import ConvergenceConfig
from .model import (
    CODE_OF_LABEL,
    PAPER_FREQUENCIES,
    GazeError,
    ParsedRecording,
    ThresholdSet,
    parse_recording,
    resample,
    write_recording,
)
from .scores import SCORE_NAMES, LatencyModel, score_all
from .synth import OculomotorSpec, SpecError, StimulusSpec, default_stimulus_spec, generate_stimulus, simulate_gaze
from .tuning import GridSpec, NoFeasibleThresholdError, WeightVector, grid_search

EXIT_OK, EXIT_FAULT, EXIT_INPUT, EXIT_DOMAIN = 0, 1, 2, 3


class InputError(Exception):
    """Bad paths, unreadable files or inconsistent flags (exit 2)."""


class DomainError(Exception):
    """Readable input on which the requested computation fails (exit 3)."""


@dataclass(frozen=True)
class RunManifest:
    inputs: tuple
    algorithm: str = "ivdt-hmm"
    thresholds: ThresholdSet = ThresholdSet()
    grid: Optional[GridSpec] = None
    out_dir: Path = Path(".")
    frequencies: tuple = ()

    def __post_init__(self):
        if self.algorithm not in CLASSIFIERS:
            raise InputError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(CLASSIFIERS)}")


# --------------------------------------------------------------------------
# helpers


def _float_list(text: str, name: str, n: Optional[int] = None) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"--{name}: expected comma-separated numbers, got {text!r}") from None
    if not vals or (n is not None and len(vals) != n):
        raise InputError(f"--{name}: expected {n or 'at least one'} value(s), got {len(vals)}")
    return vals


def _expand_inputs(paths: Sequence[str]) -> list[Path]:
    if not paths:
        raise InputError("no input files given")
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out += sorted(p.glob("*.csv"))
        elif p.is_file():
            out.append(p)
        else:
            raise InputError(f"no such file or directory: {p}")
    if not out:
        raise InputError("no CSV inputs found")
    return out


def _read(path: Path) -> ParsedRecording:
    try:
        return parse_recording(path)
    except (OSError, UnicodeDecodeError, GazeError) as e:
        raise InputError(f"{path}: {e}") from None


def _out_dir(path: str) -> Path:
    d = Path(path)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise InputError(f"cannot create output directory {d}: {e}") from None
    return d


def _hz_tag(hz: float) -> str:
    return f"{hz:g}"


def _convergence(args) -> ConvergenceConfig:
    kw = {}
    if args.epsilons:
        m, s, t = _float_list(args.epsilons, "epsilons", 3)
        kw.update(epsilon_mean=m, epsilon_std=s, epsilon_transition=t)
    if args.max_iter is not None:
        kw["max_iterations"] = args.max_iter
    try:
        return ConvergenceConfig(**kw)
    except ValueError as e:
        raise InputError(str(e)) from None


def _thresholds(args) -> ThresholdSet:
    try:
        return ThresholdSet(args.vt, args.dt, args.wt)
    except ValueError as e:
        raise InputError(str(e)) from None


def _at_rate(parsed: ParsedRecording, hz: Optional[float]) -> ParsedRecording:
    if hz is None or math.isclose(hz, parsed.recording.rate_hz):
        return parsed
    try:
        return resample(parsed.recording, hz, parsed.stimulus, parsed.truth)
    except GazeError as e:
        raise InputError(str(e)) from None


_warmed: set = set()


def _warm_up(algorithm: str, parsed: ParsedRecording, thresholds: ThresholdSet, conv) -> None:
    # compile / load the numba kernels outside the timed call
    if algorithm in _warmed:
        return
    rec = parsed.recording
    n = min(len(rec), 400)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            classify(algorithm, rec.take(np.arange(n)), thresholds, conv)
        except (GazeError, ValueError):
            pass
    _warmed.add(algorithm)


# --------------------------------------------------------------------------
# commands


def cmd_classify(args) -> int:
    conv = _convergence(args)
    manifest = RunManifest(tuple(_expand_inputs(args.inputs)), args.algorithm, _thresholds(args),
                           out_dir=_out_dir(args.out))
    parsed_all = [(p, _at_rate(_read(p), args.hz)) for p in manifest.inputs]
    for path, parsed in parsed_all:
        rec = parsed.recording
        hz = _hz_tag(rec.rate_hz)
        _warm_up(manifest.algorithm, parsed, manifest.thresholds, conv)
        try:
            labels, seconds = timed_classify(manifest.algorithm, rec, manifest.thresholds, conv)
        except (GazeError, ValueError) as e:
            raise DomainError(f"{path}: classification failed: {e}") from None
        stem = f"{path.stem}_{manifest.algorithm}_{hz}hz"
        with open(manifest.out_dir / f"{stem}_labels.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp_ms", "label"])
            for t, lab in zip(rec.t, labels):
                w.writerow([repr(float(t)), CODE_OF_LABEL[int(lab)]])
        doc = {"source": path.name, "algorithm": manifest.algorithm, "hz": rec.rate_hz,
               "thresholds": {"vt": manifest.thresholds.vt, "dt": manifest.thresholds.dt,
                              "wt": manifest.thresholds.wt}}
        if parsed.stimulus is not None:
            report = score_all(labels, parsed.stimulus, rec, LatencyModel(), classification_time=seconds,
                               strict=False)
            doc.update(report.to_dict())
        else:
            doc["classification_time_s"] = seconds
        (manifest.out_dir / f"{stem}_scores.json").write_text(json.dumps(doc, indent=2) + "\n")
        print(f"{path.name}: {manifest.algorithm} at {hz} Hz, {len(labels)} samples, {seconds:.4f} s")
    return EXIT_OK


def cmd_resample(args) -> int:
    freqs = _float_list(args.hz, "hz") if args.hz else list(PAPER_FREQUENCIES)
    out = _out_dir(args.out)
    for path in _expand_inputs(args.inputs):
        parsed = _read(path)
        native = parsed.recording.rate_hz
        too_high = [f for f in freqs if f > native * (1 + 1e-9)]
        if too_high:
            raise InputError(f"{path}: cannot resample {native:g} Hz data to {_hz_tag(too_high[0])} Hz")
        for f in freqs:
            try:
                r = resample(parsed.recording, f, parsed.stimulus, parsed.truth)
            except GazeError as e:
                raise InputError(f"{path}: {e}") from None
            dest = out / f"{path.stem}_{_hz_tag(f)}hz.csv"
            write_recording(dest, r.recording, r.stimulus, r.truth)
            print(f"{dest}: {len(r.recording)} samples")
    return EXIT_OK


def _load_synth_spec(path: Optional[str], hz: Optional[float]):
    if path is None:
        return default_stimulus_spec(hz or 1000.0), {}
    try:
        doc = json.loads(Path(path).read_text())
        ocu = doc.get("oculomotor", {})
        if not isinstance(ocu, dict):
            raise SpecError("'oculomotor' must be an object")
        spec = StimulusSpec.from_dict(doc)
        if hz is not None:
            spec = StimulusSpec(spec.segments, hz, spec.timing)
        return spec, ocu
    except OSError as e:
        raise InputError(f"cannot read spec {path}: {e}") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise InputError(f"invalid spec {path}: {e}") from None


def cmd_synth(args) -> int:
    spec, ocu_fields = _load_synth_spec(args.spec, args.hz)
    try:
        ocu = OculomotorSpec(**{**ocu_fields, "seed": args.seed,
                                **({"noise_std": args.noise} if args.noise is not None else {})})
        track = generate_stimulus(spec)
        rec, truth = simulate_gaze(track, ocu, spec.timing)
    except (TypeError, ValueError) as e:
        raise InputError(f"invalid spec: {e}") from None
    out = Path(args.out)
    if out.suffix.lower() != ".csv":
        out = _out_dir(args.out) / f"synth_seed{args.seed}.csv"
    else:
        _out_dir(str(out.parent))
    write_recording(out, rec, track, truth)
    print(f"{out}: {len(rec)} samples at {_hz_tag(rec.rate_hz)} Hz")
    return EXIT_OK


def cmd_tune(args) -> int:
    conv = _convergence(args)
    defaults = GridSpec()
    try:
        grid = GridSpec(_float_list(args.vt, "vt") if args.vt else defaults.velocity_grid,
                        _float_list(args.dt, "dt") if args.dt else defaults.dispersion_grid,
                        args.wt)
        weights = WeightVector(*_float_list(args.weights, "weights", 7)) if args.weights else WeightVector()
    except ValueError as e:
        raise InputError(str(e)) from None
    manifest = RunManifest(tuple(_expand_inputs(args.inputs)), args.algorithm, grid=grid,
                           out_dir=_out_dir(args.out))
    cases = []
    for p in manifest.inputs:
        parsed = _at_rate(_read(p), args.hz)
        if parsed.stimulus is None:
            raise InputError(f"{p}: tuning needs stimulus columns sx_deg, sy_deg, intended")
        cases.append((parsed.recording, parsed.stimulus))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = grid_search(cases, grid, weights, manifest.algorithm, conv=conv)
    except NoFeasibleThresholdError as e:
        raise DomainError(str(e)) from None
    except (GazeError, ValueError) as e:
        raise DomainError(f"grid search failed: {e}") from None
    best = {"algorithm": manifest.algorithm, "vt": result.best.vt, "dt": result.best.dt,
            "wt": result.best.wt, "cost": result.best_cost,
            "weights": dict(zip(SCORE_NAMES, weights.as_array().tolist())),
            "per_recording": [
                {"source": p.name, "vt": b.vt, "dt": b.dt} if b is not None else {"source": p.name}
                for p, b in zip(manifest.inputs, result.per_recording_best)]}
    (manifest.out_dir / "best_thresholds.json").write_text(json.dumps(best, indent=2) + "\n")
    result.write_csv(manifest.out_dir / "cost_table.csv")
    print(f"best vt={result.best.vt:g} dt={result.best.dt:g} cost={result.best_cost:.4f} "
          f"over {len(result.cost)} cells")
    return EXIT_OK


_NAME_RE = re.compile(r"_(ivt|ivdt|ivdt-hmm|ibdt)_([0-9.]+)hz_scores\.json$")


def _report_key(path: Path, doc: dict) -> tuple[str, float]:
    alg, hz = doc.get("algorithm"), doc.get("hz")
    if alg is None or hz is None:
        m = _NAME_RE.search(path.name)
        if m is None:
            raise InputError(f"{path}: cannot tell algorithm and frequency")
        alg, hz = alg or m.group(1), hz if hz is not None else float(m.group(2))
    return alg, float(hz)


def _write_table(path: Path, header: list, rows: list, fmt: str) -> None:
    if fmt == "json":
        path.write_text(json.dumps([dict(zip(header, r)) for r in rows], indent=2) + "\n")
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_report(args) -> int:
    root = Path(args.results)
    if not root.is_dir():
        raise InputError(f"no such directory: {root}")
    files = sorted(root.rglob("*_scores.json"))
    if not files:
        raise InputError(f"no score reports under {root}")
    groups: dict = {}
    for f in files:
        try:
            doc = json.loads(f.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise InputError(f"{f}: {e}") from None
        groups.setdefault(_report_key(f, doc), []).append(doc)

    def mean(docs, key):
        vals = [d[key] for d in docs if d.get(key) is not None]
        return float(np.mean(vals)) if vals else None

    keys = sorted(groups, key=lambda k: (CLASSIFIERS.index(k[0]) if k[0] in CLASSIFIERS else 99, k[1]))
    score_rows = [[alg, hz, len(groups[(alg, hz)]), *(mean(groups[(alg, hz)], s) for s in SCORE_NAMES)]
                  for alg, hz in keys]
    time_rows = [[alg, hz, mean(groups[(alg, hz)], "classification_time_s")] for alg, hz in keys]
    out = _out_dir(args.out) if args.out else root
    ext = "json" if args.format == "json" else "csv"
    _write_table(out / f"score_table.{ext}", ["algorithm", "hz", "n", *SCORE_NAMES], score_rows, args.format)
    _write_table(out / f"timing_table.{ext}", ["algorithm", "hz", "mean_time_s"], time_rows, args.format)
    for alg, hz, t in time_rows:
        print(f"{alg:9s} {_hz_tag(hz):>6s} Hz  mean time {t if t is not None else float('nan'):.4f} s")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gazekit", description="Eye-movement classification toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    def classifier_flags(sp, grid: bool):
        sp.add_argument("--algorithm", default="ivdt-hmm", choices=CLASSIFIERS)
        if grid:
            sp.add_argument("--vt", help="comma-separated velocity grid (deg/s); default 70..150 step 5")
            sp.add_argument("--dt", help="comma-separated dispersion grid (deg); default 0.1..2.0 step 0.1")
        else:
            sp.add_argument("--vt", type=float, default=ThresholdSet.vt, help="velocity threshold, deg/s")
            sp.add_argument("--dt", type=float, default=ThresholdSet.dt, help="dispersion threshold, deg")
        sp.add_argument("--wt", type=float, default=ThresholdSet.wt, help="window duration, ms")
        sp.add_argument("--epsilons", help="mean,std,transition convergence tolerances")
        sp.add_argument("--max-iter", type=int, help="Viterbi refinement iteration cap")
        sp.add_argument("--hz", type=float, help="resample inputs to this rate first")

    c = sub.add_parser("classify", help="label samples and score them against the stimulus")
    c.add_argument("inputs", nargs="*")
    classifier_flags(c, grid=False)
    c.add_argument("--out", default=".")
    c.set_defaults(func=cmd_classify)

    r = sub.add_parser("resample", help="decimate recordings to lower rates")
    r.add_argument("inputs", nargs="*")
    r.add_argument("--hz", help="comma-separated target rates; default 30,50,60,100,200,300,500")
    r.add_argument("--out", default=".")
    r.set_defaults(func=cmd_resample)

    s = sub.add_parser("synth", help="generate a synthetic step-ramp recording")
    s.add_argument("spec", nargs="?", help="JSON stimulus spec; default is the bundled design")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--hz", type=float, help="sampling rate (default 1000 or the spec's rate)")
    s.add_argument("--noise", type=float, help="gaze noise std, deg")
    s.add_argument("--out", default=".", help="output CSV path or directory")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("tune", help="grid-search thresholds against the ideal scores")
    t.add_argument("inputs", nargs="*")
    classifier_flags(t, grid=True)
    t.add_argument("--weights", help="7 comma-separated weights: " + ",".join(SCORE_NAMES))
    t.add_argument("--out", default=".")
    t.set_defaults(func=cmd_tune)

    rp = sub.add_parser("report", help="aggregate score reports into tables")
    rp.add_argument("results")
    rp.add_argument("--out", help="output directory; default is the results directory")
    rp.add_argument("--format", choices=("csv", "json"), default="csv")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except InputError as e:
        print(f"gazekit: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except DomainError as e:
        print(f"gazekit: failed: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    except Exception:
        traceback.print_exc()
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
