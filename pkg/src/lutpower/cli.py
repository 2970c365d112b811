"""Command-line entry point: ``lutpower <command> [options]``.

Exit codes: 0 success, 1 internal error, 2 user or data error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import traceback
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import corpus as corpus_io
from .characterization import (CapacityOracle, CounterSet, load_oracle, rank_all,
                               ranking_csv, select_counters)
from .errors import DataError
from .evaluation import evaluate_subsystem, evaluate_system, hot_path_allocations, measure_latency
from .evaluation import report as render_report
from .evaluation import sweep_predictor_count
from .power_models import SystemPredictor, dumps_lut, load_lut, predict_system
from .synthetic import load_spec, generate
from .trace import (CPU, CYCLES, GPU, SUBSYSTEMS, CounterId, atomic_write_text, gating_metric,
                    load_trace, split)
from .training import DEFAULT_SPLITS, combine_workloads, load_manifest, split_corpus, train_lut

log = logging.getLogger("lutpower")

DEFAULT_K = {CPU: 3, GPU: 8}


# -- argument helpers --------------------------------------------------------

def per_subsystem(text: str, cast, check, what: str) -> dict:
    """Parse ``"N"`` or ``"cpu=N,gpu=M"`` into ``{subsystem: value}``."""
    try:
        if "=" not in text:
            v = cast(text)
            out = {d: v for d in SUBSYSTEMS}
        else:
            out = {}
            for part in text.split(","):
                key, _, val = part.partition("=")
                key = key.strip()
                if key not in SUBSYSTEMS:
                    raise ValueError(f"unknown subsystem {key!r}")
                out[key] = cast(val)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad {what} {text!r}: {exc}") from None
    for d, v in out.items():
        if not check(v):
            raise argparse.ArgumentTypeError(f"{what} for {d} out of range: {v}")
    return out


def budget(text):
    return per_subsystem(text, int, lambda v: v >= 1, "counter budget")


def fractions(text):
    return per_subsystem(text, float, lambda v: 0 < v < 1, "train fraction")


def alpha_value(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 1)")
    return v


def _existing(text):
    p = Path(text)
    if not p.exists():
        raise argparse.ArgumentTypeError(f"{p} does not exist")
    return p


def _global_flags() -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--root", type=_existing, help="input corpus or validation directory")
    g.add_argument("--out", type=Path, default=Path("."), help="output directory")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--jobs", type=int, default=1, help="parallel trace loaders")
    g.add_argument("--alpha", type=alpha_value, default=0.05, help="p-value threshold")
    g.add_argument("--k", type=budget, default=None, help='counter budget, "N" or "cpu=3,gpu=8"')
    g.add_argument("--train-frac", type=fractions, default=None,
                   help='training fraction, "F" or "cpu=0.7,gpu=0.6"')
    g.add_argument("--oracle", type=_existing, help="PMU compatibility description (JSON)")
    g.add_argument("--quiet", action="store_true")
    return g


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lutpower",
                                description="Counter-based power models per DVFS state.")
    sub = p.add_subparsers(dest="command", required=True)
    g = [_global_flags()]

    c = sub.add_parser("characterize", parents=g, help="rank events and select counter sets")
    c.set_defaults(func=cmd_characterize)

    t = sub.add_parser("train", parents=g, help="fit the model lookup table")
    t.add_argument("--counters", type=_existing,
                   help="directory of counter-set JSON files (default: <out>/counter_sets)")
    t.add_argument("--manifest", type=_existing, help="training manifest instead of --root")
    t.add_argument("--model", default="model.json", help="output file name inside --out")
    t.add_argument("--platform", default="")
    t.add_argument("--stamp", action="store_true", help="record the creation time")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=g, help="evaluate a model")
    e.add_argument("--model", type=_existing, required=True)
    e.add_argument("--subsystem", choices=SUBSYSTEMS,
                   help="evaluate one subsystem on the held-out part of a corpus")
    e.add_argument("--samples", action="store_true", help="also dump per-sample estimates")
    e.add_argument("--floor", type=float, default=0.2, help="MAPE power floor in W")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("predict", parents=g, help="estimate power for counter rows")
    r.add_argument("--model", type=_existing, required=True)
    r.add_argument("--f-cpu", type=int, required=True, help="CPU frequency in Hz")
    r.add_argument("--f-gpu", type=int, required=True, help="GPU frequency in Hz")
    r.add_argument("--input", default="-", help="row CSV, '-' for stdin")
    r.add_argument("--output", default="-", help="estimate CSV, '-' for stdout")
    r.add_argument("--bench", action="store_true", help="measure evaluation latency instead")
    r.add_argument("--repetitions", type=int, default=1_000_000)
    r.set_defaults(func=cmd_predict)

    s = sub.add_parser("synth", parents=g, help="generate a synthetic corpus")
    s.add_argument("--spec", type=_existing, help="platform spec JSON (default: Xavier-shaped)")
    s.add_argument("--zero-noise", action="store_true", help="no noise and no quantization")
    s.set_defaults(func=cmd_synth)

    w = sub.add_parser("sweep", parents=g, help="energy error versus counter budget")
    w.add_argument("--subsystem", choices=SUBSYSTEMS, default=GPU)
    w.add_argument("--k-max", type=int, default=10)
    w.set_defaults(func=cmd_sweep)
    return p


def _require_root(args, what="--root"):
    if args.root is None:
        raise DataError(f"{args.command} needs {what}")
    return args.root


def _oracles(args) -> dict:
    if args.oracle is None:
        return {d: CapacityOracle() for d in SUBSYSTEMS}
    try:
        desc = json.loads(Path(args.oracle).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read oracle file {args.oracle}: {exc}") from None
    if not isinstance(desc, dict):
        raise DataError("oracle description must be a JSON object")
    keyed = any(d in desc for d in SUBSYSTEMS)
    return {d: load_oracle(args.oracle, d if keyed else None) for d in SUBSYSTEMS}


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _say(args, msg):
    if not args.quiet:
        print(msg)


# -- commands ----------------------------------------------------------------

def cmd_characterize(args) -> int:
    corpus = corpus_io.load_corpus(_require_root(args), args.jobs)
    k = args.k or DEFAULT_K
    oracles = _oracles(args)
    rankings = rank_all(corpus, args.alpha)
    for (d, f), ranking in rankings.items():
        cs = select_counters(ranking, oracles[d], k[d])
        atomic_write_text(args.out / "rankings" / f"{d}_{f}.csv", ranking_csv(ranking, cs))
        atomic_write_text(args.out / "counter_sets" / f"{d}_{f}.json", _dump_json(cs.to_dict()))
        _say(args, f"{d} {f} Hz: {', '.join(cs.events)}")
    return 0


def load_counter_sets(path) -> dict:
    path = Path(path)
    files = sorted(path.glob("*.json"))
    if not files:
        raise DataError(f"no counter-set files in {path}")
    out = {}
    for p in files:
        try:
            cs = CounterSet.from_dict(json.loads(p.read_text()))
        except json.JSONDecodeError as exc:
            raise DataError(f"{p}: {exc}") from None
        out[(cs.subsystem, cs.frequency)] = cs
    return out


def cmd_train(args) -> int:
    splits = args.train_frac
    if args.manifest is not None:
        m = load_manifest(args.manifest)
        corpus = {}
        for key, paths in sorted(m["traces"].items()):
            corpus[key] = corpus_io.merged([load_trace(p) for p in paths])
        counters = m["counters"]
        if not isinstance(counters, dict):
            counters = load_counter_sets(counters)
        splits = splits or m["splits"]
    else:
        corpus = corpus_io.load_corpus(_require_root(args, "--root or --manifest"), args.jobs)
        counters = load_counter_sets(args.counters or args.out / "counter_sets")
    splits = splits or DEFAULT_SPLITS
    prov = {"splits": {d: splits[d] for d in SUBSYSTEMS}}
    if args.stamp:
        prov["created"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    lut = train_lut(corpus, counters, splits, platform=args.platform, provenance=prov)
    path = args.out / args.model
    atomic_write_text(path, dumps_lut(lut))
    _say(args, f"wrote {path} ({len(lut)} models)")
    return 0


def _samples_csv(est) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["timestamp_s", "duration_s", "measured_w", "estimate_w", "cpu_w", "gpu_w"])
    for row in zip(est.timestamps, est.durations, est.measured, est.total, est.cpu, est.gpu):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def cmd_eval(args) -> int:
    lut = load_lut(args.model)
    root = _require_root(args)
    if args.subsystem is not None:
        d = args.subsystem
        corpus = corpus_io.load_corpus(root, args.jobs, subsystems=[d])
        frac = (args.train_frac or DEFAULT_SPLITS)[d]
        held = {f: split(combine_workloads(ts), frac)[1] for (_, f), ts in corpus.items()}
        rep = evaluate_subsystem(lut, d, held, args.floor)
        stem = f"report_{d}"
    else:
        rep, samples = evaluate_system(lut, corpus_io.load_pairs(root, args.jobs), args.floor,
                                       keep_samples=True)
        stem = "report"
        if args.samples:
            for (fc, fg), est in sorted(samples.items()):
                atomic_write_text(args.out / "samples" / f"{fc}_{fg}.csv", _samples_csv(est))
    text_csv, text = render_report(rep)
    atomic_write_text(args.out / f"{stem}.csv", text_csv)
    atomic_write_text(args.out / f"{stem}.txt", text)
    _say(args, text.rstrip("\n"))
    return 0


class RowParser:
    """Turns trace-convention CSV rows (counts per interval) into model inputs."""

    def __init__(self, header, predictor: SystemPredictor, f_cpu: int):
        self.f_cpu = f_cpu
        self.pred = predictor
        idx = {name: j for j, name in enumerate(header)}
        if "duration_s" not in idx:
            raise DataError("input header lacks duration_s")
        self.dur = idx["duration_s"]
        C = predictor.n_cores
        need = [f"cpu.c{i}.{CYCLES}" for i in range(C)]
        need += [CounterId(CPU, i, ev).name for i in range(C) for ev in predictor.cpu_model.counters]
        need += [CounterId(GPU, None, ev).name for ev in predictor.gpu_model.counters]
        missing = [n for n in need if n not in idx]
        if missing:
            raise DataError("input lacks columns: " + ", ".join(missing))
        self.cols = {n: idx[n] for n in need}

    def parse(self, rec):
        dur = float(rec[self.dur])
        if not dur > 0:
            raise ValueError(f"duration must be positive, got {dur}")
        vals = {n: float(rec[j]) for n, j in self.cols.items()}
        if any(v < 0 or not np.isfinite(v) for v in vals.values()):
            raise ValueError("counts must be finite and nonnegative")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            gating = {i: gating_metric(vals[f"cpu.c{i}.{CYCLES}"], dur, self.f_cpu)
                      for i in range(self.pred.n_cores)}
        cpu_rates, gpu_rates = {}, {}
        for n, v in vals.items():
            if n.endswith("." + CYCLES):
                continue
            cid = CounterId.parse(n)
            (cpu_rates if cid.subsystem == CPU else gpu_rates)[cid] = v / dur
        return gating, cpu_rates, gpu_rates


def _bench_rows(pred: SystemPredictor, seed: int, n: int = 4096):
    rng = np.random.default_rng(seed)
    C, J = pred.n_cores, pred.n_events
    rows = np.empty((n, pred.width))
    rows[:, :C] = rng.uniform(0, 1, (n, C))
    rows[:, C:] = rng.uniform(0, 1e9, (n, pred.width - C))
    return rows


def cmd_predict(args) -> int:
    lut = load_lut(args.model)
    pred = SystemPredictor.from_lut(lut, args.f_cpu, args.f_gpu)
    src = sys.stdin if args.input == "-" else open(args.input, newline="")
    dst = sys.stdout if args.output == "-" else io.StringIO()
    bad = 0
    try:
        if args.bench:
            if args.repetitions < 1:
                raise DataError("--repetitions must be >= 1")
            rows = _bench_rows(pred, args.seed)
            stats = measure_latency(lut, args.f_cpu, args.f_gpu, rows, args.repetitions)
            alloc = hot_path_allocations(lut, args.f_cpu, args.f_gpu, rows)
            dst.write("mean_ns,p99_ns,evaluations,hot_path_allocations\n")
            dst.write(f"{stats.mean_ns:.1f},{stats.p99_ns:.1f},{stats.repetitions},"
                      f"{alloc['hot_path_alloc']}\n")
        else:
            reader = csv.reader(src)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError("empty input") from None
            rp = RowParser(header, pred, args.f_cpu)
            w = csv.writer(dst, lineterminator="\n")
            w.writerow(["row", "total_w", "cpu_w", "gpu_w"])
            for i, rec in enumerate(reader, start=1):
                if not rec:
                    continue
                try:
                    if len(rec) != len(header):
                        raise ValueError(f"expected {len(header)} fields, got {len(rec)}")
                    gating, cr, gr = rp.parse(rec)
                except (ValueError, IndexError) as exc:
                    print(f"row {i}: {exc}; skipped", file=sys.stderr)
                    bad += 1
                    continue
                p = predict_system(lut, args.f_cpu, args.f_gpu, (gating, cr), gr)
                w.writerow([i, repr(p.total), repr(p.cpu), repr(p.gpu)])
                if args.output == "-":
                    dst.flush()
    finally:
        if src is not sys.stdin:
            src.close()
    if args.output != "-":
        atomic_write_text(args.output, dst.getvalue())
    return 2 if bad else 0


def cmd_synth(args) -> int:
    spec = load_spec(args.spec)
    if args.zero_noise:
        spec = spec.with_overrides(noise_sigma=0.0, quantization_w=0.0)
    synth = generate(spec, args.seed)
    out = args.out
    segs = [s for key in sorted(synth.segments) for s in synth.segments[key]]
    corpus_io.write_corpus(out / "corpus", segs)
    corpus_io.write_pairs(out / "validation", synth.validation)
    atomic_write_text(out / "ground_truth.json", dumps_lut(synth.ground_truth.lut))
    atomic_write_text(out / "oracle.json", _dump_json(spec.oracle_dict()))
    atomic_write_text(out / "spec.json", _dump_json(dict(spec.raw)))
    _say(args, f"wrote {len(synth.segments)} (subsystem, frequency) entries and "
               f"{len(synth.validation)} validation pairs to {out}")
    return 0


def sweep_csv(result) -> str:
    freqs = sorted(result.per_frequency)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "energy_err_pct"] + [f"err_{f}" for f in freqs])
    for i, k in enumerate(result.ks):
        w.writerow([k, repr(result.curve[i])] + [repr(result.per_frequency[f][i]) for f in freqs])
    return buf.getvalue()


def cmd_sweep(args) -> int:
    d = args.subsystem
    if args.k_max < 1:
        raise DataError("--k-max must be >= 1")
    corpus = corpus_io.load_corpus(_require_root(args), args.jobs, subsystems=[d])
    splits = args.train_frac or DEFAULT_SPLITS
    rankings = {f: r for (_, f), r in rank_all(corpus, args.alpha).items()}
    train, val = split_corpus(corpus, splits)
    train = {f: t for (_, f), t in train.items()}
    val = {f: v for (_, f), v in val.items()}
    res = sweep_predictor_count(rankings, _oracles(args)[d], args.k_max, train, val)
    atomic_write_text(args.out / f"sweep_{d}.csv", sweep_csv(res))
    _say(args, f"best k for {d}: {res.argmin}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    logging.captureWarnings(True)
    if args.quiet:
        warnings.simplefilter("ignore")
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
