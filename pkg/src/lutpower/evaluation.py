"""Accuracy and overhead metrics: MAPE, energy error, predictor sweep, latency."""

from __future__ import annotations

import csv
import io
import math
import time
import tracemalloc
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .characterization import CompatibilityOracle, Ranking, select_counters
from .errors import DataError
from .power_models import (ModelLut, SystemPredictor, energy, lut_lookup, predict_cpu_trace,
                           predict_gpu_trace, predict_trace)
from .trace import CPU, GPU, MergedTrace
from .training import train_model

DEFAULT_FLOOR_W = 0.2


@dataclass(frozen=True)
class ApeStats:
    mape: float
    std: float
    n: int
    excluded: int


def ape_stats(est, meas, floor: float = DEFAULT_FLOOR_W) -> ApeStats:
    """Absolute percentage error over samples with ``meas >= floor``.

    ``std`` is the per-sample (population) standard deviation of the
    absolute percentage errors.
    """
    est = np.asarray(est, dtype=float)
    meas = np.asarray(meas, dtype=float)
    if est.shape != meas.shape:
        raise DataError("estimate and measurement lengths differ")
    keep = meas >= floor
    if floor <= 0:
        keep &= meas > 0
    n = int(keep.sum())
    if n == 0:
        raise DataError(f"every sample is below the {floor} W floor")
    ape = np.abs(est[keep] - meas[keep]) / meas[keep] * 100.0
    return ApeStats(float(ape.mean()), float(ape.std()), n, int(est.shape[0] - n))


def mape(est, meas, floor: float = DEFAULT_FLOOR_W) -> float:
    return ape_stats(est, meas, floor).mape


def energy_error(est, meas, durations) -> float:
    """``|E_est - E_meas| / E_meas`` in percent, both integrated by zero-order hold."""
    e_meas = energy(meas, durations)
    if e_meas == 0:
        raise DataError("measured energy is zero")
    return abs(energy(est, durations) - e_meas) / abs(e_meas) * 100.0


REPORT_COLUMNS = ("f_cpu_hz", "f_gpu_hz", "n", "power_mape_pct", "power_err_std_pct",
                  "energy_true_j", "energy_est_j", "energy_err_pct", "excluded")


@dataclass(frozen=True)
class EvaluationRecord:
    f_cpu_hz: int | None
    f_gpu_hz: int | None
    n: int
    power_mape_pct: float
    power_err_std_pct: float
    energy_true_j: float
    energy_est_j: float
    energy_err_pct: float
    excluded: int


@dataclass(frozen=True)
class EvaluationReport:
    records: tuple

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    def _col(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def mean_energy_err(self) -> float:
        return float(self._col("energy_err_pct").mean())

    @property
    def max_energy_err(self) -> float:
        return float(self._col("energy_err_pct").max())

    @property
    def mean_power_mape(self) -> float:
        return float(self._col("power_mape_pct").mean())

    @property
    def max_power_mape(self) -> float:
        return float(self._col("power_mape_pct").max())

    @property
    def excluded(self) -> int:
        return sum(r.excluded for r in self.records)

    def aggregates(self) -> dict:
        return {"mean_energy_err_pct": self.mean_energy_err,
                "max_energy_err_pct": self.max_energy_err,
                "mean_power_mape_pct": self.mean_power_mape,
                "max_power_mape_pct": self.max_power_mape,
                "excluded": self.excluded}


def _record(f_cpu, f_gpu, est, meas, durations, floor) -> EvaluationRecord:
    st = ape_stats(est, meas, floor)
    e_true = energy(meas, durations)
    e_est = energy(est, durations)
    if e_true == 0:
        raise DataError("measured energy is zero")
    return EvaluationRecord(f_cpu, f_gpu, int(len(meas)), st.mape, st.std, e_true, e_est,
                            abs(e_est - e_true) / abs(e_true) * 100.0, st.excluded)


@dataclass(frozen=True)
class PairEstimate:
    """Per-sample data behind one system-level record."""

    timestamps: np.ndarray
    durations: np.ndarray
    measured: np.ndarray
    cpu: np.ndarray
    gpu: np.ndarray

    @property
    def total(self):
        return self.cpu + self.gpu


def estimate_pair(lut: ModelLut, cpu: MergedTrace, gpu: MergedTrace) -> PairEstimate:
    """Run the combined model over concurrently profiled, index-aligned traces.

    Measured system power is the sum of both rails; durations come from
    the CPU trace.
    """
    if cpu.subsystem != CPU or gpu.subsystem != GPU:
        raise DataError("estimate_pair needs a CPU trace and a GPU trace")
    n = min(len(cpu), len(gpu))
    c = predict_cpu_trace(lut_lookup(lut, CPU, cpu.frequency), cpu)[:n]
    g = predict_gpu_trace(lut_lookup(lut, GPU, gpu.frequency), gpu)[:n]
    meas = cpu.power[:n] + gpu.power[:n]
    dur = np.asarray(cpu.duration[:n])
    ts = np.concatenate([[0.0], np.cumsum(dur)[:-1]])
    return PairEstimate(ts, dur, meas, c, g)


def evaluate_system(lut: ModelLut, pairs: Mapping, floor: float = DEFAULT_FLOOR_W,
                    keep_samples: bool = False):
    """One record per ``(f_cpu, f_gpu)``; ``pairs`` maps it to ``(cpu, gpu)`` traces."""
    if not pairs:
        raise DataError("no frequency pairs to evaluate")
    records, samples = [], {}
    for (fc, fg) in sorted(pairs):
        cpu, gpu = pairs[(fc, fg)]
        est = estimate_pair(lut, cpu, gpu)
        records.append(_record(int(fc), int(fg), est.total, est.measured, est.durations, floor))
        samples[(fc, fg)] = est
    report = EvaluationReport(tuple(records))
    return (report, samples) if keep_samples else report


def evaluate_subsystem(lut: ModelLut, subsystem: str, traces: Mapping,
                       floor: float = DEFAULT_FLOOR_W) -> EvaluationReport:
    """Per-frequency records for one subsystem's models on its own traces."""
    records = []
    for f in sorted(traces):
        t = traces[f]
        est = predict_trace(lut_lookup(lut, subsystem, f), t)
        fc, fg = (int(f), None) if subsystem == CPU else (None, int(f))
        records.append(_record(fc, fg, est, t.power, t.duration, floor))
    return EvaluationReport(tuple(records))


@dataclass(frozen=True)
class SweepResult:
    ks: tuple
    curve: tuple
    per_frequency: Mapping = field(default_factory=dict)
    argmin: int = 0

    def rows(self):
        return list(zip(self.ks, self.curve))


def sweep_predictor_count(rankings, oracle: CompatibilityOracle, k_max: int,
                          train, validation) -> SweepResult:
    """Energy error as a function of the counter budget ``k = 1..k_max``.

    Single-frequency arguments or mappings keyed by frequency are accepted;
    with several frequencies the curve is the mean over them. ``argmin``
    is the smallest ``k`` attaining the minimum.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if isinstance(rankings, Ranking):
        f = rankings.frequency
        rankings, train, validation = {f: rankings}, {f: train}, {f: validation}
    per_freq = {}
    for f in sorted(rankings):
        errs, last_set, last_err = [], None, None
        for k in range(1, k_max + 1):
            cs = select_counters(rankings[f], oracle, k)
            if cs.counters != last_set:
                model = train_model(train[f], cs)
                v = validation[f]
                last_err = energy_error(predict_trace(model, v), v.power, v.duration)
                last_set = cs.counters
            errs.append(last_err)
        per_freq[f] = tuple(errs)
    curve = tuple(float(np.mean([per_freq[f][i] for f in per_freq])) for i in range(k_max))
    ks = tuple(range(1, k_max + 1))
    best = ks[int(np.argmin(curve))]
    return SweepResult(ks, curve, per_freq, best)


@dataclass(frozen=True)
class LatencyStats:
    mean_ns: float
    p99_ns: float
    repetitions: int
    batch: int


def measure_latency(lut: ModelLut, f_cpu: int, f_gpu: int, rows, repetitions: int = 1_000_000,
                    batch: int = 1000, warmup: int = 20) -> LatencyStats:
    """Per-evaluation wall time of the combined predictor.

    Rows are preformatted flat vectors (see :class:`SystemPredictor`).
    Each timing sample is one batch of ``batch`` evaluations timed with
    the monotonic clock and divided by ``batch``; ``p99_ns`` is the 99th
    percentile of those batch means.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    pred = SystemPredictor.from_lut(lut, f_cpu, f_gpu)
    rows = np.ascontiguousarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != pred.width or rows.shape[0] == 0:
        raise DataError(f"rows must be a non-empty n x {pred.width} matrix")
    sink = np.empty(batch)
    cw, gw, C, J = pred.cpu_weights, pred.gpu_weights, pred.n_cores, pred.n_events
    kernel = _kernels.bench_batch
    r = 0
    for _ in range(warmup):
        r = kernel(cw, gw, C, J, rows, r, batch, sink)
    n_batches = -(-repetitions // batch)
    times = np.empty(n_batches)
    clock = time.perf_counter_ns
    for b in range(n_batches):
        t0 = clock()
        r = kernel(cw, gw, C, J, rows, r, batch, sink)
        times[b] = clock() - t0
    per_eval = times / batch
    return LatencyStats(float(per_eval.mean()), float(np.percentile(per_eval, 99)),
                        n_batches * batch, batch)


def hot_path_allocations(lut: ModelLut, f_cpu: int, f_gpu: int, rows,
                         evaluations: int = 100_000) -> dict:
    """Heap activity of the compiled predictor loop.

    The kernel is called for 1 and for ``evaluations`` rows. Each call pays
    a fixed cost for wrapping its array arguments (``boundary_alloc``
    runtime allocations); anything the loop itself allocates grows with the
    row count and shows up in the difference between the two calls:
    ``hot_path_alloc`` for native allocations (numba runtime statistics)
    and ``py_bytes`` for Python-heap bytes traced to the call site
    (tracemalloc). An allocation-free loop has both at zero.
    """
    from numba.core.runtime import _nrt_python, rtsys

    if not _nrt_python.memsys_stats_enabled():
        _nrt_python.memsys_enable_stats()
    pred = SystemPredictor.from_lut(lut, f_cpu, f_gpu)
    rows = np.ascontiguousarray(rows, dtype=float)
    sink = np.empty(1000)
    args = (pred.cpu_weights, pred.gpu_weights, pred.n_cores, pred.n_events, rows)
    _kernels.bench_batch(*args, 0, 10, sink)
    # keep allocations made under the kernel call, drop tracemalloc's own
    here = [tracemalloc.Filter(True, __file__, all_frames=True),
            tracemalloc.Filter(False, tracemalloc.__file__, all_frames=True)]

    def measure(count):
        tracemalloc.start(64)
        try:
            snap0 = tracemalloc.take_snapshot()
            before = rtsys.get_allocation_stats()
            _kernels.bench_batch(*args, 0, count, sink)
            after = rtsys.get_allocation_stats()
            snap1 = tracemalloc.take_snapshot()
        finally:
            tracemalloc.stop()
        native = after.alloc - before.alloc + after.mi_alloc - before.mi_alloc
        diff = snap1.filter_traces(here).compare_to(snap0.filter_traces(here), "filename")
        return native, sum(d.size_diff for d in diff)

    measure(1)  # first pass pays one-time lazy initialization
    short, py_short = measure(1)
    long, py_long = measure(evaluations)
    return {"boundary_alloc": short,
            "hot_path_alloc": long - short,
            "py_bytes": py_long - py_short,
            "evaluations": evaluations}


def _fmt_freq(f):
    return "" if f is None else str(int(f))


def report_csv(report: EvaluationReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in report.records:
        w.writerow([_fmt_freq(r.f_cpu_hz), _fmt_freq(r.f_gpu_hz), r.n, repr(r.power_mape_pct),
                    repr(r.power_err_std_pct), repr(r.energy_true_j), repr(r.energy_est_j),
                    repr(r.energy_err_pct), r.excluded])
    return buf.getvalue()


def report_from_csv(text: str) -> EvaluationReport:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
        raise DataError("report CSV has an unexpected header")
    recs = []
    for row in reader:
        recs.append(EvaluationRecord(
            int(row["f_cpu_hz"]) if row["f_cpu_hz"] else None,
            int(row["f_gpu_hz"]) if row["f_gpu_hz"] else None,
            int(row["n"]), float(row["power_mape_pct"]), float(row["power_err_std_pct"]),
            float(row["energy_true_j"]), float(row["energy_est_j"]),
            float(row["energy_err_pct"]), int(row["excluded"])))
    return EvaluationReport(tuple(recs))


def _mhz(f):
    mhz = f / 1e6
    return f"{mhz:.0f}" if abs(mhz - round(mhz)) < 1e-9 else f"{mhz:g}"


def _align(rows: Sequence[Sequence[str]], right_from: int = 1) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    out = []
    for r in rows:
        cells = [c.ljust(w) if i < right_from else c.rjust(w)
                 for i, (c, w) in enumerate(zip(r, widths))]
        out.append("  ".join(cells).rstrip())
    return "\n".join(out)


def grid_table(report: EvaluationReport) -> str:
    """Energy error laid out by CPU frequency group, GPU frequency within."""
    pairs = {(r.f_cpu_hz, r.f_gpu_hz): r for r in report.records
             if r.f_cpu_hz is not None and r.f_gpu_hz is not None}
    if not pairs:
        return ""
    cpus = sorted({fc for fc, _ in pairs})
    gpus = sorted({fg for _, fg in pairs})
    head_c, head_g, errs = ["CPU [MHz]"], ["GPU [MHz]"], ["Error"]
    for fc in cpus:
        for i, fg in enumerate(gpus):
            head_c.append(("| " + _mhz(fc)) if i == 0 else "")
            head_g.append(_mhz(fg))
            r = pairs.get((fc, fg))
            errs.append("-" if r is None else f"{r.energy_err_pct:.2f}%")
    return _align([head_c, head_g, errs])


def detail_table(report: EvaluationReport) -> str:
    rows = [["f_cpu [MHz]", "f_gpu [MHz]", "n", "MAPE %", "APE std %", "E true [J]",
             "E est [J]", "E err %", "excluded"]]
    for r in report.records:
        rows.append(["-" if r.f_cpu_hz is None else _mhz(r.f_cpu_hz),
                     "-" if r.f_gpu_hz is None else _mhz(r.f_gpu_hz), str(r.n),
                     f"{r.power_mape_pct:.3f}", f"{r.power_err_std_pct:.3f}",
                     f"{r.energy_true_j:.3f}", f"{r.energy_est_j:.3f}",
                     f"{r.energy_err_pct:.3f}", str(r.excluded)])
    return _align(rows, right_from=2)


def report_text(report: EvaluationReport) -> str:
    if not report.records:
        raise DataError("empty report")
    parts = []
    grid = grid_table(report)
    if grid:
        parts += ["Energy estimation error", grid, ""]
    parts += [detail_table(report), ""]
    agg = report.aggregates()
    parts.append(f"energy error: mean {agg['mean_energy_err_pct']:.3f}%, "
                 f"max {agg['max_energy_err_pct']:.3f}%")
    parts.append(f"power MAPE:   mean {agg['mean_power_mape_pct']:.3f}%, "
                 f"max {agg['max_power_mape_pct']:.3f}%  (excluded samples: {agg['excluded']})")
    return "\n".join(parts) + "\n"


def report(rep: EvaluationReport) -> tuple[str, str]:
    """``(csv, text)`` renderings of an evaluation report."""
    if not rep.records:
        raise DataError("empty report")
    return report_csv(rep), report_text(rep)
