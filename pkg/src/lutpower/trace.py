"""Counter/power traces: file format, validation, normalization, pass merging.

A trace file is a CSV with a ``timestamp_s,duration_s,power_w`` prefix and
one column per counter (``cpu.c<core>.<event>``, ``gpu.<event>``, plus
optional ``cpu.c<core>.cycles``), next to a ``<basename>.meta.json``
sidecar holding the segment metadata.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, DuplicateEventError, TraceFormatError

CPU = "cpu"
GPU = "gpu"
SUBSYSTEMS = (CPU, GPU)
CYCLES = "cycles"
FIXED_COLUMNS = ("timestamp_s", "duration_s", "power_w")
META_FIELDS = ("subsystem", "frequency_hz", "workload", "pass_id",
               "nominal_period_s", "core_count")

_CPU_COLUMN = re.compile(r"^cpu\.c(\d+)\.(.+)$")


class GatingClampWarning(UserWarning):
    """Cycle counts exceeded ``frequency * duration`` and were clamped."""


class TruncationWarning(UserWarning):
    """Passes of unequal length were truncated to the shortest."""


class PowerDivergenceWarning(UserWarning):
    """Replayed passes disagree on mean power by more than 10%."""


@dataclass(frozen=True)
class CounterId:
    """One performance event, on one core for CPU counters.

    CPU ids without a core stand for an event programmed identically on
    every core; rankings and counter sets use that form.
    """

    subsystem: str
    core: int | None
    event: str

    def __post_init__(self):
        if self.subsystem not in SUBSYSTEMS:
            raise ValueError(f"unknown subsystem {self.subsystem!r}")
        if not self.event:
            raise ValueError("empty event name")
        if self.subsystem == GPU and self.core is not None:
            raise ValueError("GPU counters carry no core index")
        if self.core is not None and self.core < 0:
            raise ValueError(f"negative core index {self.core}")

    @property
    def name(self) -> str:
        if self.subsystem == CPU and self.core is not None:
            return f"cpu.c{self.core}.{self.event}"
        return f"{self.subsystem}.{self.event}"

    def __str__(self):
        return self.name

    def __lt__(self, other):
        if not isinstance(other, CounterId):
            return NotImplemented
        return self.name < other.name

    @classmethod
    def parse(cls, name: str) -> "CounterId":
        m = _CPU_COLUMN.match(name)
        if m:
            return cls(CPU, int(m.group(1)), m.group(2))
        sub, _, event = name.partition(".")
        if sub not in SUBSYSTEMS or not event:
            raise ValueError(f"bad counter name {name!r}")
        return cls(sub, None, event)

    def on_core(self, core: int) -> "CounterId":
        return CounterId(self.subsystem, core, self.event)

    def shared(self) -> "CounterId":
        """The core-less form of this id."""
        return CounterId(self.subsystem, None, self.event)


@dataclass(frozen=True)
class Sample:
    timestamp: float
    duration: float
    power: float
    counts: Mapping[CounterId, float]
    cycle_counts: Mapping[int, float] | None = None


def _frozen(a, dtype=float, ndim=1):
    arr = np.array(a, dtype=dtype, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"expected {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _first_bad(mask) -> int | None:
    idx = np.flatnonzero(mask)
    return int(idx[0]) if idx.size else None


@dataclass(frozen=True, eq=False)
class TraceSegment:
    """Samples for one (subsystem, frequency, workload, pass).

    Columnar storage: ``counts`` is ``n x len(counters)``, ``cycles`` is
    ``n x core_count`` (CPU only, optional).
    """

    subsystem: str
    frequency: int
    workload: str
    pass_id: int
    nominal_period: float
    core_count: int
    counters: tuple
    timestamps: np.ndarray
    durations: np.ndarray
    power: np.ndarray
    counts: np.ndarray
    cycles: np.ndarray | None = None
    dvfs_states: tuple | None = None
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        setattr_ = object.__setattr__
        setattr_(self, "counters", tuple(self.counters))
        setattr_(self, "timestamps", _frozen(self.timestamps))
        setattr_(self, "durations", _frozen(self.durations))
        setattr_(self, "power", _frozen(self.power))
        n = self.timestamps.shape[0]
        counts = np.asarray(self.counts, dtype=float)
        if counts.size == 0:
            counts = counts.reshape(n, len(self.counters))
        setattr_(self, "counts", _frozen(counts, ndim=2))
        if self.cycles is not None:
            setattr_(self, "cycles", _frozen(self.cycles, ndim=2))
        if self.dvfs_states is not None:
            setattr_(self, "dvfs_states", tuple(int(f) for f in self.dvfs_states))
        self._validate()

    def _err(self, msg, row=None):
        return TraceFormatError(msg, path=self.source, row=row)

    def _validate(self):
        if self.subsystem not in SUBSYSTEMS:
            raise self._err(f"unknown subsystem {self.subsystem!r}")
        if self.frequency <= 0:
            raise self._err(f"frequency must be positive, got {self.frequency}")
        if self.dvfs_states is not None and self.frequency not in self.dvfs_states:
            raise self._err(f"frequency {self.frequency} Hz is not a declared DVFS state")
        if self.nominal_period <= 0:
            raise self._err("nominal period must be positive")
        if self.core_count < 1:
            raise self._err("core_count must be >= 1")
        if len(set(self.counters)) != len(self.counters):
            raise self._err("duplicate counter columns")
        for c in self.counters:
            if c.subsystem != self.subsystem:
                raise self._err(f"counter {c} does not belong to subsystem {self.subsystem}")
            if self.subsystem == CPU:
                if c.core is None:
                    raise self._err(f"CPU counter {c} lacks a core index")
                if c.core >= self.core_count:
                    raise self._err(f"counter {c} exceeds core_count {self.core_count}")
        n = self.timestamps.shape[0]
        if self.durations.shape != (n,) or self.power.shape != (n,):
            raise self._err("column length mismatch")
        if self.counts.shape != (n, len(self.counters)):
            raise self._err("count matrix shape does not match counters")
        if self.cycles is not None:
            if self.subsystem != CPU:
                raise self._err("cycle counts only apply to CPU traces")
            if self.cycles.shape != (n, self.core_count):
                raise self._err("cycle matrix shape does not match core_count")
        checks = [
            (~np.isfinite(self.timestamps), "non-finite timestamp"),
            (~np.isfinite(self.durations), "non-finite duration"),
            (~np.isfinite(self.power), "non-finite power"),
            (~(self.durations > 0), "duration must be > 0"),
            (self.power < 0, "negative power"),
        ]
        for mask, msg in checks:
            bad = _first_bad(mask)
            if bad is not None:
                raise self._err(msg, row=bad + 1)
        if n > 1:
            bad = _first_bad(~(np.diff(self.timestamps) > 0))
            if bad is not None:
                raise self._err("timestamps not strictly increasing", row=bad + 2)
        for mat, what in ((self.counts, "count"), (self.cycles, "cycle count")):
            if mat is None or mat.size == 0:
                continue
            bad_rows = ~np.isfinite(mat).all(axis=1) | (mat < 0).any(axis=1)
            bad = _first_bad(bad_rows)
            if bad is not None:
                raise self._err(f"negative or non-finite {what}", row=bad + 1)

    def __len__(self):
        return self.timestamps.shape[0]

    def __eq__(self, other):
        if not isinstance(other, TraceSegment):
            return NotImplemented
        scalars = ("subsystem", "frequency", "workload", "pass_id",
                   "nominal_period", "core_count", "counters")
        if any(getattr(self, a) != getattr(other, a) for a in scalars):
            return False
        if (self.cycles is None) != (other.cycles is None):
            return False
        arrays = ["timestamps", "durations", "power", "counts"]
        if self.cycles is not None:
            arrays.append("cycles")
        return all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)

    __hash__ = None

    @property
    def samples(self) -> list[Sample]:
        out = []
        for i in range(len(self)):
            counts = dict(zip(self.counters, self.counts[i].tolist()))
            cyc = None
            if self.cycles is not None:
                cyc = dict(enumerate(self.cycles[i].tolist()))
            out.append(Sample(float(self.timestamps[i]), float(self.durations[i]),
                              float(self.power[i]), counts, cyc))
        return out

    @classmethod
    def from_samples(cls, samples: Sequence[Sample], **meta) -> "TraceSegment":
        if not samples:
            raise DataError("a trace segment needs at least one sample")
        keys = list(samples[0].counts)
        keyset = set(keys)
        with_cycles = samples[0].cycle_counts is not None
        core_count = meta["core_count"]
        for i, s in enumerate(samples):
            if set(s.counts) != keyset:
                raise TraceFormatError("counter key set differs from first sample", row=i + 1)
            if (s.cycle_counts is not None) != with_cycles:
                raise TraceFormatError("cycle counts present on some samples only", row=i + 1)
        counts = np.array([[s.counts[k] for k in keys] for s in samples], dtype=float)
        cycles = None
        if with_cycles:
            cycles = np.array([[s.cycle_counts[c] for c in range(core_count)]
                               for s in samples], dtype=float)
        return cls(counters=tuple(keys),
                   timestamps=[s.timestamp for s in samples],
                   durations=[s.duration for s in samples],
                   power=[s.power for s in samples],
                   counts=counts.reshape(len(samples), len(keys)),
                   cycles=cycles, **meta)

    def meta(self) -> dict:
        d = {
            "subsystem": self.subsystem,
            "frequency_hz": int(self.frequency),
            "workload": self.workload,
            "pass_id": int(self.pass_id),
            "nominal_period_s": float(self.nominal_period),
            "core_count": int(self.core_count),
        }
        if self.dvfs_states is not None:
            d["dvfs_states_hz"] = list(self.dvfs_states)
        return d


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name[: -len(path.suffix)] + ".meta.json") if path.suffix \
        else path.with_name(path.name + ".meta.json")


def _fmt(x: float) -> str:
    return repr(float(x))


def trace_header(seg: TraceSegment) -> list[str]:
    cols = list(FIXED_COLUMNS) + [c.name for c in seg.counters]
    if seg.cycles is not None:
        cols += [f"cpu.c{i}.{CYCLES}" for i in range(seg.core_count)]
    return cols


def dumps_trace(seg: TraceSegment) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trace_header(seg))
    parts = [seg.timestamps[:, None], seg.durations[:, None], seg.power[:, None], seg.counts]
    if seg.cycles is not None:
        parts.append(seg.cycles)
    table = np.hstack(parts)
    for row in table.tolist():
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_trace(seg: TraceSegment, path) -> Path:
    """Write ``seg`` as CSV plus its ``.meta.json`` sidecar."""
    path = Path(path)
    atomic_write_text(path, dumps_trace(seg))
    atomic_write_text(meta_path(path), json.dumps(seg.meta(), indent=2, sort_keys=True) + "\n")
    return path


def _load_meta(path: Path) -> dict:
    mp = meta_path(path)
    try:
        meta = json.loads(mp.read_text())
    except FileNotFoundError:
        raise TraceFormatError("missing metadata sidecar " + mp.name, path=path) from None
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"invalid metadata JSON: {exc}", path=mp) from None
    if not isinstance(meta, dict):
        raise TraceFormatError("metadata must be a JSON object", path=mp)
    missing = [k for k in META_FIELDS if k not in meta]
    if missing:
        raise TraceFormatError("metadata lacks " + ", ".join(missing), path=mp)
    return meta


def _as_int(value, what, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
        raise TraceFormatError(f"{what} must be an integer, got {value!r}", path=path)
    return int(value)


def load_trace(path, dvfs_states: Iterable[int] | None = None) -> TraceSegment:
    """Load and validate a trace CSV and its metadata sidecar."""
    path = Path(path)
    meta = _load_meta(path)
    mp = meta_path(path)
    subsystem = meta["subsystem"]
    if subsystem not in SUBSYSTEMS:
        raise TraceFormatError(f"unknown subsystem {subsystem!r}", path=mp)
    core_count = _as_int(meta["core_count"], "core_count", mp)
    frequency = _as_int(meta["frequency_hz"], "frequency_hz", mp)
    pass_id = _as_int(meta["pass_id"], "pass_id", mp)
    if dvfs_states is None and "dvfs_states_hz" in meta:
        dvfs_states = meta["dvfs_states_hz"]

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceFormatError("empty file", path=path) from None
        if tuple(header[:3]) != FIXED_COLUMNS:
            raise TraceFormatError("malformed header: expected prefix "
                                   + ",".join(FIXED_COLUMNS), path=path, row=0)
        counters, cycle_cols, kinds = [], {}, []
        for j, name in enumerate(header[3:], start=3):
            m = _CPU_COLUMN.match(name)
            if m and m.group(2) == CYCLES:
                core = int(m.group(1))
                if core in cycle_cols:
                    raise TraceFormatError(f"duplicate column {name!r}", path=path, row=0)
                cycle_cols[core] = j
                kinds.append(("cyc", core))
                continue
            try:
                cid = CounterId.parse(name)
            except ValueError:
                raise TraceFormatError(f"malformed header column {name!r}", path=path, row=0) from None
            if cid.subsystem != subsystem:
                raise TraceFormatError(f"column {name!r} does not match metadata subsystem "
                                       f"{subsystem!r}", path=path, row=0)
            if cid.subsystem == CPU and cid.core >= core_count:
                raise TraceFormatError(f"column {name!r} exceeds metadata core_count "
                                       f"{core_count}", path=path, row=0)
            counters.append(cid)
            kinds.append(("cnt", cid))
        if cycle_cols:
            if subsystem != CPU:
                raise TraceFormatError("cycle columns in a non-CPU trace", path=path, row=0)
            if sorted(cycle_cols) != list(range(core_count)):
                raise TraceFormatError("cycle columns must cover every core", path=path, row=0)

        ncol = len(header)
        rows = []
        for i, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if len(rec) != ncol:
                raise TraceFormatError(f"expected {ncol} fields, got {len(rec)}", path=path, row=i)
            try:
                rows.append([float(v) for v in rec])
            except ValueError as exc:
                raise TraceFormatError(f"non-numeric field ({exc})", path=path, row=i) from None

    table = np.array(rows, dtype=float).reshape(len(rows), ncol)
    cnt_idx = [j for j, k in zip(range(3, ncol), kinds) if k[0] == "cnt"]
    cycles = None
    if cycle_cols:
        cycles = table[:, [cycle_cols[c] for c in range(core_count)]]
    try:
        return TraceSegment(
            subsystem=subsystem, frequency=frequency, workload=str(meta["workload"]),
            pass_id=pass_id, nominal_period=float(meta["nominal_period_s"]),
            core_count=core_count, counters=tuple(counters),
            timestamps=table[:, 0], durations=table[:, 1], power=table[:, 2],
            counts=table[:, cnt_idx], cycles=cycles, dvfs_states=dvfs_states,
            source=str(path))
    except TraceFormatError:
        raise
    except (ValueError, TypeError) as exc:
        raise TraceFormatError(str(exc), path=path) from None


def gating_metric(cycle_count: float, duration: float, frequency: float) -> float:
    """Fraction of the period the core was clocked (not power-gated)."""
    if duration <= 0 or frequency <= 0:
        raise ValueError("duration and frequency must be positive")
    g = cycle_count / (frequency * duration)
    if g > 1.0:
        warnings.warn(f"gating metric {g:.4f} clamped to 1", GatingClampWarning, stacklevel=2)
        return 1.0
    return max(g, 0.0)


def gating_metrics(cycles: np.ndarray, durations: np.ndarray, frequency: float):
    """Vectorized :func:`gating_metric`; returns ``(g, n_clamped)``."""
    g = np.asarray(cycles, dtype=float) / (frequency * np.asarray(durations, dtype=float)[:, None])
    clamped = int(np.count_nonzero(g > 1.0))
    return np.clip(g, 0.0, 1.0), clamped


@dataclass(frozen=True, eq=False)
class MergedTrace:
    """Normalized rows (events/second, gating in [0, 1], watts, seconds).

    ``power`` comes from the reference pass. ``counter_pass`` maps every
    counter to the pass that recorded it and ``pass_power`` keeps each
    pass's own power series, so events can be regressed against the power
    that was measured alongside them.
    """

    subsystem: str
    frequency: int
    workload: str
    core_count: int
    counters: tuple
    rates: np.ndarray
    power: np.ndarray
    duration: np.ndarray
    gating: np.ndarray | None = None
    counter_pass: Mapping = field(default_factory=dict)
    pass_power: Mapping = field(default_factory=dict)
    truncated: int = 0
    gating_clamped: int = 0

    def __post_init__(self):
        s = object.__setattr__
        s(self, "counters", tuple(self.counters))
        s(self, "power", _frozen(self.power))
        s(self, "duration", _frozen(self.duration))
        n = self.power.shape[0]
        rates = np.asarray(self.rates, dtype=float)
        if rates.size == 0:
            rates = rates.reshape(n, len(self.counters))
        s(self, "rates", _frozen(rates, ndim=2))
        if self.gating is not None:
            s(self, "gating", _frozen(self.gating, ndim=2))
            if self.gating.shape != (n, self.core_count):
                raise ValueError("gating shape does not match core_count")
            if ((self.gating < 0) | (self.gating > 1)).any():
                raise ValueError("gating values outside [0, 1]")
        if self.rates.shape != (n, len(self.counters)) or self.duration.shape != (n,):
            raise ValueError("row arrays have inconsistent lengths")
        pp = {int(k): _frozen(v) for k, v in sorted(self.pass_power.items())}
        if any(v.shape != (n,) for v in pp.values()):
            raise ValueError("pass power series length mismatch")
        s(self, "pass_power", pp)
        cp = dict(self.counter_pass)
        if set(cp) != set(self.counters) or not set(cp.values()) <= set(pp):
            raise ValueError("counter_pass must map every counter to a known pass")
        s(self, "counter_pass", cp)
        s(self, "_index", {c: j for j, c in enumerate(self.counters)})

    def __len__(self):
        return self.power.shape[0]

    def __eq__(self, other):
        if not isinstance(other, MergedTrace):
            return NotImplemented
        # truncated/gating_clamped are diagnostics, not data
        scalars = ("subsystem", "frequency", "workload", "core_count", "counters",
                   "counter_pass")
        if any(getattr(self, a) != getattr(other, a) for a in scalars):
            return False
        if (self.gating is None) != (other.gating is None):
            return False
        if self.gating is not None and not np.array_equal(self.gating, other.gating):
            return False
        if list(self.pass_power) != list(other.pass_power):
            return False
        return (np.array_equal(self.rates, other.rates)
                and np.array_equal(self.power, other.power)
                and np.array_equal(self.duration, other.duration)
                and all(np.array_equal(self.pass_power[k], other.pass_power[k])
                        for k in self.pass_power))

    __hash__ = None

    def index(self, counter: CounterId) -> int:
        return self._index[counter]

    def rate(self, counter: CounterId) -> np.ndarray:
        return self.rates[:, self._index[counter]]

    def power_for(self, counter: CounterId) -> np.ndarray:
        """Power series of the pass in which ``counter`` was recorded."""
        return self.pass_power[self.counter_pass[counter]]

    def row(self, i: int):
        """Row ``i`` as ``(gating by core, rates by counter)``."""
        gating = {} if self.gating is None else dict(enumerate(self.gating[i].tolist()))
        return gating, dict(zip(self.counters, self.rates[i].tolist()))

    def take(self, sl: slice) -> "MergedTrace":
        return MergedTrace(
            subsystem=self.subsystem, frequency=self.frequency, workload=self.workload,
            core_count=self.core_count, counters=self.counters, rates=self.rates[sl],
            power=self.power[sl], duration=self.duration[sl],
            gating=None if self.gating is None else self.gating[sl],
            counter_pass=self.counter_pass,
            pass_power={k: v[sl] for k, v in self.pass_power.items()},
            truncated=self.truncated, gating_clamped=self.gating_clamped)


def normalize(seg: TraceSegment) -> MergedTrace:
    """Convert counts to events/second and cycle counts to gating values."""
    if not (seg.durations > 0).all():
        raise DataError("non-positive sampling duration")
    rates = seg.counts / seg.durations[:, None]
    gating, clamped = None, 0
    if seg.cycles is not None:
        gating, clamped = gating_metrics(seg.cycles, seg.durations, seg.frequency)
        if clamped:
            warnings.warn(f"{clamped} gating values clamped to 1 in {seg.workload} "
                          f"pass {seg.pass_id}", GatingClampWarning, stacklevel=2)
    return MergedTrace(
        subsystem=seg.subsystem, frequency=seg.frequency, workload=seg.workload,
        core_count=seg.core_count, counters=seg.counters, rates=rates, power=seg.power,
        duration=seg.durations, gating=gating,
        counter_pass={c: seg.pass_id for c in seg.counters},
        pass_power={seg.pass_id: seg.power}, gating_clamped=clamped)


def merge_passes(segments: Sequence[TraceSegment]) -> MergedTrace:
    """Align replayed passes of one workload by sample index.

    Longer passes are truncated to the shortest. Row power, durations and
    gating come from the lowest ``pass_id``.
    """
    if not segments:
        raise DataError("no segments to merge")
    segs = sorted(segments, key=lambda s: s.pass_id)
    ref = segs[0]
    for s in segs[1:]:
        if (s.subsystem, s.frequency, s.workload) != (ref.subsystem, ref.frequency, ref.workload):
            raise DataError(
                f"cannot merge {s.subsystem}/{s.frequency}/{s.workload} with "
                f"{ref.subsystem}/{ref.frequency}/{ref.workload}")
        if s.core_count != ref.core_count:
            raise DataError("core_count differs between passes")
    if len({s.pass_id for s in segs}) != len(segs):
        raise DataError("duplicate pass_id")
    seen = {}
    for s in segs:
        for c in s.counters:
            if c in seen:
                raise DuplicateEventError(f"event {c} recorded in passes {seen[c]} and {s.pass_id}")
            seen[c] = s.pass_id

    n = min(len(s) for s in segs)
    dropped = sum(len(s) - n for s in segs)
    if dropped:
        warnings.warn(f"{dropped} samples dropped aligning passes of {ref.workload} "
                      f"at {ref.frequency} Hz", TruncationWarning, stacklevel=2)
    ref_mean = float(ref.power[:n].mean()) if n else 0.0
    for s in segs[1:]:
        m = float(s.power[:n].mean()) if n else 0.0
        if ref_mean > 0 and abs(m - ref_mean) > 0.1 * ref_mean:
            warnings.warn(f"pass {s.pass_id} mean power {m:.3f} W differs from reference "
                          f"{ref_mean:.3f} W by more than 10%", PowerDivergenceWarning,
                          stacklevel=2)

    normed = [normalize(s) for s in segs]
    order = sorted(seen)
    col = {}
    for s, m in zip(segs, normed):
        for j, c in enumerate(s.counters):
            col[c] = m.rates[:n, j]
    rates = np.column_stack([col[c] for c in order]) if order else np.empty((n, 0))
    gating_src = next((m for m in normed if m.gating is not None), None)
    return MergedTrace(
        subsystem=ref.subsystem, frequency=ref.frequency, workload=ref.workload,
        core_count=ref.core_count, counters=tuple(order), rates=rates,
        power=ref.power[:n], duration=ref.durations[:n],
        gating=None if gating_src is None else gating_src.gating[:n],
        counter_pass={c: seen[c] for c in order},
        pass_power={s.pass_id: s.power[:n] for s in segs},
        truncated=dropped,
        gating_clamped=sum(m.gating_clamped for m in normed))


def concat(traces: Sequence[MergedTrace], workload: str | None = None) -> MergedTrace:
    """Stack merged traces of one (subsystem, frequency) row-wise, in the given order."""
    if not traces:
        raise DataError("nothing to concatenate")
    first = traces[0]
    for t in traces[1:]:
        if (t.subsystem, t.frequency, t.core_count) != (first.subsystem, first.frequency,
                                                         first.core_count):
            raise DataError("cannot concatenate traces of different subsystem/frequency")
        if set(t.counters) != set(first.counters):
            raise DataError(f"workload {t.workload} has a different counter set")
        if t.counter_pass != first.counter_pass:
            raise DataError(f"workload {t.workload} assigns counters to different passes")
        if (t.gating is None) != (first.gating is None):
            raise DataError("gating present in some traces only")
        if list(t.pass_power) != list(first.pass_power):
            raise DataError("pass ids differ between traces")
    cols = [[t.index(c) for c in first.counters] for t in traces]
    if workload is None:
        names = list(dict.fromkeys(t.workload for t in traces))
        workload = "+".join(names)
    return MergedTrace(
        subsystem=first.subsystem, frequency=first.frequency,
        workload=workload,
        core_count=first.core_count, counters=first.counters,
        rates=np.vstack([t.rates[:, ix] for t, ix in zip(traces, cols)]),
        power=np.concatenate([t.power for t in traces]),
        duration=np.concatenate([t.duration for t in traces]),
        gating=None if first.gating is None else np.vstack([t.gating for t in traces]),
        counter_pass=first.counter_pass,
        pass_power={k: np.concatenate([t.pass_power[k] for t in traces])
                    for k in first.pass_power},
        truncated=sum(t.truncated for t in traces),
        gating_clamped=sum(t.gating_clamped for t in traces))


def split(trace: MergedTrace, train_fraction: float):
    """Temporal prefix split: ``floor(n * train_fraction)`` rows go to training."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    n = len(trace)
    if n < 2:
        raise DataError("need at least 2 rows to split")
    # the epsilon absorbs binary representation error, e.g. 10 * 0.7
    n_train = int(math.floor(n * train_fraction + 1e-9))
    if n_train == 0 or n_train == n:
        raise DataError(f"fraction {train_fraction} leaves an empty side for {n} rows")
    return trace.take(slice(0, n_train)), trace.take(slice(n_train, n))
