"""Rank events by correlation with power and pick a PMU-schedulable subset."""

from __future__ import annotations

import abc
import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CoverageError, DataError, EmptySelectionError, ZeroVarianceError
from .stats import line_fit
from .trace import CPU, SUBSYSTEMS, CounterId, MergedTrace

SELECTED = "selected"
INCOMPATIBLE = "incompatible"
DISCARDED = "discarded"


@dataclass(frozen=True)
class FitStats:
    counter: CounterId | None
    slope: float
    intercept: float
    pcc: float
    p_value: float
    n: int


def lls_fit(x, y, counter: CounterId | None = None) -> FitStats:
    f = line_fit(x, y)
    return FitStats(counter, f.slope, f.intercept, f.pcc, f.p_value, f.n)


@dataclass(frozen=True)
class Ranking:
    """Significant events sorted by descending PCC (ties: counter name).

    ``excluded`` keeps the events that were dropped, with their fit when
    one exists (``None`` for zero-variance series).
    """

    subsystem: str
    frequency: int
    entries: tuple
    excluded: tuple = ()
    alpha: float = 0.05

    @property
    def counters(self) -> list[CounterId]:
        return [e.counter for e in self.entries]

    @property
    def all_counters(self) -> list[CounterId]:
        return sorted([e.counter for e in self.entries] + [c for c, _ in self.excluded])


class CompatibilityOracle(abc.ABC):
    """Answers whether a set of events fits in a single profiling pass."""

    @abc.abstractmethod
    def can_schedule(self, counters: Iterable[CounterId]) -> bool:
        ...


def _per_core_load(counters) -> int:
    shared, per_core = set(), {}
    for c in counters:
        if c.core is None:
            shared.add(c.event)
        else:
            per_core.setdefault(c.core, set()).add(c.event)
    if not per_core:
        return len(shared)
    return max(len(shared | evs) for evs in per_core.values())


@dataclass(frozen=True)
class CapacityOracle(CompatibilityOracle):
    """At most ``max_simultaneous`` events per core (CPU) or per PMU (GPU)."""

    max_simultaneous: int | None = None

    def can_schedule(self, counters):
        if self.max_simultaneous is None:
            return True
        return _per_core_load(counters) <= self.max_simultaneous


@dataclass(frozen=True)
class GroupOracle(CapacityOracle):
    """Capacity limit plus groups of events that exclude each other."""

    exclusive_groups: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "exclusive_groups",
                           tuple(frozenset(g) for g in self.exclusive_groups))

    def can_schedule(self, counters):
        counters = list(counters)
        if not CapacityOracle.can_schedule(self, counters):
            return False
        events = {c.event for c in counters}
        return all(len(events & g) <= 1 for g in self.exclusive_groups)

    def to_dict(self) -> dict:
        return {"max_simultaneous": self.max_simultaneous,
                "exclusive_groups": [sorted(g) for g in self.exclusive_groups]}


def oracle_from_dict(desc: Mapping, subsystem: str | None = None) -> GroupOracle:
    """Build an oracle from its JSON description.

    The description is either flat (``max_simultaneous``/``exclusive_groups``)
    or keyed by subsystem (``{"cpu": {...}, "gpu": {...}}``).
    """
    if not isinstance(desc, Mapping):
        raise DataError("oracle description must be a JSON object")
    if any(k in desc for k in SUBSYSTEMS):
        if subsystem is None:
            raise DataError("oracle description is per-subsystem; name one")
        desc = desc.get(subsystem, {})
    cap = desc.get("max_simultaneous")
    if cap is not None and (isinstance(cap, bool) or not isinstance(cap, int) or cap < 1):
        raise DataError(f"max_simultaneous must be a positive integer, got {cap!r}")
    groups = desc.get("exclusive_groups", [])
    if not isinstance(groups, list) or not all(isinstance(g, list) for g in groups):
        raise DataError("exclusive_groups must be a list of lists of event names")
    return GroupOracle(max_simultaneous=cap, exclusive_groups=tuple(groups))


def load_oracle(path, subsystem: str | None = None) -> GroupOracle:
    try:
        desc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read oracle file {path}: {exc}") from None
    return oracle_from_dict(desc, subsystem)


@dataclass(frozen=True)
class CounterSet:
    subsystem: str
    frequency: int
    counters: tuple
    k: int | None = None
    status: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "counters", tuple(self.counters))

    @property
    def events(self) -> list[str]:
        return [c.event for c in self.counters]

    def to_dict(self) -> dict:
        return {
            "subsystem": self.subsystem,
            "frequency_hz": int(self.frequency),
            "k": self.k,
            "counters": self.events,
            "status": {c.event: s for c, s in sorted(self.status.items())},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "CounterSet":
        try:
            sub = d["subsystem"]
            counters = tuple(CounterId(sub, None, e) for e in d["counters"])
            status = {CounterId(sub, None, e): s for e, s in d.get("status", {}).items()}
            return cls(sub, int(d["frequency_hz"]), counters, d.get("k"), status)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed counter set: {exc}") from None


def _event_series(traces: Sequence[MergedTrace]):
    """Per-event (rate, power) series; CPU events are summed over cores."""
    series: dict[CounterId, tuple[list, list]] = {}
    for t in traces:
        if t.subsystem == CPU:
            groups: dict[CounterId, list[CounterId]] = {}
            for c in t.counters:
                groups.setdefault(c.shared(), []).append(c)
            for key, members in groups.items():
                members.sort(key=lambda c: c.core)
                x = np.sum([t.rate(c) for c in members], axis=0)
                xs, ys = series.setdefault(key, ([], []))
                xs.append(x)
                ys.append(t.power_for(members[0]))
        else:
            for c in t.counters:
                xs, ys = series.setdefault(c, ([], []))
                xs.append(t.rate(c))
                ys.append(t.power_for(c))
    return {c: (np.concatenate(xs), np.concatenate(ys)) for c, (xs, ys) in series.items()}


def characterize(traces: Sequence[MergedTrace], alpha: float = 0.05) -> Ranking:
    """Regress every event against the power of its own pass and rank them."""
    if not traces:
        raise DataError("no traces to characterize")
    sub, freq = traces[0].subsystem, traces[0].frequency
    for t in traces[1:]:
        if (t.subsystem, t.frequency) != (sub, freq):
            raise DataError("characterize needs traces of a single subsystem and frequency")
    series = _event_series(traces)
    if not series:
        raise DataError(f"no events in {sub} traces at {freq} Hz")
    kept, excluded = [], []
    for counter in sorted(series):
        x, y = series[counter]
        if x.shape[0] < 3:
            raise DataError(f"event {counter} has fewer than 3 samples")
        try:
            fs = lls_fit(x, y, counter)
        except ZeroVarianceError:
            excluded.append((counter, None))
            continue
        if fs.p_value > alpha or not np.isfinite(fs.pcc):
            excluded.append((counter, fs))
        else:
            kept.append(fs)
    kept.sort(key=lambda f: (-f.pcc, f.counter.name))
    return Ranking(sub, freq, tuple(kept), tuple(excluded), alpha)


def select_counters(ranking: Ranking, oracle: CompatibilityOracle, k: int) -> CounterSet:
    """Greedily take ranked events that keep the set schedulable, up to ``k``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    chosen: list[CounterId] = []
    status: dict[CounterId, str] = {}
    for fs in ranking.entries:
        c = fs.counter
        if len(chosen) >= k:
            status[c] = DISCARDED
        elif oracle.can_schedule(chosen + [c]):
            chosen.append(c)
            status[c] = SELECTED
        else:
            status[c] = INCOMPATIBLE
    for c, _ in ranking.excluded:
        status[c] = DISCARDED
    if not chosen:
        raise EmptySelectionError(
            f"no schedulable event for {ranking.subsystem} at {ranking.frequency} Hz")
    return CounterSet(ranking.subsystem, ranking.frequency, tuple(chosen), k, status)


def _per_subsystem(value, subsystem):
    if isinstance(value, Mapping):
        return value[subsystem]
    return value


def rank_all(corpus: Mapping, alpha: float = 0.05, frequencies: Mapping | None = None) -> dict:
    """Characterize every ``(subsystem, frequency)`` entry of ``corpus``.

    ``corpus`` maps ``(subsystem, frequency)`` to a list of merged traces.
    ``frequencies`` optionally lists the required frequencies per subsystem.
    """
    if frequencies is not None:
        missing = [(d, f) for d, fs in frequencies.items() for f in fs if (d, f) not in corpus]
        if missing:
            raise CoverageError("corpus lacks " + ", ".join(f"{d}@{f}Hz" for d, f in missing))
    return {key: characterize(traces, alpha) for key, traces in sorted(corpus.items())}


def characterize_all(corpus: Mapping, oracle, k, alpha: float = 0.05,
                     frequencies: Mapping | None = None) -> dict:
    """One counter set per ``(subsystem, frequency)``; each frequency is independent.

    ``oracle`` and ``k`` may be given per subsystem as mappings.
    """
    rankings = rank_all(corpus, alpha, frequencies)
    return {key: select_counters(r, _per_subsystem(oracle, key[0]), _per_subsystem(k, key[0]))
            for key, r in rankings.items()}


RANKING_COLUMNS = ("event", "pcc", "p_value", "slope", "intercept", "status")


def ranking_csv(ranking: Ranking, selection: CounterSet | None = None) -> str:
    """Ranking export; ranked events first, then excluded ones by name."""
    status = dict(selection.status) if selection is not None else {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RANKING_COLUMNS)
    for fs in ranking.entries:
        w.writerow([fs.counter.event, repr(fs.pcc), repr(fs.p_value), repr(fs.slope),
                    repr(fs.intercept), status.get(fs.counter, "")])
    for c, fs in sorted(ranking.excluded, key=lambda e: e[0].name):
        if fs is None:
            w.writerow([c.event, "", "", "", "", status.get(c, DISCARDED)])
        else:
            w.writerow([c.event, repr(fs.pcc), repr(fs.p_value), repr(fs.slope),
                        repr(fs.intercept), status.get(c, DISCARDED)])
    return buf.getvalue()
