"""Fit per-(subsystem, frequency) models with NNLS and assemble the LUT."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .characterization import CounterSet
from .errors import CoverageError, DataError, MissingCounterError
from .nnls import NnlsSolution, nnls
from .power_models import (CpuModel, GpuModel, ModelLut, cpu_model_from_weights,
                           gpu_model_from_weights)
from .trace import CPU, GPU, CounterId, MergedTrace, concat, split

log = logging.getLogger(__name__)

DEFAULT_SPLITS = {CPU: 0.7, GPU: 0.6}


class UnderdeterminedWarning(UserWarning):
    pass


class NnlsCapWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DesignMatrix:
    columns: tuple
    values: np.ndarray
    target: np.ndarray

    @property
    def shape(self):
        return self.values.shape


def _events(counters) -> list[str]:
    if isinstance(counters, CounterSet):
        return counters.events
    return [c.event if isinstance(c, CounterId) else str(c) for c in counters]


def build_design(trace: MergedTrace, counters) -> DesignMatrix:
    """Predictor matrix for ``trace``.

    CPU columns: ``[1, g_1..g_C, x_11..x_1J, ..., x_C1..x_CJ]``.
    GPU columns: ``[1, x_1..x_J]``.
    """
    events = _events(counters)
    n = len(trace)
    cols = ["const"]
    blocks = [np.ones((n, 1))]
    try:
        if trace.subsystem == CPU:
            if trace.gating is None:
                raise DataError(f"CPU trace {trace.workload} has no cycle counters")
            C = trace.core_count
            cols += [f"g{i}" for i in range(C)]
            blocks.append(trace.gating)
            for i in range(C):
                for ev in events:
                    cols.append(f"c{i}.{ev}")
                    blocks.append(trace.rate(CounterId(CPU, i, ev))[:, None])
        else:
            for ev in events:
                cols.append(ev)
                blocks.append(trace.rate(CounterId(GPU, None, ev))[:, None])
    except KeyError as exc:
        raise MissingCounterError(f"trace {trace.workload} lacks counter {exc.args[0]}") from None
    values = np.hstack(blocks)
    if not np.isfinite(values).all() or not np.isfinite(trace.power).all():
        raise DataError("non-finite values in design matrix")
    if n < values.shape[1]:
        warnings.warn(f"{n} observations for {values.shape[1]} predictors",
                      UnderdeterminedWarning, stacklevel=2)
    return DesignMatrix(tuple(cols), values, np.array(trace.power, dtype=float))


def fit_design(design: DesignMatrix) -> NnlsSolution:
    """NNLS on ``design`` with positive column scaling, weights in physical units.

    Scaling each column by a positive factor gives an equivalent problem
    (nonnegativity is preserved), but brings columns of 1 and of ~1e9
    events/s onto one scale so the solver tolerance is meaningful.
    """
    A = design.values
    norms = np.sqrt((A * A).sum(axis=0))
    scale = np.where(norms > 0, norms, 1.0)
    sol = nnls(A / scale, design.target)
    w = sol.weights / scale
    if not sol.converged:
        warnings.warn("NNLS hit its iteration cap; returning best-so-far weights",
                      NnlsCapWarning, stacklevel=2)
    return NnlsSolution(w, sol.residual_norm, sol.iterations, sol.converged)


def train_model(train: MergedTrace, counters) -> CpuModel | GpuModel:
    events = _events(counters)
    sol = fit_design(build_design(train, events))
    if train.subsystem == CPU:
        return cpu_model_from_weights(train.frequency, sol.weights, train.core_count, events)
    return gpu_model_from_weights(train.frequency, sol.weights, events)


def combine_workloads(traces) -> MergedTrace:
    """One trace per (subsystem, frequency): workloads stacked in name order."""
    if isinstance(traces, MergedTrace):
        return traces
    traces = sorted(traces, key=lambda t: t.workload)
    if not traces:
        raise DataError("no traces")
    return concat(traces) if len(traces) > 1 else traces[0]


def split_corpus(corpus: Mapping, splits: Mapping | None = None):
    """Prefix-split every entry; returns ``(train, validation)`` dicts."""
    splits = DEFAULT_SPLITS if splits is None else splits
    train, val = {}, {}
    for key in sorted(corpus):
        train[key], val[key] = split(combine_workloads(corpus[key]), splits[key[0]])
    return train, val


def train_lut(corpus: Mapping, counter_sets: Mapping, splits: Mapping | None = None,
              platform: str = "", provenance: Mapping | None = None,
              frequencies: Mapping | None = None) -> ModelLut:
    """Train one model per ``(subsystem, frequency)`` key of ``corpus``.

    ``splits`` maps subsystem to training fraction; ``None`` trains on all
    rows. Pass ``frequencies`` to require coverage of given DVFS states.
    """
    if not corpus:
        raise CoverageError("empty corpus")
    if frequencies is not None:
        missing = [(d, f) for d, fs in frequencies.items() for f in fs if (d, f) not in corpus]
        if missing:
            raise CoverageError("corpus lacks " + ", ".join(f"{d}@{f}Hz" for d, f in missing))
    missing = [k for k in corpus if k not in counter_sets]
    if missing:
        raise CoverageError("no counter set for " + ", ".join(f"{d}@{f}Hz" for d, f in sorted(missing)))
    cpu, gpu = {}, {}
    for key in sorted(corpus):
        d, f = key
        data = combine_workloads(corpus[key])
        if splits is not None:
            data, _ = split(data, splits[d])
        model = train_model(data, counter_sets[key])
        (cpu if d == CPU else gpu)[int(f)] = model
        log.debug("trained %s model at %d Hz on %d rows", d, f, len(data))
    prov = dict(provenance or {})
    if splits is not None:
        prov.setdefault("splits", {d: splits[d] for d in sorted({k[0] for k in corpus})})
    return ModelLut(cpu, gpu, platform, prov)


def load_manifest(path) -> dict:
    """Read a training manifest.

    ::

        {"traces": {"gpu": {"<freq_hz>": ["rel/path.csv", ...]}, "cpu": {...}},
         "splits": {"cpu": 0.7, "gpu": 0.6},
         "counters": {"source": "characterization", "path": "counter_sets/"}
                   | {"source": "explicit", "cpu": {"<freq_hz>": [events]}, ...}}

    Relative paths resolve against the manifest's directory.
    """
    path = Path(path)
    try:
        m = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from None
    base = path.parent
    try:
        traces = {(d, int(f)): [base / p for p in files]
                  for d, per in m["traces"].items() for f, files in per.items()}
        splits = m.get("splits", DEFAULT_SPLITS)
        src = m.get("counters", {"source": "characterization", "path": "counter_sets"})
        if src["source"] == "explicit":
            counters = {(d, int(f)): CounterSet(d, int(f), tuple(CounterId(d, None, e) for e in evs))
                        for d in (CPU, GPU) for f, evs in src.get(d, {}).items()}
        elif src["source"] == "characterization":
            counters = base / src["path"]
        else:
            raise DataError(f"unknown counter source {src['source']!r}")
    except (KeyError, TypeError, AttributeError, ValueError) as exc:
        raise DataError(f"malformed manifest {path}: {exc!r}") from None
    for d in splits:
        if not 0 < splits[d] < 1:
            raise DataError(f"split fraction for {d} must lie in (0, 1)")
    return {"traces": traces, "splits": splits, "counters": counters}
