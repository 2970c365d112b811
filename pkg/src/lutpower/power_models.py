"""Per-subsystem linear power models, the frequency LUT, and the system sum."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from . import _kernels
from .errors import DataError, MissingCounterError, UnknownFrequencyError
from .trace import CPU, GPU, CounterId, MergedTrace, atomic_write_text


def _weights(a, ndim):
    arr = np.array(a, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d weight array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CpuModel:
    """``L + sum_i (g_i * G_i + sum_j x_ij * A_ij)``; one event list shared by all cores."""

    frequency: int
    base: float
    gate_weights: np.ndarray
    activity_weights: np.ndarray
    counters: tuple

    def __post_init__(self):
        object.__setattr__(self, "counters", tuple(self.counters))
        object.__setattr__(self, "gate_weights", _weights(self.gate_weights, 1))
        aw = np.asarray(self.activity_weights, dtype=float)
        if aw.size == 0:
            aw = aw.reshape(self.gate_weights.shape[0], len(self.counters))
        object.__setattr__(self, "activity_weights", _weights(aw, 2))
        object.__setattr__(self, "base", float(self.base))
        if self.activity_weights.shape != (self.core_count, len(self.counters)):
            raise ValueError("activity weights must be cores x counters")
        if not (self.base >= 0 and (self.gate_weights >= 0).all()
                and (self.activity_weights >= 0).all()):
            raise ValueError("CPU model weights must be non-negative")

    @property
    def core_count(self) -> int:
        return self.gate_weights.shape[0]

    def __eq__(self, other):
        if not isinstance(other, CpuModel):
            return NotImplemented
        return (self.frequency == other.frequency and self.counters == other.counters
                and _same_bits(self.base, other.base)
                and _same_bits(self.gate_weights, other.gate_weights)
                and _same_bits(self.activity_weights, other.activity_weights))

    __hash__ = None

    def flat_weights(self) -> np.ndarray:
        return np.concatenate([[self.base], self.gate_weights, self.activity_weights.ravel()])


@dataclass(frozen=True, eq=False)
class GpuModel:
    """``K + sum_j x_j * B_j``."""

    frequency: int
    base: float
    weights: np.ndarray
    counters: tuple

    def __post_init__(self):
        object.__setattr__(self, "counters", tuple(self.counters))
        object.__setattr__(self, "weights", _weights(self.weights, 1))
        object.__setattr__(self, "base", float(self.base))
        if self.weights.shape[0] != len(self.counters):
            raise ValueError("one weight per counter required")
        if not (self.base >= 0 and (self.weights >= 0).all()):
            raise ValueError("GPU model weights must be non-negative")

    def __eq__(self, other):
        if not isinstance(other, GpuModel):
            return NotImplemented
        return (self.frequency == other.frequency and self.counters == other.counters
                and _same_bits(self.base, other.base)
                and _same_bits(self.weights, other.weights))

    __hash__ = None

    def flat_weights(self) -> np.ndarray:
        return np.concatenate([[self.base], self.weights])


def _same_bits(a, b) -> bool:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return a.shape == b.shape and a.tobytes() == b.tobytes()


@dataclass(frozen=True, eq=False)
class ModelLut:
    cpu: Mapping[int, CpuModel] = field(default_factory=dict)
    gpu: Mapping[int, GpuModel] = field(default_factory=dict)
    platform: str = ""
    provenance: Mapping = field(default_factory=dict)

    def __post_init__(self):
        for name, table in ((CPU, self.cpu), (GPU, self.gpu)):
            fixed = {int(f): m for f, m in sorted(table.items())}
            for f, m in fixed.items():
                if m.frequency != f:
                    raise ValueError(f"{name} model at key {f} reports frequency {m.frequency}")
            object.__setattr__(self, name, fixed)
        object.__setattr__(self, "provenance", dict(self.provenance))

    def __eq__(self, other):
        if not isinstance(other, ModelLut):
            return NotImplemented
        return (self.platform == other.platform and self.provenance == other.provenance
                and self.cpu == other.cpu and self.gpu == other.gpu)

    __hash__ = None

    def frequencies(self, subsystem: str) -> list[int]:
        return list(self._table(subsystem))

    def _table(self, subsystem):
        if subsystem == CPU:
            return self.cpu
        if subsystem == GPU:
            return self.gpu
        raise ValueError(f"unknown subsystem {subsystem!r}")

    def __len__(self):
        return len(self.cpu) + len(self.gpu)


def lut_lookup(lut: ModelLut, subsystem: str, frequency: int):
    """Exact lookup; frequencies outside the table are an error, never interpolated."""
    table = lut._table(subsystem)
    try:
        return table[int(frequency)]
    except KeyError:
        raise UnknownFrequencyError(
            f"no {subsystem} model at {frequency} Hz (known: {sorted(table)})") from None


def predict_cpu(model: CpuModel, gating: Mapping[int, float],
                rates: Mapping[CounterId, float]) -> float:
    total = model.base
    try:
        for i in range(model.core_count):
            s = gating[i] * float(model.gate_weights[i])
            for j, ev in enumerate(model.counters):
                s += rates[CounterId(CPU, i, ev)] * float(model.activity_weights[i, j])
            total += s
    except KeyError as exc:
        key = exc.args[0]
        what = f"gating for core {key}" if isinstance(key, int) else f"counter {key}"
        raise MissingCounterError(f"row lacks {what}") from None
    return total


def predict_gpu(model: GpuModel, rates: Mapping[CounterId, float]) -> float:
    total = model.base
    for j, ev in enumerate(model.counters):
        key = CounterId(GPU, None, ev)
        if key not in rates:
            raise MissingCounterError(f"row lacks counter {key}")
        total += rates[key] * float(model.weights[j])
    return total


def predict_cpu_trace(model: CpuModel, trace: MergedTrace) -> np.ndarray:
    """Row-wise :func:`predict_cpu` over a merged trace, same term order."""
    if trace.gating is None:
        raise DataError("CPU trace has no cycle counters, cannot compute gating")
    if trace.core_count < model.core_count:
        raise DataError(f"trace has {trace.core_count} cores, model expects {model.core_count}")
    total = np.full(len(trace), model.base)
    try:
        for i in range(model.core_count):
            s = trace.gating[:, i] * model.gate_weights[i]
            for j, ev in enumerate(model.counters):
                s = s + trace.rate(CounterId(CPU, i, ev)) * model.activity_weights[i, j]
            total = total + s
    except KeyError as exc:
        raise MissingCounterError(f"trace lacks counter {exc.args[0]}") from None
    return total


def predict_gpu_trace(model: GpuModel, trace: MergedTrace) -> np.ndarray:
    """Row-wise :func:`predict_gpu` over a merged trace, same term order."""
    total = np.full(len(trace), model.base)
    try:
        for j, ev in enumerate(model.counters):
            total = total + trace.rate(CounterId(GPU, None, ev)) * model.weights[j]
    except KeyError as exc:
        raise MissingCounterError(f"trace lacks counter {exc.args[0]}") from None
    return total


def predict_trace(model, trace: MergedTrace) -> np.ndarray:
    if isinstance(model, CpuModel):
        return predict_cpu_trace(model, trace)
    return predict_gpu_trace(model, trace)


class SystemPrediction(NamedTuple):
    total: float
    cpu: float
    gpu: float

    @property
    def breakdown(self) -> dict:
        return {CPU: self.cpu, GPU: self.gpu}


def predict_system(lut: ModelLut, f_cpu: int, f_gpu: int, cpu_row, gpu_rates) -> SystemPrediction:
    """Reduction sum of the LUT over subsystems; ``cpu_row`` is ``(gating, rates)``."""
    cpu_model = lut_lookup(lut, CPU, f_cpu)
    gpu_model = lut_lookup(lut, GPU, f_gpu)
    gating, rates = cpu_row
    c = predict_cpu(cpu_model, gating, rates)
    g = predict_gpu(gpu_model, gpu_rates)
    return SystemPrediction(c + g, c, g)


def energy(powers: Sequence[float], durations: Sequence[float]) -> float:
    """Zero-order-hold energy ``sum p_t * dt_t`` in joules."""
    p = np.asarray(powers, dtype=float)
    d = np.asarray(durations, dtype=float)
    if p.shape != d.shape:
        raise DataError(f"length mismatch: {p.shape[0]} powers, {d.shape[0]} durations")
    return math.fsum((p * d).tolist())


class SystemPredictor:
    """Allocation-free evaluator for one ``(f_cpu, f_gpu)`` pair.

    Rows use the flat layout documented in ``_kernels``; build them with
    :meth:`row_from_traces` or :meth:`pack_row`.
    """

    def __init__(self, cpu_model: CpuModel, gpu_model: GpuModel):
        self.cpu_model = cpu_model
        self.gpu_model = gpu_model
        self.n_cores = cpu_model.core_count
        self.n_events = len(cpu_model.counters)
        self.cpu_weights = np.ascontiguousarray(cpu_model.flat_weights())
        self.gpu_weights = np.ascontiguousarray(gpu_model.flat_weights())
        self.width = self.n_cores * (1 + self.n_events) + len(gpu_model.counters)

    @classmethod
    def from_lut(cls, lut: ModelLut, f_cpu: int, f_gpu: int) -> "SystemPredictor":
        return cls(lut_lookup(lut, CPU, f_cpu), lut_lookup(lut, GPU, f_gpu))

    def pack_row(self, gating, cpu_rates, gpu_rates) -> np.ndarray:
        row = np.empty(self.width)
        C, J = self.n_cores, self.n_events
        try:
            for i in range(C):
                row[i] = gating[i]
                for j, ev in enumerate(self.cpu_model.counters):
                    row[C + i * J + j] = cpu_rates[CounterId(CPU, i, ev)]
            for j, ev in enumerate(self.gpu_model.counters):
                row[C + C * J + j] = gpu_rates[CounterId(GPU, None, ev)]
        except KeyError as exc:
            raise MissingCounterError(f"row lacks {exc.args[0]}") from None
        return row

    def rows_from_traces(self, cpu: MergedTrace, gpu: MergedTrace) -> np.ndarray:
        """Flat rows for index-aligned CPU and GPU traces."""
        n = min(len(cpu), len(gpu))
        C, J = self.n_cores, self.n_events
        if cpu.gating is None:
            raise DataError("CPU trace has no cycle counters, cannot compute gating")
        if cpu.core_count < C:
            raise DataError(f"CPU trace has {cpu.core_count} cores, model expects {C}")
        rows = np.empty((n, self.width))
        rows[:, :C] = cpu.gating[:n, :C]
        try:
            for i in range(C):
                for j, ev in enumerate(self.cpu_model.counters):
                    rows[:, C + i * J + j] = cpu.rate(CounterId(CPU, i, ev))[:n]
            for j, ev in enumerate(self.gpu_model.counters):
                rows[:, C + C * J + j] = gpu.rate(CounterId(GPU, None, ev))[:n]
        except KeyError as exc:
            raise MissingCounterError(f"trace lacks counter {exc.args[0]}") from None
        return rows

    def evaluate(self, rows: np.ndarray):
        """Vector of ``(cpu, gpu, total)`` predictions for a row matrix."""
        rows = np.ascontiguousarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != self.width:
            raise DataError(f"rows must be n x {self.width}")
        n = rows.shape[0]
        out_c, out_g, out_t = np.empty(n), np.empty(n), np.empty(n)
        _kernels.evaluate_rows(self.cpu_weights, self.gpu_weights, self.n_cores,
                               self.n_events, rows, out_c, out_g, out_t)
        return out_c, out_g, out_t


def cpu_model_from_weights(frequency, weights, n_cores, counters) -> CpuModel:
    """Map a flat ``[L, G_1..G_C, A_11..A_CJ]`` vector onto a :class:`CpuModel`."""
    w = np.asarray(weights, dtype=float)
    J = len(counters)
    return CpuModel(int(frequency), float(w[0]), w[1:1 + n_cores],
                    w[1 + n_cores:].reshape(n_cores, J), tuple(counters))


def gpu_model_from_weights(frequency, weights, counters) -> GpuModel:
    w = np.asarray(weights, dtype=float)
    return GpuModel(int(frequency), float(w[0]), w[1:], tuple(counters))


def lut_to_dict(lut: ModelLut) -> dict:
    return {
        "platform": lut.platform,
        "subsystems": {
            CPU: {str(f): {"base": m.base,
                           "gate_weights": m.gate_weights.tolist(),
                           "activity_weights": m.activity_weights.tolist(),
                           "counters": list(m.counters)} for f, m in lut.cpu.items()},
            GPU: {str(f): {"base": m.base,
                           "weights": m.weights.tolist(),
                           "counters": list(m.counters)} for f, m in lut.gpu.items()},
        },
        "provenance": lut.provenance,
    }


def lut_from_dict(d: Mapping) -> ModelLut:
    try:
        subs = d["subsystems"]
        cpu = {}
        for f, m in subs.get(CPU, {}).items():
            gw = np.asarray(m["gate_weights"], dtype=float)
            aw = np.asarray(m["activity_weights"], dtype=float).reshape(gw.shape[0],
                                                                      len(m["counters"]))
            cpu[int(f)] = CpuModel(int(f), m["base"], gw, aw, tuple(m["counters"]))
        gpu = {int(f): GpuModel(int(f), m["base"], m["weights"], tuple(m["counters"]))
               for f, m in subs.get(GPU, {}).items()}
        return ModelLut(cpu, gpu, d.get("platform", ""), d.get("provenance", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model file: {exc!r}") from None


def dumps_lut(lut: ModelLut) -> str:
    # json writes floats with repr(), i.e. the shortest string that round-trips
    return json.dumps(lut_to_dict(lut), indent=1, sort_keys=True) + "\n"


def save_lut(lut: ModelLut, path) -> Path:
    path = Path(path)
    atomic_write_text(path, dumps_lut(lut))
    return path


def load_lut(path) -> ModelLut:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from None
    return lut_from_dict(d)
