"""Synthetic platform: traces generated from known models, used as ground truth.

Rates follow a latent activity factor per phase (idle / compute / memory /
mixed regimes), with per-phase, per-event loadings and AR(1) idiosyncratic
noise, so informative events are correlated with each other the way real
counters are. Decoy events are independent of power but carry a per-workload
level, so a decoy fitted on some workloads extrapolates badly to others.
Power is the true model applied forward, plus Gaussian noise and optional
quantization.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .characterization import GroupOracle, oracle_from_dict
from .errors import DataError
from .evaluation import energy_error
from .power_models import (CpuModel, GpuModel, ModelLut, lut_lookup, predict_cpu_trace,
                           predict_gpu_trace, predict_trace)
from .trace import CPU, CYCLES, GPU, SUBSYSTEMS, CounterId, MergedTrace, TraceSegment

KINDS = ("compute", "memory")
AR_PHI = 0.7
IDIO_SCALE = 0.25
LOADING_SIGMA = 0.25
DECOY_SIGMA = 0.5


@dataclass(frozen=True)
class EventSpec:
    name: str
    kind: str
    peak_rate: float
    weight: float
    weights: Mapping | None = None
    freq_exponent: float = 1.0


@dataclass(frozen=True)
class SubsystemSpec:
    frequencies: tuple
    voltage: tuple
    base_w: float
    events: tuple
    decoys: int = 0
    decoy_rate: float = 1e8
    gate_w: float = 0.0
    pmu: Mapping = field(default_factory=dict)
    decoy_workload_sigma: float = 0.0

    @property
    def f_max(self):
        return max(self.frequencies)

    def volt_ratio(self, f) -> float:
        lo, hi = min(self.frequencies), max(self.frequencies)
        vmin, vmax = self.voltage
        v = vmax if hi == lo else vmin + (vmax - vmin) * (f - lo) / (hi - lo)
        return v / vmax

    def weight(self, ev: EventSpec, f) -> float:
        if ev.weights is not None and str(f) in ev.weights:
            return float(ev.weights[str(f)])
        return ev.weight * self.volt_ratio(f) ** 2

    @property
    def decoy_names(self) -> list[str]:
        return [f"decoy_{i:02d}" for i in range(self.decoys)]

    @property
    def event_names(self) -> list[str]:
        return [e.name for e in self.events] + self.decoy_names


@dataclass(frozen=True)
class PlatformSpec:
    platform: str
    core_count: int
    cpu: SubsystemSpec
    gpu: SubsystemSpec
    regimes: Mapping
    noise_sigma: float = 0.01
    quantization_w: float = 0.0
    nominal_period_s: float = 0.1
    jitter: float = 0.05
    workloads: Mapping = field(default_factory=lambda: {"count": 8, "samples": 150,
                                                        "phase_min": 8, "phase_max": 40})
    validation_samples: int = 200
    raw: Mapping = field(default_factory=dict, compare=False, repr=False)

    def sub(self, d) -> SubsystemSpec:
        return self.cpu if d == CPU else self.gpu

    def oracle(self, d) -> GroupOracle:
        return oracle_from_dict(self.sub(d).pmu or {})

    def oracle_dict(self) -> dict:
        return {d: self.oracle(d).to_dict() for d in SUBSYSTEMS}

    def frequencies(self) -> dict:
        return {d: list(self.sub(d).frequencies) for d in SUBSYSTEMS}

    def passes(self, d) -> list[list[str]]:
        """First-fit partition of every event into single-pass schedulable groups."""
        oracle = self.oracle(d)
        groups: list[list[str]] = []
        for ev in self.sub(d).event_names:
            for g in groups:
                if oracle.can_schedule([CounterId(d, None, e) for e in g + [ev]]):
                    g.append(ev)
                    break
            else:
                groups.append([ev])
        return groups

    def ground_truth_lut(self, seed=None) -> ModelLut:
        cpu, gpu = {}, {}
        C = self.core_count
        for f in self.cpu.frequencies:
            vr = self.cpu.volt_ratio(f)
            aw = np.array([[self.cpu.weight(e, f) for e in self.cpu.events]] * C)
            cpu[f] = CpuModel(f, self.cpu.base_w * vr, np.full(C, self.cpu.gate_w * vr), aw,
                              tuple(e.name for e in self.cpu.events))
        for f in self.gpu.frequencies:
            gpu[f] = GpuModel(f, self.gpu.base_w * self.gpu.volt_ratio(f),
                              [self.gpu.weight(e, f) for e in self.gpu.events],
                              tuple(e.name for e in self.gpu.events))
        prov = {"source": "synthetic ground truth"}
        if seed is not None:
            prov["seed"] = seed
        return ModelLut(cpu, gpu, self.platform, prov)

    def with_overrides(self, **kw) -> "PlatformSpec":
        raw = copy.deepcopy(dict(self.raw))
        raw.update(kw)
        return spec_from_dict(raw)


def _freqs(d: Mapping) -> tuple:
    if "frequencies_hz" in d:
        fs = [int(f) for f in d["frequencies_hz"]]
    elif "frequencies_mhz" in d:
        fs = [int(round(f * 1e6)) for f in d["frequencies_mhz"]]
    else:
        raise DataError("subsystem spec needs frequencies_hz or frequencies_mhz")
    if len(set(fs)) != len(fs) or not fs or min(fs) <= 0:
        raise DataError("frequencies must be positive and distinct")
    return tuple(fs)


def _sub_from_dict(d: Mapping, name: str) -> SubsystemSpec:
    try:
        events = tuple(EventSpec(e["name"], e.get("kind", "compute"), float(e["peak_rate"]),
                                 float(e["weight"]), e.get("weights"),
                                 float(e.get("freq_exponent", 1.0))) for e in d["events"])
        sub = SubsystemSpec(_freqs(d), tuple(d.get("voltage", (1.0, 1.0))), float(d["base_w"]),
                            events, int(d.get("decoys", 0)), float(d.get("decoy_rate", 1e8)),
                            float(d.get("gate_w", 0.0)), d.get("pmu", {}),
                            float(d.get("decoy_workload_sigma", 0.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"invalid {name} spec: {exc!r}") from None
    names = sub.event_names
    if len(set(names)) != len(names) or CYCLES in names:
        raise DataError(f"{name} event names must be unique and not {CYCLES!r}")
    for e in sub.events:
        if e.kind not in KINDS:
            raise DataError(f"event {e.name}: kind must be one of {KINDS}")
        if e.peak_rate <= 0 or e.weight < 0:
            raise DataError(f"event {e.name}: need peak_rate > 0 and weight >= 0")
        if e.weights and any(float(w) < 0 for w in e.weights.values()):
            raise DataError(f"event {e.name}: negative per-frequency weight")
    if sub.decoys < 0 or sub.decoy_workload_sigma < 0:
        raise DataError("decoys and decoy_workload_sigma must be >= 0")
    if sub.base_w < 0 or sub.gate_w < 0:
        raise DataError("base and gate weights must be >= 0")
    vmin, vmax = sub.voltage
    if not 0 < vmin <= vmax:
        raise DataError("voltage range must satisfy 0 < min <= max")
    return sub


def spec_from_dict(d: Mapping) -> PlatformSpec:
    try:
        spec = PlatformSpec(
            platform=str(d.get("platform", "synthetic")),
            core_count=int(d["core_count"]),
            cpu=_sub_from_dict(d["cpu"], CPU),
            gpu=_sub_from_dict(d["gpu"], GPU),
            regimes=dict(d["regimes"]),
            noise_sigma=float(d.get("noise_sigma", 0.01)),
            quantization_w=float(d.get("quantization_w", 0.0)),
            nominal_period_s=float(d.get("nominal_period_s", 0.1)),
            jitter=float(d.get("jitter", 0.05)),
            workloads=dict(d.get("workloads", {})),
            validation_samples=int(d.get("validation", {}).get("samples", 200)),
            raw=copy.deepcopy(dict(d)))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"invalid platform spec: {exc!r}") from None
    if spec.core_count < 1:
        raise DataError("core_count must be >= 1")
    if spec.noise_sigma < 0 or spec.quantization_w < 0:
        raise DataError("noise_sigma and quantization_w must be >= 0")
    if not 0 <= spec.jitter < 1 or spec.nominal_period_s <= 0:
        raise DataError("need 0 <= jitter < 1 and a positive nominal period")
    if not spec.regimes:
        raise DataError("at least one activity regime is required")
    for name, r in spec.regimes.items():
        lo, hi = r["level"]
        if not 0 <= lo <= hi:
            raise DataError(f"regime {name}: bad level range")
        a_lo, a_hi = r.get("active_cores", (0, spec.core_count))
        if not 0 <= a_lo <= a_hi <= spec.core_count:
            raise DataError(f"regime {name}: bad active_cores range")
    w = {"count": 8, "samples": 150, "phase_min": 8, "phase_max": 40}
    w.update(spec.workloads)
    if w["count"] < 1 or w["samples"] < 3 or not 1 <= w["phase_min"] <= w["phase_max"]:
        raise DataError("invalid workloads section")
    object.__setattr__(spec, "workloads", w)
    for d_ in SUBSYSTEMS:
        oracle = spec.oracle(d_)
        for ev in spec.sub(d_).event_names:
            if not oracle.can_schedule([CounterId(d_, None, ev)]):
                raise DataError(f"{d_} event {ev} cannot be scheduled even alone")
    return spec


def load_spec(path=None) -> PlatformSpec:
    """Load a platform spec; without a path, the shipped Xavier-shaped one."""
    if path is None:
        text = resources.files("lutpower").joinpath("data/xavier.json").read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise DataError(f"cannot read spec {path}: {exc}") from None
    try:
        return spec_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise DataError(f"spec is not valid JSON: {exc}") from None


def xavier_spec(**overrides) -> PlatformSpec:
    spec = load_spec()
    return spec.with_overrides(**overrides) if overrides else spec


# -- generation --------------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    """Per-sample regime index, phase index and latent activity."""

    regime: np.ndarray
    phase: np.ndarray
    activity: np.ndarray
    active: np.ndarray  # phase -> per-core active flag (n_phases x cores)
    names: tuple


def _ar1(rng, shape, phi=AR_PHI):
    """Unit-variance AR(1) along axis 0."""
    e = rng.standard_normal(shape)
    out = np.empty(shape)
    out[0] = e[0]
    s = np.sqrt(1 - phi * phi)
    for t in range(1, shape[0]):
        out[t] = phi * out[t - 1] + s * e[t]
    return out


def make_schedule(spec: PlatformSpec, rng, n: int, regime_probs=None) -> Schedule:
    names = tuple(spec.regimes)
    if regime_probs is None:
        regime_probs = rng.dirichlet(np.ones(len(names)))
    w = spec.workloads
    regime = np.empty(n, dtype=np.int64)
    phase = np.empty(n, dtype=np.int64)
    levels, actives = [], []
    t, p = 0, 0
    while t < n:
        length = int(rng.integers(w["phase_min"], w["phase_max"] + 1))
        r = int(rng.choice(len(names), p=regime_probs))
        reg = spec.regimes[names[r]]
        lo, hi = reg["level"]
        levels.append(rng.uniform(lo, hi))
        a_lo, a_hi = reg.get("active_cores", (0, spec.core_count))
        k = int(rng.integers(a_lo, a_hi + 1))
        flags = np.zeros(spec.core_count, dtype=bool)
        flags[rng.permutation(spec.core_count)[:k]] = True
        actives.append(flags)
        regime[t:t + length] = r
        phase[t:t + length] = p
        t += length
        p += 1
    levels = np.array(levels)
    activity = np.clip(levels[phase] * (1 + 0.2 * _ar1(rng, (n,))), 0.0, None)
    return Schedule(regime, phase, activity, np.array(actives), names)


def _intensity(spec, sched: Schedule, kind: str) -> np.ndarray:
    table = np.array([spec.regimes[name][kind] for name in sched.names], dtype=float)
    return table[sched.regime]


def _decoy_shift(spec, d, seed, key) -> np.ndarray:
    """Per-workload log-level of each decoy, shared by all frequencies."""
    sub = spec.sub(d)
    rng = _stream(seed, 5, *key)
    return sub.decoy_workload_sigma * rng.standard_normal(sub.decoys)


def _gpu_rates(spec: PlatformSpec, sched: Schedule, f, rng, shift) -> dict:
    sub = spec.gpu
    n = sched.regime.shape[0]
    n_phase = int(sched.phase.max()) + 1
    fs = f / sub.f_max
    rates = {}
    for e in sub.events:
        load = np.exp(LOADING_SIGMA * rng.standard_normal(n_phase))[sched.phase]
        idio = np.clip(1 + IDIO_SCALE * _ar1(rng, (n,)), 0.0, None)
        rates[e.name] = e.peak_rate * fs ** e.freq_exponent * sched.activity * _intensity(spec, sched, e.kind) * load * idio
    for j, name in enumerate(sub.decoy_names):
        rates[name] = sub.decoy_rate * np.exp(shift[j] + DECOY_SIGMA * rng.standard_normal(n))
    return rates


def _cpu_rates(spec: PlatformSpec, sched: Schedule, f, rng, shift):
    sub = spec.cpu
    C = spec.core_count
    n = sched.regime.shape[0]
    n_phase = int(sched.phase.max()) + 1
    fs = f / sub.f_max
    active = sched.active[sched.phase]  # n x C
    g = np.where(active, rng.uniform(0.85, 1.0, (n, C)), rng.uniform(0.0, 0.15, (n, C)))
    g = np.clip(g + 0.03 * rng.standard_normal((n, C)), 0.0, 1.0)
    rates = {}
    for e in sub.events:
        load = np.exp(LOADING_SIGMA * rng.standard_normal((n_phase, C)))[sched.phase]
        idio = np.clip(1 + IDIO_SCALE * _ar1(rng, (n, C)), 0.0, None)
        base = (sched.activity * _intensity(spec, sched, e.kind))[:, None]
        r = e.peak_rate * fs ** e.freq_exponent * g * base * load * idio
        for i in range(C):
            rates[(i, e.name)] = r[:, i]
    for j, name in enumerate(sub.decoy_names):
        for i in range(C):
            rates[(i, name)] = sub.decoy_rate * np.exp(shift[j] + DECOY_SIGMA * rng.standard_normal(n))
    return g, rates


def true_power(spec: PlatformSpec, d: str, f, rates, gating=None) -> np.ndarray:
    """Forward model: the ground-truth LUT entry applied to underlying rates."""
    sub = spec.sub(d)
    vr = sub.volt_ratio(f)
    if d == GPU:
        p = np.full(next(iter(rates.values())).shape[0], sub.base_w * vr)
        for e in sub.events:
            p = p + rates[e.name] * sub.weight(e, f)
        return p
    p = np.full(gating.shape[0], sub.base_w * vr)
    for i in range(spec.core_count):
        s = gating[:, i] * (sub.gate_w * vr)
        for e in sub.events:
            s = s + rates[(i, e.name)] * sub.weight(e, f)
        p = p + s
    return p


def _measure(spec, truth, rng):
    p = truth
    if spec.noise_sigma > 0:
        p = p + rng.normal(0.0, spec.noise_sigma * float(truth.mean()), truth.shape)
    if spec.quantization_w > 0:
        q = spec.quantization_w
        p = np.round(p / q) * q
    return np.clip(p, 0.0, None)


def _segments(spec: PlatformSpec, d: str, f, workload: str, rates, gating, truth, rngs):
    sub_passes = spec.passes(d)
    out = []
    n = truth.shape[0]
    for pid, events in enumerate(sub_passes):
        rng = rngs[pid]
        dur = spec.nominal_period_s * (1 + spec.jitter * rng.uniform(-1, 1, n))
        ts = np.concatenate([[0.0], np.cumsum(dur)[:-1]])
        if d == GPU:
            counters = tuple(CounterId(GPU, None, e) for e in events)
            counts = np.column_stack([rates[e] * dur for e in events])
            cycles = None
        else:
            counters = tuple(CounterId(CPU, i, e) for i in range(spec.core_count) for e in events)
            counts = np.column_stack([rates[(c.core, c.event)] * dur for c in counters])
            cycles = gating * f * dur[:, None]
        out.append(TraceSegment(
            subsystem=d, frequency=int(f), workload=workload, pass_id=pid,
            nominal_period=spec.nominal_period_s, core_count=spec.core_count,
            counters=counters, timestamps=ts, durations=dur, power=_measure(spec, truth, rng),
            counts=counts, cycles=cycles, dvfs_states=spec.sub(d).frequencies))
    return out


def _stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *key]))


def _subsystem_trace(spec, d, f, workload, sched, seed, key, shift):
    rng = _stream(seed, *key, 0)
    if d == GPU:
        rates = _gpu_rates(spec, sched, f, rng, shift)
        gating = None
    else:
        gating, rates = _cpu_rates(spec, sched, f, rng, shift)
    truth = true_power(spec, d, f, rates, gating)
    n_pass = len(spec.passes(d))
    rngs = [_stream(seed, *key, 1 + p) for p in range(n_pass)]
    return _segments(spec, d, f, workload, rates, gating, truth, rngs)


@dataclass(frozen=True)
class GroundTruth:
    lut: ModelLut
    seed: int


@dataclass
class SyntheticCorpus:
    spec: PlatformSpec
    seed: int
    # (subsystem, freq) -> list of segments (all workloads, all passes)
    segments: dict
    # (f_cpu, f_gpu) -> {"cpu": [segments], "gpu": [segments]}
    validation: dict
    ground_truth: GroundTruth


def workload_names(spec: PlatformSpec) -> list[str]:
    return [f"w{i:02d}" for i in range(spec.workloads["count"])]


def generate(spec: PlatformSpec, seed: int = 0, workload_phases: Sequence | None = None,
             validation: bool = True) -> SyntheticCorpus:
    """Generate training/characterization traces and concurrent validation traces.

    ``workload_phases`` optionally fixes, per workload, the regime
    probabilities (a sequence of weights over ``spec.regimes``); by default
    each workload draws its own mix.
    """
    names = workload_names(spec)
    if workload_phases is not None and len(workload_phases) != len(names):
        raise DataError(f"need {len(names)} regime mixes, got {len(workload_phases)}")
    n = spec.workloads["samples"]
    segments = {}
    for di, d in enumerate(SUBSYSTEMS):
        for fi, f in enumerate(spec.sub(d).frequencies):
            segs = []
            for wi, w in enumerate(names):
                srng = _stream(seed, 0, di, fi, wi)
                probs = None
                if workload_phases is not None:
                    probs = np.asarray(workload_phases[wi], dtype=float)
                    probs = probs / probs.sum()
                sched = make_schedule(spec, srng, n, probs)
                shift = _decoy_shift(spec, d, seed, (0, di, wi))
                segs += _subsystem_trace(spec, d, f, w, sched, seed, (1, di, fi, wi), shift)
            segments[(d, int(f))] = segs
    pairs = {}
    if validation:
        nv = spec.validation_samples
        for ci, fc in enumerate(spec.cpu.frequencies):
            for gi, fg in enumerate(spec.gpu.frequencies):
                sched = make_schedule(spec, _stream(seed, 2, ci, gi), nv)
                w = f"sys-{int(fc)}-{int(fg)}"
                pairs[(int(fc), int(fg))] = {
                    CPU: _subsystem_trace(spec, CPU, fc, w, sched, seed, (3, ci, gi),
                                          _decoy_shift(spec, CPU, seed, (1, ci, gi))),
                    GPU: _subsystem_trace(spec, GPU, fg, w, sched, seed, (4, ci, gi),
                                          _decoy_shift(spec, GPU, seed, (2, ci, gi))),
                }
    return SyntheticCorpus(spec, seed, segments, pairs,
                           GroundTruth(spec.ground_truth_lut(seed), seed))


# -- corpus helpers ----------------------------------------------------------

def merged_corpus(corpus: SyntheticCorpus) -> dict:
    """``(subsystem, freq) -> [MergedTrace per workload]``."""
    from .trace import merge_passes

    out = {}
    for key, segs in corpus.segments.items():
        by_w = {}
        for s in segs:
            by_w.setdefault(s.workload, []).append(s)
        out[key] = [merge_passes(by_w[w]) for w in sorted(by_w)]
    return out


def merged_pairs(corpus: SyntheticCorpus) -> dict:
    """``(f_cpu, f_gpu) -> (cpu MergedTrace, gpu MergedTrace)``."""
    from .trace import merge_passes

    return {k: (merge_passes(v[CPU]), merge_passes(v[GPU])) for k, v in corpus.validation.items()}


@dataclass(frozen=True)
class OracleComparison:
    """Trained-vs-true comparison per (subsystem, frequency)."""

    records: tuple

    @property
    def max_energy_err(self) -> float:
        return max(r["energy_err_pct"] for r in self.records)


def _weight_distance(a, b):
    if a.counters != b.counters:
        return None
    wa, wb = a.flat_weights(), b.flat_weights()
    if wa.shape != wb.shape:
        return None
    return float(np.linalg.norm(wa - wb) / max(np.linalg.norm(wb), 1e-300))


def oracle_check(ground_truth, trained: ModelLut, validation: Mapping) -> OracleComparison:
    """Energy of trained vs. true model on the same validation traces.

    ``validation`` maps ``(subsystem, freq)`` to a merged trace holding
    every event of the true and trained models. Weight distance is the
    relative L2 distance, reported only when the counter lists match.
    """
    truth = ground_truth.lut if isinstance(ground_truth, GroundTruth) else ground_truth
    records = []
    for (d, f) in sorted(validation):
        t = validation[(d, f)]
        try:
            true_m = lut_lookup(truth, d, f)
            model = lut_lookup(trained, d, f)
        except KeyError as exc:
            raise DataError(f"frequency mismatch: {exc}") from None
        ref = predict_trace(true_m, t)
        est = predict_trace(model, t)
        records.append({"subsystem": d, "frequency": int(f),
                        "energy_err_pct": energy_error(est, ref, t.duration),
                        "weight_distance": _weight_distance(model, true_m)})
    return OracleComparison(tuple(records))
