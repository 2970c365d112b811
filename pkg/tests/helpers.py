"""Builders shared by the test modules."""

from __future__ import annotations

import numpy as np

from lutpower import synthetic
from lutpower.characterization import characterize_all, rank_all
from lutpower.evaluation import evaluate_system, sweep_predictor_count
from lutpower.power_models import CpuModel, GpuModel, ModelLut
from lutpower.trace import CPU, GPU, SUBSYSTEMS, CounterId, MergedTrace, TraceSegment
from lutpower.training import DEFAULT_SPLITS, split_corpus, train_lut

K = {CPU: 3, GPU: 8}


def gpu_trace(columns: dict, power, frequency=1_000_000_000, workload="w", duration=None):
    """Single-pass GPU MergedTrace from ``{event: rate series}``."""
    power = np.asarray(power, dtype=float)
    counters = tuple(CounterId(GPU, None, e) for e in columns)
    rates = np.column_stack([np.asarray(v, dtype=float) for v in columns.values()]) \
        if columns else np.empty((power.shape[0], 0))
    dur = np.full(power.shape[0], 0.1) if duration is None else np.asarray(duration, float)
    return MergedTrace(GPU, frequency, workload, 1, counters, rates, power, dur,
                       counter_pass={c: 0 for c in counters}, pass_power={0: power})


def cpu_trace(gating, columns: dict, power, frequency=1_000_000_000, workload="w"):
    """Single-pass CPU MergedTrace; ``columns`` maps ``(core, event)`` to a rate series."""
    gating = np.asarray(gating, dtype=float)
    power = np.asarray(power, dtype=float)
    counters = tuple(CounterId(CPU, c, e) for c, e in columns)
    rates = np.column_stack([np.asarray(v, float) for v in columns.values()])
    return MergedTrace(CPU, frequency, workload, gating.shape[1], counters, rates, power,
                       np.full(power.shape[0], 0.1), gating=gating,
                       counter_pass={c: 0 for c in counters}, pass_power={0: power})


def _awkward_floats(rng, size, lo, hi):
    """Uniform values with a sprinkling of exact zeros, subnormals and long mantissas."""
    v = rng.uniform(lo, hi, size)
    pick = rng.random(size)
    v[pick < 0.05] = 0.0
    v[(pick >= 0.05) & (pick < 0.08)] = 5e-324 * rng.integers(1, 1000)
    v[(pick >= 0.08) & (pick < 0.12)] = np.nextafter(hi, lo)
    return v


def random_segment(rng) -> TraceSegment:
    d = SUBSYSTEMS[int(rng.integers(2))]
    cores = int(rng.integers(1, 5)) if d == CPU else 1
    n = int(rng.integers(1, 30))
    n_ev = int(rng.integers(0, 5))
    events = [f"ev{j}_{int(rng.integers(1000))}" for j in range(n_ev)]
    events = list(dict.fromkeys(events))
    if d == CPU:
        counters = [CounterId(CPU, int(c), e) for e in events for c in range(cores)
                    if rng.random() < 0.7]
    else:
        counters = [CounterId(GPU, None, e) for e in events]
    rng.shuffle(counters)
    ts = np.cumsum(rng.uniform(1e-6, 1.0, n)) + rng.uniform(-1e3, 1e3)
    freq = int(rng.integers(1, 3_000_000_000))
    cycles = None
    if d == CPU and rng.random() < 0.7:
        cycles = _awkward_floats(rng, (n, cores), 0.0, 3e9)
    return TraceSegment(
        subsystem=d, frequency=freq, workload=f"w{int(rng.integers(100))}",
        pass_id=int(rng.integers(0, 5)), nominal_period=float(rng.uniform(1e-3, 1.0)),
        core_count=cores, counters=tuple(counters), timestamps=ts,
        durations=rng.uniform(1e-4, 1.0, n), power=_awkward_floats(rng, n, 0.0, 50.0),
        counts=_awkward_floats(rng, (n, len(counters)), 0.0, 1e12), cycles=cycles,
        dvfs_states=sorted({freq, freq + 1}) if rng.random() < 0.3 else None)


def random_lut(rng) -> ModelLut:
    cpu, gpu = {}, {}
    cores = int(rng.integers(1, 9))
    for f in rng.choice(10**10, int(rng.integers(0, 4)), replace=False):
        J = int(rng.integers(0, 5))
        cpu[int(f)] = CpuModel(int(f), float(_awkward_floats(rng, 1, 0, 10)[0]),
                               _awkward_floats(rng, cores, 0, 1),
                               _awkward_floats(rng, (cores, J), 0, 1e-8),
                               tuple(f"e{j}" for j in range(J)))
    for f in rng.choice(10**10, int(rng.integers(0, 4)), replace=False):
        J = int(rng.integers(0, 9))
        gpu[int(f)] = GpuModel(int(f), float(rng.uniform(0, 5)),
                               _awkward_floats(rng, J, 0, 1e-8),
                               tuple(f"g{j}" for j in range(J)))
    prov = {"splits": {"cpu": float(rng.uniform(0.1, 0.9)), "gpu": 0.6}}
    return ModelLut(cpu, gpu, f"plat{int(rng.integers(10))}", prov)


def pipeline(spec, seed, sweep=True, k_max=10):
    """Full synthetic run: characterize, select, train, evaluate, and the GPU sweep."""
    corpus = synthetic.generate(spec, seed)
    merged = synthetic.merged_corpus(corpus)
    oracles = {d: spec.oracle(d) for d in SUBSYSTEMS}
    sets = characterize_all(merged, oracles, K)
    lut = train_lut(merged, sets, DEFAULT_SPLITS)
    report = evaluate_system(lut, synthetic.merged_pairs(corpus))
    result = None
    if sweep:
        gpu = {k: v for k, v in merged.items() if k[0] == GPU}
        train, val = split_corpus(gpu, DEFAULT_SPLITS)
        result = sweep_predictor_count({f: r for (_, f), r in rank_all(gpu).items()},
                                       oracles[GPU], k_max,
                                       {f: t for (_, f), t in train.items()},
                                       {f: v for (_, f), v in val.items()})
    return report, result, lut
