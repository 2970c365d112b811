import copy
import statistics

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import SMALL_SPEC
from helpers import gpu_trace, pipeline
from lutpower import _kernels, synthetic
from lutpower.characterization import CapacityOracle, characterize, select_counters
from lutpower.errors import DataError
from lutpower.evaluation import (EvaluationRecord, EvaluationReport, ape_stats, energy_error,
                                 estimate_pair, evaluate_subsystem, evaluate_system,
                                 grid_table, hot_path_allocations, mape, measure_latency,
                                 report, report_csv, report_from_csv, sweep_predictor_count)
from lutpower.power_models import SystemPredictor, predict_trace
from lutpower.trace import CPU, GPU, split
from lutpower.training import combine_workloads, train_model

MHZ = 1_000_000


class TestMape:
    def test_perfect(self):
        assert mape([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_ten_percent(self):
        assert mape([1.1, 2.2], [1.0, 2.0]) == pytest.approx(10.0)

    def test_floor_excludes_small_measurements(self):
        st_ = ape_stats([5.0, 1.1], [0.1, 1.0])
        assert (st_.n, st_.excluded) == (1, 1)
        assert st_.mape == pytest.approx(10.0)

    def test_all_excluded(self):
        with pytest.raises(DataError):
            mape([1.0], [0.1])

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            mape([1.0, 2.0], [1.0])

    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 200))
    def test_matches_naive_loop(self, seed, n):
        rng = np.random.default_rng(seed)
        meas = rng.uniform(0.3, 40, n)
        est = meas * rng.uniform(0.5, 1.5, n)
        ref = sum(abs(e - m) / m for e, m in zip(est, meas)) / n * 100
        assert mape(est, meas) == pytest.approx(ref, rel=1e-12)

    @given(seed=st.integers(0, 2**32 - 1), sizes=st.lists(st.integers(1, 40), min_size=1,
                                                          max_size=6))
    def test_aggregate_is_count_weighted_mean(self, seed, sizes):
        rng = np.random.default_rng(seed)
        segs = [(rng.uniform(0, 20, n), rng.uniform(0, 20, n)) for n in sizes]
        parts = []
        for e, m in segs:
            if (m >= 0.2).any():
                s = ape_stats(e, m)
                parts.append((s.mape, s.n))
        if not parts:
            return
        whole = mape(np.concatenate([e for e, _ in segs]), np.concatenate([m for _, m in segs]))
        ref = sum(v * n for v, n in parts) / sum(n for _, n in parts)
        assert whole == pytest.approx(ref, rel=1e-10)


class TestEnergyError:
    def test_identical(self):
        assert energy_error([3.0, 4.0], [3.0, 4.0], [0.1, 0.1]) == 0.0

    def test_two_percent(self):
        assert energy_error([10.2] * 5, [10.0] * 5, [0.1] * 5) == pytest.approx(2.0)

    def test_zero_energy(self):
        with pytest.raises(DataError):
            energy_error([1.0], [0.0], [0.1])

    @given(seed=st.integers(0, 2**32 - 1), c=st.floats(1e-3, 1e3))
    def test_scale_invariant(self, seed, c):
        rng = np.random.default_rng(seed)
        meas = rng.uniform(1, 20, 50)
        est = meas * rng.uniform(0.8, 1.2, 50)
        d = rng.uniform(0.05, 0.15, 50)
        assert energy_error(c * est, c * meas, d) == pytest.approx(energy_error(est, meas, d),
                                                                  rel=1e-9)


@pytest.fixture(scope="module")
def small_run():
    spec = synthetic.spec_from_dict(copy.deepcopy(SMALL_SPEC))
    corpus = synthetic.generate(spec, 3)
    report_, _, lut = pipeline(spec, 3, sweep=False)
    return spec, corpus, lut, report_


class TestSystem:
    def test_one_record_per_pair(self, small_run):
        spec, _, _, rep = small_run
        fr = spec.frequencies()
        assert len(rep.records) == len(fr[CPU]) * len(fr[GPU]) == 6
        assert [(r.f_cpu_hz, r.f_gpu_hz) for r in rep.records] == \
            sorted((c, g) for c in fr[CPU] for g in fr[GPU])

    def test_three_by_three_grid(self, small_spec_dict):
        small_spec_dict["cpu"]["frequencies_hz"].append(3_000_000_000)
        spec = synthetic.spec_from_dict(small_spec_dict)
        rep, _, _ = pipeline(spec, 0, sweep=False)
        assert len(rep.records) == 9
        grid = grid_table(rep).splitlines()
        assert len(grid) == 3 and grid[2].count("%") == 9

    def test_single_pair(self, small_run):
        _, corpus, lut, _ = small_run
        pairs = synthetic.merged_pairs(corpus)
        key = sorted(pairs)[0]
        rep = evaluate_system(lut, {key: pairs[key]})
        assert len(rep.records) == 1
        assert rep.mean_energy_err == rep.max_energy_err

    def test_samples_decompose(self, small_run):
        _, corpus, lut, _ = small_run
        pairs = synthetic.merged_pairs(corpus)
        _, samples = evaluate_system(lut, pairs, keep_samples=True)
        for key, est in samples.items():
            assert np.array_equal(est.total, est.cpu + est.gpu)
            cpu, gpu = pairs[key]
            np.testing.assert_array_equal(est.measured, cpu.power + gpu.power)

    def test_estimate_pair_rejects_swapped(self, small_run):
        _, corpus, lut, _ = small_run
        cpu, gpu = next(iter(synthetic.merged_pairs(corpus).values()))
        with pytest.raises(DataError):
            estimate_pair(lut, gpu, cpu)

    def test_empty(self, small_run):
        with pytest.raises(DataError):
            evaluate_system(small_run[2], {})

    def test_subsystem_records(self, small_run):
        _, corpus, lut, _ = small_run
        pairs = synthetic.merged_pairs(corpus)
        gpu = {g.frequency: g for _, g in pairs.values()}
        rep = evaluate_subsystem(lut, GPU, gpu)
        assert [r.f_gpu_hz for r in rep.records] == sorted(gpu)
        assert all(r.f_cpu_hz is None for r in rep.records)


class TestReport:
    def test_csv_round_trip(self, small_run):
        rep = small_run[3]
        assert report_from_csv(report_csv(rep)) == rep

    def test_csv_round_trip_with_blank_frequency(self):
        rep = EvaluationReport((EvaluationRecord(None, 5, 3, 1.5, 0.1, 2.0, 2.1, 5.0, 0),))
        assert report_from_csv(report_csv(rep)) == rep

    def test_bad_header(self):
        with pytest.raises(DataError):
            report_from_csv("a,b\n1,2\n")

    def test_text_lists_aggregates(self, small_run):
        csv_text, text = report(small_run[3])
        assert csv_text.startswith("f_cpu_hz,")
        assert "energy error: mean" in text and "power MAPE" in text

    def test_empty(self):
        with pytest.raises(DataError):
            report(EvaluationReport(()))


def _gpu_split(small_corpus, f):
    traces = synthetic.merged_corpus(small_corpus)[(GPU, f)]
    train, val = split(combine_workloads(traces), 0.6)
    return characterize(traces), train, val


class TestSweep:
    def test_single_point(self, small_corpus):
        ranking, train, val = _gpu_split(small_corpus, 300_000_000)
        res = sweep_predictor_count(ranking, CapacityOracle(3), 1, train, val)
        assert res.ks == (1,) and len(res.curve) == 1 and res.argmin == 1

    def test_reproducible(self, small_corpus):
        args = _gpu_split(small_corpus, 600_000_000)
        a = sweep_predictor_count(args[0], CapacityOracle(3), 5, *args[1:])
        b = sweep_predictor_count(args[0], CapacityOracle(3), 5, *args[1:])
        assert a == b

    def test_point_matches_direct_training(self, small_corpus):
        ranking, train, val = _gpu_split(small_corpus, 900_000_000)
        res = sweep_predictor_count(ranking, CapacityOracle(3), 2, train, val)
        m = train_model(train, select_counters(ranking, CapacityOracle(3), 2))
        assert res.curve[1] == energy_error(predict_trace(m, val), val.power, val.duration)

    def test_k_max_below_one(self, small_corpus):
        ranking, train, val = _gpu_split(small_corpus, 300_000_000)
        with pytest.raises(ValueError):
            sweep_predictor_count(ranking, CapacityOracle(3), 0, train, val)


def _latency_rows(lut, n=256, seed=0):
    pred = SystemPredictor.from_lut(lut, 1190 * MHZ, 829 * MHZ)
    return np.random.default_rng(seed).uniform(0, 1e9, (n, pred.width))


class TestLatency:
    def test_rejects_zero_repetitions(self):
        lut = synthetic.load_spec().ground_truth_lut(0)
        with pytest.raises(ValueError):
            measure_latency(lut, 1190 * MHZ, 829 * MHZ, _latency_rows(lut), repetitions=0)

    def test_rejects_bad_rows(self):
        lut = synthetic.load_spec().ground_truth_lut(0)
        with pytest.raises(DataError):
            measure_latency(lut, 1190 * MHZ, 829 * MHZ, np.zeros((3, 2)), repetitions=10)

    def test_independent_of_weight_values(self):
        spec = synthetic.load_spec()
        a, b = spec.ground_truth_lut(0), spec.ground_truth_lut(1)
        rows = _latency_rows(a)

        def median(lut):
            return statistics.median(
                measure_latency(lut, 1190 * MHZ, 829 * MHZ, rows, 200_000).mean_ns
                for _ in range(5))
        ta, tb = median(a), median(b)
        assert abs(ta - tb) <= 0.2 * max(ta, tb)


class TestAllocations:
    def test_compiled_loop_is_allocation_free(self):
        lut = synthetic.load_spec().ground_truth_lut(0)
        got = hot_path_allocations(lut, 1190 * MHZ, 829 * MHZ, _latency_rows(lut), 10_000)
        assert got["hot_path_alloc"] == 0 and got["py_bytes"] <= 0

    def test_detects_leaky_loop(self, monkeypatch):
        kept = []

        def leaky(cw, gw, C, J, rows, r, count, sink):
            for _ in range(count):
                kept.append(bytearray(64))
            return r
        monkeypatch.setattr(_kernels, "bench_batch", leaky)
        lut = synthetic.load_spec().ground_truth_lut(0)
        got = hot_path_allocations(lut, 1190 * MHZ, 829 * MHZ, _latency_rows(lut), 1000)
        assert got["py_bytes"] >= 64 * 999


def test_constant_model_error_is_exact():
    tr = gpu_trace({"x": np.linspace(0, 1e9, 10)}, np.full(10, 4.0))
    m = train_model(tr, ["x"])
    assert energy_error(predict_trace(m, tr), tr.power, tr.duration) == pytest.approx(0.0,
                                                                                      abs=1e-9)
