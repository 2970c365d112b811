import json
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import cpu_trace, gpu_trace, pipeline
from lutpower import synthetic
from lutpower.characterization import CounterSet
from lutpower.errors import CoverageError, DataError, MissingCounterError
from lutpower.training import (DEFAULT_SPLITS, DesignMatrix, UnderdeterminedWarning,
                               build_design, combine_workloads, fit_design, load_manifest,
                               split_corpus, train_lut, train_model)
from lutpower.trace import CPU, GPU, CounterId


def planted_gpu(rng, n, weights, base, f=1, workload="w"):
    cols = {f"g{j}": rng.uniform(0, 1e9, n) for j in range(len(weights))}
    power = base + sum(w * c for w, c in zip(weights, cols.values()))
    return gpu_trace(cols, power, frequency=f, workload=workload)


def planted_cpu(rng, n, cores, events, base, gates, weights, f=1):
    g = rng.uniform(0, 1, (n, cores))
    cols = {(i, e): rng.uniform(0, 1e9, n) for i in range(cores) for e in events}
    power = base + g @ gates
    for i in range(cores):
        for j, e in enumerate(events):
            power = power + weights[i, j] * cols[(i, e)]
    return cpu_trace(g, cols, power, frequency=f)


class TestDesign:
    def test_cpu_column_count(self):
        rng = np.random.default_rng(0)
        tr = planted_cpu(rng, 50, 8, ("a", "b", "c"), 1.0, np.zeros(8), np.zeros((8, 3)))
        d = build_design(tr, ["a", "b", "c"])
        assert d.shape == (50, 33)
        assert d.columns[:3] == ("const", "g0", "g1") and d.columns[9] == "c0.a"

    def test_gpu_column_count(self):
        tr = planted_gpu(np.random.default_rng(1), 20, [1e-9] * 8, 1.0)
        assert build_design(tr, [f"g{j}" for j in range(8)]).shape == (20, 9)

    def test_cpu_without_events(self):
        tr = planted_cpu(np.random.default_rng(2), 30, 4, ("a",), 1.0, np.ones(4), np.zeros((4, 1)))
        assert build_design(tr, []).shape == (30, 5)

    def test_accepts_counter_set_and_ids(self):
        tr = planted_gpu(np.random.default_rng(3), 20, [1e-9, 2e-9], 1.0)
        ids = (CounterId(GPU, None, "g1"),)
        a = build_design(tr, CounterSet(GPU, 1, ids))
        b = build_design(tr, ids)
        assert a.columns == b.columns == ("const", "g1")

    def test_missing_counter(self):
        tr = planted_gpu(np.random.default_rng(4), 10, [1e-9], 1.0)
        with pytest.raises(MissingCounterError, match="nope"):
            build_design(tr, ["nope"])

    def test_cpu_trace_needs_gating(self):
        tr = gpu_trace({"x": [1.0, 2.0]}, [1.0, 2.0])
        object.__setattr__(tr, "subsystem", CPU)
        with pytest.raises(DataError):
            build_design(tr, ["x"])

    def test_underdetermined_warns(self):
        tr = planted_gpu(np.random.default_rng(5), 3, [1e-9] * 4, 1.0)
        with pytest.warns(UnderdeterminedWarning):
            build_design(tr, [f"g{j}" for j in range(4)])


class TestFit:
    def test_zero_noise_gpu_recovery(self):
        rng = np.random.default_rng(6)
        w = rng.uniform(1e-10, 5e-9, 6)
        m = train_model(planted_gpu(rng, 200, w, 2.5), [f"g{j}" for j in range(6)])
        assert m.base == pytest.approx(2.5, rel=1e-6)
        np.testing.assert_allclose(m.weights, w, rtol=1e-6)

    def test_zero_noise_cpu_recovery(self):
        rng = np.random.default_rng(7)
        gates = rng.uniform(0.05, 0.3, 4)
        w = rng.uniform(1e-10, 1e-9, (4, 2))
        m = train_model(planted_cpu(rng, 300, 4, ("a", "b"), 1.2, gates, w), ["a", "b"])
        assert m.base == pytest.approx(1.2, rel=1e-6)
        np.testing.assert_allclose(m.gate_weights, gates, rtol=1e-6)
        np.testing.assert_allclose(m.activity_weights, w, rtol=1e-6)

    def test_constant_power_is_pure_intercept(self):
        rng = np.random.default_rng(8)
        tr = gpu_trace({"x": rng.uniform(0, 1e9, 40)}, np.full(40, 3.0))
        m = train_model(tr, ["x"])
        assert m.base == pytest.approx(3.0)
        assert m.weights[0] == pytest.approx(0.0, abs=1e-15)

    def test_negative_dependence_clamps_to_zero(self):
        rng = np.random.default_rng(9)
        x = rng.uniform(0, 1e9, 60)
        m = train_model(gpu_trace({"x": x}, 10 - 1e-9 * x), ["x"])
        assert m.weights[0] == 0.0

    def test_duplicated_column_matches_single_column_residual(self):
        rng = np.random.default_rng(10)
        x = rng.uniform(0, 1e9, 80)
        y = 1 + 2e-9 * x + 0.05 * rng.normal(size=80)
        one = DesignMatrix(("const", "x"), np.column_stack([np.ones(80), x]), y)
        two = DesignMatrix(("const", "x", "x'"), np.column_stack([np.ones(80), x, x]), y)
        r1, r2 = fit_design(one), fit_design(two)
        assert r2.residual_norm == pytest.approx(r1.residual_norm, rel=1e-9)
        assert r2.weights[1] + r2.weights[2] == pytest.approx(r1.weights[1], rel=1e-9)

    @given(seed=st.integers(0, 2**32 - 1))
    def test_row_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        n = 60
        x = rng.uniform(0, 1e9, (n, 3))
        y = 1 + x @ rng.uniform(0, 2e-9, 3) + 0.1 * rng.normal(size=n)
        cols = ("const", "a", "b", "c")
        base = fit_design(DesignMatrix(cols, np.column_stack([np.ones(n), x]), y))
        p = rng.permutation(n)
        perm = fit_design(DesignMatrix(cols, np.column_stack([np.ones(n), x[p]]), y[p]))
        np.testing.assert_allclose(perm.weights, base.weights, rtol=1e-7, atol=1e-15)
        assert (base.weights >= 0).all()

    def test_deterministic(self):
        rng = np.random.default_rng(11)
        tr = planted_gpu(rng, 100, [1e-9, 3e-9], 1.0)
        a, b = train_model(tr, ["g0", "g1"]), train_model(tr, ["g0", "g1"])
        assert a == b


def _two_freq_corpus(rng):
    corpus = {}
    for f in (1, 2):
        corpus[(GPU, f)] = [planted_gpu(rng, 50, [1e-9 * f, 2e-9], 1.0 + f, f, w)
                            for w in ("b", "a")]
    sets = {k: CounterSet(GPU, k[1], (CounterId(GPU, None, "g0"), CounterId(GPU, None, "g1")))
            for k in corpus}
    return corpus, sets


class TestLut:
    def test_one_model_per_key(self):
        corpus, sets = _two_freq_corpus(np.random.default_rng(12))
        lut = train_lut(corpus, sets, {GPU: 0.6})
        assert sorted(lut.gpu) == [1, 2] and not lut.cpu
        assert lut.provenance["splits"] == {GPU: 0.6}
        for f in (1, 2):
            assert lut.gpu[f].base == pytest.approx(1.0 + f, rel=1e-6)

    def test_single_entry(self):
        corpus, sets = _two_freq_corpus(np.random.default_rng(13))
        lut = train_lut({(GPU, 1): corpus[(GPU, 1)]}, sets)
        assert list(lut.gpu) == [1]

    def test_seventeen_entries_on_reference_platform(self):
        spec = synthetic.load_spec()
        _, _, lut = pipeline(spec, 0, sweep=False)
        assert (len(lut.cpu), len(lut.gpu)) == (3, 14)
        assert sorted(lut.cpu) == spec.frequencies()[CPU]
        assert sorted(lut.gpu) == spec.frequencies()[GPU]

    def test_same_inputs_same_lut(self):
        corpus, sets = _two_freq_corpus(np.random.default_rng(14))
        assert train_lut(corpus, sets, {GPU: 0.6}) == train_lut(corpus, sets, {GPU: 0.6})

    def test_missing_counter_set(self):
        corpus, sets = _two_freq_corpus(np.random.default_rng(15))
        del sets[(GPU, 2)]
        with pytest.raises(CoverageError, match="gpu@2Hz"):
            train_lut(corpus, sets)

    def test_required_frequency_missing(self):
        corpus, sets = _two_freq_corpus(np.random.default_rng(16))
        with pytest.raises(CoverageError, match="gpu@3Hz"):
            train_lut(corpus, sets, frequencies={GPU: [1, 2, 3]})

    def test_empty_corpus(self):
        with pytest.raises(CoverageError):
            train_lut({}, {})

    def test_workloads_stacked_in_name_order(self):
        corpus, _ = _two_freq_corpus(np.random.default_rng(17))
        stacked = combine_workloads(corpus[(GPU, 1)])
        assert len(stacked) == 100
        np.testing.assert_array_equal(stacked.power[:50], corpus[(GPU, 1)][1].power)

    def test_split_corpus_is_prefix(self):
        corpus, _ = _two_freq_corpus(np.random.default_rng(18))
        train, val = split_corpus(corpus, DEFAULT_SPLITS)
        assert len(train[(GPU, 1)]) == 60 and len(val[(GPU, 1)]) == 40
        full = combine_workloads(corpus[(GPU, 1)]).power
        np.testing.assert_array_equal(np.concatenate([train[(GPU, 1)].power,
                                                      val[(GPU, 1)].power]), full)


class TestManifest:
    def test_explicit_counters(self, tmp_path):
        m = {"traces": {"gpu": {"5": ["a.csv"]}}, "splits": {"gpu": 0.5},
             "counters": {"source": "explicit", "gpu": {"5": ["x", "y"]}}}
        (tmp_path / "m.json").write_text(json.dumps(m))
        got = load_manifest(tmp_path / "m.json")
        assert got["traces"] == {(GPU, 5): [tmp_path / "a.csv"]}
        assert got["counters"][(GPU, 5)].events == ["x", "y"]

    def test_default_counter_source(self, tmp_path):
        (tmp_path / "m.json").write_text(json.dumps({"traces": {}}))
        got = load_manifest(tmp_path / "m.json")
        assert got["counters"] == tmp_path / "counter_sets"
        assert got["splits"] == DEFAULT_SPLITS

    @pytest.mark.parametrize("body", ["{", json.dumps({}),
                                      json.dumps({"traces": {}, "splits": {"gpu": 1.5}}),
                                      json.dumps({"traces": {}, "counters": {"source": "x"}})])
    def test_malformed(self, tmp_path, body):
        (tmp_path / "m.json").write_text(body)
        with pytest.raises(DataError):
            load_manifest(tmp_path / "m.json")


def test_no_warning_when_determined():
    tr = planted_gpu(np.random.default_rng(19), 50, [1e-9], 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        train_model(tr, ["g0"])
